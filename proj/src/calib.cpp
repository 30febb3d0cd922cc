#include "fisheval/calib.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fisheval/error.hpp"

namespace fisheval {

Eigen::Vector3d lift_pixel(const Eigen::Vector2d& pixel, double a, const Eigen::Vector2d& center) {
  const Eigen::Vector2d d = pixel - center;
  const double r = d.norm();
  const double s = a * r;
  if (!(s <= 1.0)) throw Error(ErrorCode::OutOfDomain, "a * r exceeds 1");
  if (r == 0.0) return Eigen::Vector3d::UnitZ();
  const double theta = 2.0 * std::asin(s);
  const double st = std::sin(theta);
  return {st * d.x() / r, st * d.y() / r, std::cos(theta)};
}

std::vector<RayPair> rays_from_matches(const std::vector<PixelMatch>& matches, double a,
                                       const Eigen::Vector2d& center_a, const Eigen::Vector2d& center_b) {
  std::vector<RayPair> out;
  out.reserve(matches.size());
  for (const auto& m : matches) out.push_back({lift_pixel(m.a, a, center_a), lift_pixel(m.b, a, center_b)});
  return out;
}

namespace {

Eigen::Matrix3d project_essential(const Eigen::Matrix3d& F) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d s(1.0, 1.0, 0.0);
  Eigen::Matrix3d E = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  return E / E.norm();
}

inline void kron_row(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double* row) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) row[3 * i + j] = b[i] * a[j];
}

// Null vector of an 8x9 system by Gaussian elimination with full pivoting.
// Returns false when the rank is below 8.
bool kernel_8x9(std::array<std::array<double, 9>, 8>& m, std::array<double, 9>& x) {
  std::array<int, 9> col;
  for (int j = 0; j < 9; ++j) col[j] = j;
  double scale = 0.0;
  for (const auto& row : m)
    for (double v : row) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return false;
  const double tiny = scale * 1e-12;
  for (int k = 0; k < 8; ++k) {
    int pr = k, pc = k;
    double best = 0.0;
    for (int i = k; i < 8; ++i)
      for (int j = k; j < 9; ++j) {
        const double v = std::abs(m[i][col[j]]);
        if (v > best) best = v, pr = i, pc = j;
      }
    if (best <= tiny) return false;
    std::swap(m[k], m[pr]);
    std::swap(col[k], col[pc]);
    const double inv = 1.0 / m[k][col[k]];
    for (int i = k + 1; i < 8; ++i) {
      const double f = m[i][col[k]] * inv;
      if (f == 0.0) continue;
      for (int j = k; j < 9; ++j) m[i][col[j]] -= f * m[k][col[j]];
    }
  }
  std::array<double, 9> y{};
  y[8] = 1.0;
  for (int k = 7; k >= 0; --k) {
    double s = 0.0;
    for (int j = k + 1; j < 9; ++j) s += m[k][col[j]] * y[j];
    y[k] = -s / m[k][col[k]];
  }
  for (int j = 0; j < 9; ++j) x[col[j]] = y[j];
  return true;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Distinct sample indices from a generator seeded by (seed, iteration).
void draw_sample(std::uint64_t seed, int iteration, int n, int k, std::vector<int>& out) {
  std::uint64_t state = seed ^ (static_cast<std::uint64_t>(iteration) * 0xD1B54A32D192ED03ULL);
  out.clear();
  while (static_cast<int>(out.size()) < k) {
    const int idx = static_cast<int>((splitmix64(state) >> 11) % static_cast<std::uint64_t>(n));
    if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
  }
}

struct Score {
  int count = 0;
  double residual_sum = 0.0;
};

}  // namespace

Eigen::Matrix3d eight_point(const std::vector<RayPair>& pairs) {
  if (pairs.size() < 8) throw Error(ErrorCode::TooFewMatches, "eight-point needs at least 8 pairs");
  const int n = static_cast<int>(pairs.size());
  Eigen::Matrix<double, Eigen::Dynamic, 9> A(std::max(n, 9), 9);
  A.setZero();
  for (int i = 0; i < n; ++i) {
    double row[9];
    kron_row(pairs[i].a, pairs[i].b, row);
    for (int j = 0; j < 9; ++j) A(i, j) = row[j];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(7) <= 1e-9 * sv(0)) {
    throw Error(ErrorCode::Degenerate, "design matrix has a multi-dimensional null space");
  }
  const Eigen::Matrix<double, 9, 1> e = svd.matrixV().col(8);
  Eigen::Matrix3d F;
  F << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  return project_essential(F);
}

double angular_residual(const Eigen::Matrix3d& E, const RayPair& pair) {
  const Eigen::Vector3d l = E * pair.a;
  const double norm = l.norm();
  if (norm == 0.0) return 0.0;
  return std::abs(std::asin(std::clamp(pair.b.dot(l) / (norm * pair.b.norm()), -1.0, 1.0)));
}

double symmetric_angular_residual(const Eigen::Matrix3d& E, const RayPair& pair) {
  return 0.5 * (angular_residual(E, pair) + angular_residual(E.transpose(), {pair.b, pair.a}));
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> epipoles_from_E(const Eigen::Matrix3d& E) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d left = svd.matrixV().col(2).normalized();
  Eigen::Vector3d right = svd.matrixU().col(2).normalized();
  if (left.x() < 0) left = -left;
  if (right.x() < 0) right = -right;
  return {left, right};
}

std::vector<double> make_a_grid(double a_nominal, int n, double span) {
  if (n < 1 || !(a_nominal > 0.0)) throw Error(ErrorCode::BadConfig, "a grid needs n >= 1 and a positive nominal");
  if (n == 1) return {a_nominal};
  std::vector<double> grid(static_cast<std::size_t>(n));
  const double half = 0.5 * (n - 1);
  for (int i = 0; i < n; ++i) grid[i] = a_nominal * (1.0 + span * (i - half) / half);
  return grid;
}

CalibEstimate ransac_calibrate(const std::vector<PixelMatch>& matches, const CalibConfig& config) {
  const int n = static_cast<int>(matches.size());
  if (config.sample_size != 8) throw Error(ErrorCode::BadConfig, "sample size must be 8");
  if (n < 8) throw Error(ErrorCode::TooFewMatches, "need at least 8 matches");
  if (config.a_grid.empty()) throw Error(ErrorCode::BadConfig, "empty a grid");
  if (config.max_iterations < 1) throw Error(ErrorCode::BadConfig, "max_iterations must be positive");
  const int n_grid = static_cast<int>(config.a_grid.size());

  // Rays for every (grid value, match); NaN marks a r > 1.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<RayPair>> rays(static_cast<std::size_t>(n_grid));
  for (int g = 0; g < n_grid; ++g) {
    rays[g].resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      auto lift = [&](const Eigen::Vector2d& p, const Eigen::Vector2d& c) -> Eigen::Vector3d {
        if (config.a_grid[g] * (p - c).norm() > 1.0) return Eigen::Vector3d::Constant(nan);
        return lift_pixel(p, config.a_grid[g], c);
      };
      rays[g][i] = {lift(matches[i].a, config.center_a), lift(matches[i].b, config.center_b)};
    }
  }

  const double sin_thr = std::sin(config.inlier_threshold);
  auto score = [&](const Eigen::Matrix3d& E, int g, int to_beat) {
    Score s;
    int misses = 0;
    const int allowed = n - to_beat;
    for (const auto& p : rays[g]) {
      const Eigen::Vector3d l = E * p.a;
      const double num = std::abs(p.b.dot(l));
      const double den = l.norm();
      if (num <= sin_thr * den) {
        ++s.count;
        s.residual_sum += std::asin(std::min(1.0, num / den));
      } else if (++misses > allowed) {
        break;  // cannot reach the current best count
      }
    }
    return s;
  };

  int best_g = -1;
  Score best;
  Eigen::Matrix3d best_E = Eigen::Matrix3d::Zero();
  int needed = config.max_iterations;
  int iter = 0;
  std::vector<int> sample;
  std::vector<double> det(static_cast<std::size_t>(n_grid));
  std::vector<char> solved(static_cast<std::size_t>(n_grid));
  std::vector<char> region(static_cast<std::size_t>(n_grid));
  std::vector<Eigen::Matrix3d> solutions(static_cast<std::size_t>(n_grid));
  // Unconstrained 8-point solution at grid value g; det is NaN on failure.
  auto solve = [&](int g) {
    solved[g] = 1;
    det[g] = nan;
    std::array<std::array<double, 9>, 8> m;
    for (int k = 0; k < 8; ++k) {
      const RayPair& p = rays[g][sample[k]];
      if (std::isnan(p.a.x()) || std::isnan(p.b.x())) return;
      kron_row(p.a, p.b, m[k].data());
    }
    std::array<double, 9> x;
    if (!kernel_8x9(m, x)) return;
    Eigen::Matrix3d F;
    F << x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8];
    solutions[g] = F / F.norm();
    det[g] = solutions[g].determinant();
  };
  auto defect = [&](int g) {
    if (g < 0 || g >= n_grid) return std::numeric_limits<double>::infinity();
    if (!solved[g]) solve(g);
    return std::isnan(det[g]) ? std::numeric_limits<double>::infinity() : std::abs(det[g]);
  };
  // Coarse pass over every kCoarse-th grid value, refined where the
  // (consistently signed) determinant changes sign or has a local minimum.
  constexpr int kCoarse = 4;
  std::vector<int> coarse;
  for (int g = 0; g < n_grid; g += kCoarse) coarse.push_back(g);
  if (coarse.back() != n_grid - 1) coarse.push_back(n_grid - 1);
  const int n_coarse = static_cast<int>(coarse.size());
  for (; iter < std::min(needed, config.max_iterations); ++iter) {
    draw_sample(config.seed, iter, n, 8, sample);
    std::fill(solved.begin(), solved.end(), 0);
    std::fill(region.begin(), region.end(), 0);
    int prev = -1;
    for (int g : coarse) {
      solve(g);
      if (std::isnan(det[g])) continue;
      if (prev >= 0 && (solutions[g].array() * solutions[prev].array()).sum() < 0) {
        solutions[g] = -solutions[g];
        det[g] = -det[g];
      }
      prev = g;
    }
    auto mark = [&](int k) {
      if (k < 0 || k + 1 >= n_coarse) return;
      for (int g = coarse[k]; g <= coarse[k + 1]; ++g) region[g] = 1;
    };
    for (int k = 0; k < n_coarse; ++k) {
      const double d = defect(coarse[k]);
      const double dl = k > 0 ? defect(coarse[k - 1]) : std::numeric_limits<double>::infinity();
      const double dr = k + 1 < n_coarse ? defect(coarse[k + 1]) : std::numeric_limits<double>::infinity();
      if (std::isfinite(d) && d <= dl && d < dr) mark(k - 1), mark(k);
      if (k + 1 < n_coarse) {
        const double a0 = det[coarse[k]], a1 = det[coarse[k + 1]];
        if (std::isnan(a0) || std::isnan(a1) || (a0 < 0) != (a1 < 0)) mark(k);
      }
    }
    for (int g = 0; g < n_grid; ++g) {
      if (!region[g]) continue;
      const double d = defect(g);
      if (!std::isfinite(d)) continue;
      if (!(d <= defect(g - 1)) || !(d < defect(g + 1))) continue;
      const Eigen::Matrix3d E = project_essential(solutions[g]);
      const Score s = score(E, g, best.count);
      const bool better = s.count > best.count ||
                          (s.count == best.count && s.count > 0 &&
                           s.residual_sum / s.count < best.residual_sum / best.count);
      if (!better) continue;
      best = s;
      best_g = g;
      best_E = E;
      const double w = static_cast<double>(best.count) / n;
      const double p_good = std::pow(w, 8);
      if (p_good >= 1.0) {
        needed = iter + 1;
      } else if (p_good > 0.0) {
        const double k = std::log(1.0 - config.confidence) / std::log1p(-p_good);
        needed = static_cast<int>(std::min<double>(config.max_iterations, std::ceil(k)));
      }
    }
  }
  if (best_g < 0 || best.count < 8) throw Error(ErrorCode::NoModel, "no model reached 8 inliers");

  CalibEstimate est;
  est.a = config.a_grid[best_g];
  est.a_index = best_g;
  est.iterations_used = iter;
  std::vector<RayPair> inlier_rays;
  for (int i = 0; i < n; ++i) {
    if (angular_residual(best_E, rays[best_g][i]) <= config.inlier_threshold) {
      est.inliers.push_back(i);
      inlier_rays.push_back(rays[best_g][i]);
    }
  }
  est.essential = best_E;
  try {
    est.essential = eight_point(inlier_rays);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Degenerate) throw;
  }
  double sum = 0.0;
  for (const auto& p : inlier_rays) sum += angular_residual(est.essential, p);
  est.epsilon = sum / static_cast<double>(inlier_rays.size());
  std::tie(est.epipole_left, est.epipole_right) = epipoles_from_E(est.essential);
  return est;
}

StabilityStats stability_stats(const std::vector<CalibEstimate>& runs, int n_det_min, int n_attempted,
                               double a_scale) {
  if (runs.size() < 2) throw Error(ErrorCode::TooFewRuns, "statistics need at least two runs");
  const double n = static_cast<double>(runs.size());
  auto stat = [&](auto get) {
    double mean = 0.0;
    for (const auto& r : runs) mean += get(r);
    mean /= n;
    double var = 0.0;
    for (const auto& r : runs) var += (get(r) - mean) * (get(r) - mean);
    return MeanStd{mean, std::sqrt(var / n)};
  };
  StabilityStats s;
  s.runs = static_cast<int>(runs.size());
  s.a = stat([&](const CalibEstimate& r) { return r.a * a_scale; });
  s.x_el = stat([](const CalibEstimate& r) { return r.epipole_left.x(); });
  s.y_el = stat([](const CalibEstimate& r) { return r.epipole_left.y(); });
  s.z_el = stat([](const CalibEstimate& r) { return r.epipole_left.z(); });
  s.x_er = stat([](const CalibEstimate& r) { return r.epipole_right.x(); });
  s.y_er = stat([](const CalibEstimate& r) { return r.epipole_right.y(); });
  s.z_er = stat([](const CalibEstimate& r) { return r.epipole_right.z(); });
  s.epsilon = stat([](const CalibEstimate& r) { return r.epsilon; });
  s.avg_inliers = stat([](const CalibEstimate& r) { return static_cast<double>(r.inliers.size()); }).mean;
  s.avg_iterations = stat([](const CalibEstimate& r) { return static_cast<double>(r.iterations_used); }).mean;
  if (n_det_min > 0) {
    s.attempted_over_detections = static_cast<double>(n_attempted) / n_det_min;
    s.inliers_over_detections = s.avg_inliers / n_det_min;
  }
  if (n_attempted > 0) s.inliers_over_attempted = s.avg_inliers / n_attempted;
  return s;
}

std::string format_stability_row(const std::string& setup, const StabilityStats& s) {
  char buf[1024];
  std::snprintf(buf, sizeof(buf),
                "%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6e,%.6e,%.3f,%.1f,%.6f,"
                "%.6f,%.6f",
                setup.c_str(), s.runs, s.a.mean, s.a.std, s.x_el.mean, s.x_el.std, s.y_el.mean, s.y_el.std,
                s.z_el.mean, s.z_el.std, s.x_er.mean, s.x_er.std, s.y_er.mean, s.y_er.std, s.z_er.mean, s.z_er.std,
                s.epsilon.mean, s.epsilon.std, s.avg_inliers, s.avg_iterations, s.attempted_over_detections,
                s.inliers_over_detections, s.inliers_over_attempted);
  return buf;
}

}  // namespace fisheval
