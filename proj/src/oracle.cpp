#include "fisheval/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "fisheval/error.hpp"

namespace fisheval {

int BackProjection::valid_count() const {
  return static_cast<int>(std::count_if(points.begin(), points.end(), [](const auto& p) { return p.has_value(); }));
}

Eigen::Vector2d to_fisheye_coords(const Keypoint& kp, const std::optional<PolarMeta>& polar) {
  const Eigen::Vector2d xy(kp.x, kp.y);
  if (kp.frame == ImageFrame::Fisheye) return xy;
  if (!polar) throw Error(ErrorCode::ModelMismatch, "polar detection without polar metadata");
  return map_coords(PolarDirection::PolarToFisheye, xy, *polar);
}

BackProjection back_project_detections(const KeypointList& detections, const ViewGeometry& geometry) {
  if (geometry.distance == nullptr) throw Error(ErrorCode::MissingDistanceMap, "view has no distance map");
  const DistanceMap& dist = *geometry.distance;
  BackProjection out;
  out.camera_center = geometry.pose.camera_center();
  out.points.reserve(detections.size());
  for (const auto& kp : detections) {
    std::optional<Eigen::Vector3d> point;
    try {
      const Eigen::Vector2d pixel = to_fisheye_coords(kp, geometry.polar);
      if (const auto range = dist.lookup_nearest(pixel)) {
        point = back_project(geometry.model, geometry.pose, pixel, *range, dist.cap);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OutOfCircle && e.code() != ErrorCode::OutOfRange &&
          e.code() != ErrorCode::InvalidDistance) {
        throw;
      }
    }
    out.points.push_back(point);
  }
  return out;
}

double separation(MatchCriterion::Kind kind, const Eigen::Vector3d& pa, const Eigen::Vector3d& pb,
                  const Eigen::Vector3d& center_a, const Eigen::Vector3d& center_b) {
  if (kind == MatchCriterion::Kind::Sphere) return (pa - pb).norm();
  auto angle_at = [&](const Eigen::Vector3d& c) {
    const Eigen::Vector3d u = pa - c;
    const Eigen::Vector3d v = pb - c;
    return std::atan2(u.cross(v).norm(), u.dot(v));
  };
  return std::max(angle_at(center_a), angle_at(center_b));
}

std::vector<OracleMatch> candidate_pairs(const BackProjection& a, const BackProjection& b,
                                         const MatchCriterion& criterion) {
  if (!(criterion.threshold > 0.0)) throw Error(ErrorCode::OutOfRange, "match threshold must be positive");
  std::vector<OracleMatch> out;
  const double tau = criterion.threshold;
  const double tau2 = tau * tau;
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    if (!a.points[i]) continue;
    const Eigen::Vector3d& pa = *a.points[i];
    for (std::size_t j = 0; j < b.points.size(); ++j) {
      if (!b.points[j]) continue;
      const Eigen::Vector3d& pb = *b.points[j];
      if (criterion.kind == MatchCriterion::Kind::Sphere) {
        const double d2 = (pa - pb).squaredNorm();
        if (d2 <= tau2) {
          const double d = std::sqrt(d2);
          if (d <= tau) out.push_back({static_cast<int>(i), static_cast<int>(j), d});
        }
      } else {
        const double s = separation(criterion.kind, pa, pb, a.camera_center, b.camera_center);
        if (s <= tau) out.push_back({static_cast<int>(i), static_cast<int>(j), s});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const OracleMatch& x, const OracleMatch& y) {
    if (x.separation != y.separation) return x.separation < y.separation;
    if (x.index_a != y.index_a) return x.index_a < y.index_a;
    return x.index_b < y.index_b;
  });
  return out;
}

std::vector<OracleMatch> greedy_one_to_one(const std::vector<OracleMatch>& sorted_candidates) {
  std::vector<OracleMatch> out;
  int max_a = -1, max_b = -1;
  for (const auto& m : sorted_candidates) {
    max_a = std::max(max_a, m.index_a);
    max_b = std::max(max_b, m.index_b);
  }
  std::vector<char> used_a(static_cast<std::size_t>(max_a + 1), 0);
  std::vector<char> used_b(static_cast<std::size_t>(max_b + 1), 0);
  for (const auto& m : sorted_candidates) {
    if (used_a[m.index_a] || used_b[m.index_b]) continue;
    used_a[m.index_a] = 1;
    used_b[m.index_b] = 1;
    out.push_back(m);
  }
  return out;
}

MatchSet ground_truth_matches(BackProjection a, BackProjection b, const MatchCriterion& criterion) {
  MatchSet set;
  set.criterion = criterion;
  set.n_det_a = static_cast<int>(a.points.size());
  set.n_det_b = static_cast<int>(b.points.size());
  set.matches = greedy_one_to_one(candidate_pairs(a, b, criterion));
  set.proj_a = std::move(a);
  set.proj_b = std::move(b);
  return set;
}

MatchSet ground_truth_matches(const KeypointList& det_a, const KeypointList& det_b, const ViewGeometry& geo_a,
                              const ViewGeometry& geo_b, const MatchCriterion& criterion) {
  return ground_truth_matches(back_project_detections(det_a, geo_a), back_project_detections(det_b, geo_b),
                              criterion);
}

namespace {

std::vector<OracleMatch> attempted_candidates(const BackProjection& a, const BackProjection& b,
                                              const std::vector<AttemptedMatch>& attempted,
                                              const MatchCriterion& criterion) {
  std::vector<OracleMatch> out;
  for (const auto& m : attempted) {
    if (m.index_a < 0 || m.index_b < 0 || m.index_a >= static_cast<int>(a.points.size()) ||
        m.index_b >= static_cast<int>(b.points.size())) {
      throw Error(ErrorCode::OutOfRange, "attempted match refers to an unknown detection");
    }
    const auto& pa = a.points[m.index_a];
    const auto& pb = b.points[m.index_b];
    if (!pa || !pb) continue;
    const double s = separation(criterion.kind, *pa, *pb, a.camera_center, b.camera_center);
    if (s <= criterion.threshold) out.push_back({m.index_a, m.index_b, s});
  }
  std::sort(out.begin(), out.end(), [](const OracleMatch& x, const OracleMatch& y) {
    if (x.separation != y.separation) return x.separation < y.separation;
    if (x.index_a != y.index_a) return x.index_a < y.index_a;
    return x.index_b < y.index_b;
  });
  return out;
}

MetricRow make_row(double tolerance, int n_matches, int n_correct, int n_det_a, int n_det_b) {
  const int n_min = std::min(n_det_a, n_det_b);
  if (n_min <= 0) throw Error(ErrorCode::ZeroDetections, "one of the views has no detections");
  MetricRow row;
  row.tolerance = tolerance;
  row.n_matches = n_matches;
  row.n_correct = n_correct;
  row.n_det_min = n_min;
  row.repeatability = static_cast<double>(n_matches) / n_min;
  row.matching_score = static_cast<double>(n_correct) / n_min;
  row.drop = row.repeatability - row.matching_score;
  return row;
}

}  // namespace

std::vector<OracleMatch> correct_attempted(const MatchSet& set, const std::vector<AttemptedMatch>& attempted,
                                           const MatchCriterion& criterion) {
  return greedy_one_to_one(attempted_candidates(set.proj_a, set.proj_b, attempted, criterion));
}

MetricRow metric_scores(const MatchSet& set, const std::vector<AttemptedMatch>& attempted,
                        const MatchCriterion& criterion, int n_det_a, int n_det_b) {
  const int n_matches = static_cast<int>(std::count_if(set.matches.begin(), set.matches.end(), [&](const auto& m) {
    return m.separation <= criterion.threshold;
  }));
  const int n_correct = static_cast<int>(correct_attempted(set, attempted, criterion).size());
  return make_row(criterion.threshold, n_matches, n_correct, n_det_a, n_det_b);
}

std::vector<MetricRow> sweep_metrics(const BackProjection& a, const BackProjection& b,
                                     const std::vector<AttemptedMatch>& attempted, MatchCriterion::Kind kind,
                                     const std::vector<double>& tolerances, int n_det_a, int n_det_b) {
  if (tolerances.empty()) return {};
  if (!std::is_sorted(tolerances.begin(), tolerances.end())) {
    throw Error(ErrorCode::BadConfig, "tolerances must be ascending");
  }
  const MatchCriterion widest{kind, tolerances.back()};
  // Greedy decisions over a separation-sorted list only depend on earlier
  // entries, so each tolerance's selection is a prefix of the widest one.
  const auto matches = greedy_one_to_one(candidate_pairs(a, b, widest));
  const auto correct = greedy_one_to_one(attempted_candidates(a, b, attempted, widest));
  std::vector<MetricRow> rows;
  for (double tau : tolerances) {
    auto within = [tau](const OracleMatch& m) { return m.separation <= tau; };
    rows.push_back(make_row(tau, static_cast<int>(std::count_if(matches.begin(), matches.end(), within)),
                            static_cast<int>(std::count_if(correct.begin(), correct.end(), within)), n_det_a,
                            n_det_b));
  }
  return rows;
}

std::string PipelineConfig::setup_string() const {
  std::string s = detector.label() + (polar ? " pol" : " nopol");
  if (descriptor) s += " " + descriptor->label();
  if (matcher) s += " " + matcher->label();
  if (criterion == MatchCriterion::Kind::Angular) s += " angular";
  return s;
}

namespace {

struct ViewFeatures {
  KeypointList detections;
  std::vector<Eigen::Vector2d> fisheye;
  std::optional<PolarMeta> polar;
  std::optional<DescribeResult> described;
};

ViewFeatures process_view(const PipelineConfig& config, const CameraView& view) {
  ViewFeatures vf;
  if (config.polar) {
    PolarImage rect = polar_rectify(view.image, view.model);
    vf.polar = rect.meta;
    vf.detections = detect(rect.pixels, config.detector);
    for (auto& kp : vf.detections) kp.frame = ImageFrame::Polar;
    if (config.descriptor) vf.described = describe(rect.pixels, vf.detections, *config.descriptor);
  } else {
    vf.detections = detect(view.image, config.detector);
    if (config.descriptor) vf.described = describe(view.image, vf.detections, *config.descriptor);
  }
  for (const auto& kp : vf.detections) {
    try {
      vf.fisheye.push_back(to_fisheye_coords(kp, vf.polar));
    } catch (const Error&) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      vf.fisheye.emplace_back(nan, nan);
    }
  }
  return vf;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const StereoPair& pair,
                            const std::vector<double>& tolerances) {
  if (config.matcher && !config.descriptor) {
    throw Error(ErrorCode::BadConfig, "a matcher requires a descriptor");
  }
  ViewFeatures fa = process_view(config, pair.front);
  ViewFeatures fb = process_view(config, pair.rear);
  PipelineResult result;
  if (config.matcher && fa.described && fb.described) {
    for (const auto& m : match(fa.described->descriptors, fb.described->descriptors, *config.matcher)) {
      result.attempted.push_back({fa.described->kept[m.index_a], fb.described->kept[m.index_b], m.distance});
    }
  }
  ViewGeometry ga = ViewGeometry::of(pair.front);
  ViewGeometry gb = ViewGeometry::of(pair.rear);
  ga.polar = fa.polar;
  gb.polar = fb.polar;
  const BackProjection pa = back_project_detections(fa.detections, ga);
  const BackProjection pb = back_project_detections(fb.detections, gb);
  result.rows = sweep_metrics(pa, pb, result.attempted, config.criterion, tolerances,
                              static_cast<int>(fa.detections.size()), static_cast<int>(fb.detections.size()));
  result.det_a = std::move(fa.detections);
  result.det_b = std::move(fb.detections);
  result.fisheye_a = std::move(fa.fisheye);
  result.fisheye_b = std::move(fb.fisheye);
  return result;
}

std::vector<MetricRow> sweep(const PipelineConfig& config, const StereoPair& pair,
                             const std::vector<double>& tolerances) {
  return run_pipeline(config, pair, tolerances).rows;
}

double spreading_score(const std::vector<Eigen::Vector2d>& points, const FisheyeModeld& model,
                       const SpreadingGrid& cells, int fill_threshold) {
  if (cells.n_radial < 1 || cells.n_azimuthal < 1) {
    throw Error(ErrorCode::BadConfig, "spreading grid needs at least one cell per axis");
  }
  const int total = cells.n_radial * cells.n_azimuthal;
  std::vector<int> counts(static_cast<std::size_t>(total), 0);
  const double r_max = model.circle_radius;
  for (const auto& p : points) {
    const Eigen::Vector2d d = p - model.center;
    const double r = d.norm();
    if (!(r <= r_max)) continue;
    // Equal-area rings: edge k sits at r_max * sqrt(k / n).
    const int ring = std::min(cells.n_radial - 1, static_cast<int>(std::floor(cells.n_radial * (r / r_max) * (r / r_max))));
    double phi = std::atan2(d.y(), d.x());
    if (phi < 0) phi += 2.0 * std::numbers::pi;
    const int sector = std::min(cells.n_azimuthal - 1,
                                static_cast<int>(std::floor(phi / (2.0 * std::numbers::pi) * cells.n_azimuthal)));
    ++counts[ring * cells.n_azimuthal + sector];
  }
  const auto occupied = std::count_if(counts.begin(), counts.end(), [&](int c) { return c >= fill_threshold; });
  return static_cast<double>(occupied) / total;
}

std::string format_metric_row(const MetricRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%g,%d,%.6f,%d,%.6f,%.6f,%d", row.tolerance, row.n_matches, row.repeatability,
                row.n_correct, row.matching_score, row.drop, row.n_det_min);
  return buf;
}

}  // namespace fisheval
