#include "fisheval/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "fisheval/error.hpp"

namespace fisheval {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kDogBorder = 5;
constexpr int kMaxInterpSteps = 5;
constexpr int kOriBins = 36;
constexpr double kOriPeakRatio = 0.8;
constexpr double kOriSigmaFactor = 1.5;
constexpr double kOriRadiusFactor = 3.0 * kOriSigmaFactor;
constexpr int kDescWidth = 4;
constexpr int kDescBins = 8;
constexpr double kDescHistScale = 3.0;
constexpr double kDescMagClamp = 0.2;
constexpr double kRotBinaryRadiusPerSigma = 6.0;

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

GrayImage gaussian_blur(const GrayImage& src, double sigma) {
  if (sigma < 1e-3) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * k * k / (sigma * sigma));
    kernel[k + radius] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : kernel) v = static_cast<float>(v / sum);

  const int rows = static_cast<int>(src.rows());
  const int cols = static_cast<int>(src.cols());
  GrayImage tmp(rows, cols);
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * src(y, reflect101(x + k, cols));
      tmp(y, x) = acc;
    }
  }
  GrayImage out(rows, cols);
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp(reflect101(y + k, rows), x);
      out(y, x) = acc;
    }
  }
  return out;
}

GrayImage downsample2(const GrayImage& src) {
  const Eigen::Index rows = (src.rows() + 1) / 2;
  const Eigen::Index cols = (src.cols() + 1) / 2;
  GrayImage out(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y)
    for (Eigen::Index x = 0; x < cols; ++x) out(y, x) = src(2 * y, 2 * x);
  return out;
}

float bilinear(const GrayImage& img, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double ax = x - x0;
  const double ay = y - y0;
  const int cols = static_cast<int>(img.cols());
  const int rows = static_cast<int>(img.rows());
  auto at = [&](int yy, int xx) {
    return img(std::clamp(yy, 0, rows - 1), std::clamp(xx, 0, cols - 1));
  };
  return static_cast<float>((at(y0, x0) * (1 - ax) + at(y0, x0 + 1) * ax) * (1 - ay) +
                            (at(y0 + 1, x0) * (1 - ax) + at(y0 + 1, x0 + 1) * ax) * ay);
}

GrayImage resize_bilinear(const GrayImage& src, int rows, int cols) {
  GrayImage out(rows, cols);
  const double sx = static_cast<double>(src.cols()) / cols;
  const double sy = static_cast<double>(src.rows()) / rows;
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) out(y, x) = bilinear(src, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
  return out;
}

// Plateau-safe 3x3 maximum: strictly greater than earlier neighbours in
// raster order, greater or equal to later ones.
template <typename Map>
bool is_local_max(const Map& m, int y, int x) {
  const auto v = m(y, x);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dy == 0 && dx == 0) continue;
      const auto n = m(y + dy, x + dx);
      const bool earlier = dy < 0 || (dy == 0 && dx < 0);
      if (earlier ? !(v > n) : !(v >= n)) return false;
    }
  }
  return true;
}

void sort_keypoints(KeypointList& kps) {
  std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    if (a.scale != b.scale) return a.scale < b.scale;
    return a.orientation < b.orientation;
  });
}

KeypointList with_orientations(const GrayImage& image, const KeypointList& raw, double sigma) {
  const ScaleSpace space = build_scale_space(image, sigma, 3,
                                             default_octave_count(static_cast<int>(image.cols()),
                                                                  static_cast<int>(image.rows())));
  KeypointList out;
  out.reserve(raw.size());
  for (const auto& kp : raw) {
    for (double ori : dominant_orientations(space, kp)) {
      Keypoint k = kp;
      k.orientation = ori;
      out.push_back(k);
    }
  }
  return out;
}

// --- DoG -------------------------------------------------------------------

KeypointList detect_dog(const GrayImage& image, const DetectorParams& p) {
  const int s = p.n_octave_layers;
  const ScaleSpace space = build_scale_space(
      image, p.sigma, s, default_octave_count(static_cast<int>(image.cols()), static_cast<int>(image.rows())));
  const double threshold = p.contrast_threshold / s;
  const double prefilter = 0.5 * threshold;
  const double edge = p.edge_threshold;
  KeypointList out;

  for (std::size_t o = 0; o < space.octaves.size(); ++o) {
    const auto& gauss = space.octaves[o];
    std::vector<GrayImage> dog;
    for (int i = 0; i + 1 < static_cast<int>(gauss.size()); ++i) dog.push_back(gauss[i + 1] - gauss[i]);
    const int rows = static_cast<int>(dog[0].rows());
    const int cols = static_cast<int>(dog[0].cols());
    if (rows <= 2 * kDogBorder || cols <= 2 * kDogBorder) continue;

    for (int layer = 1; layer <= s; ++layer) {
      for (int r = kDogBorder; r < rows - kDogBorder; ++r) {
        for (int c = kDogBorder; c < cols - kDogBorder; ++c) {
          const float val = dog[layer](r, c);
          if (std::abs(val) <= prefilter) continue;
          bool extremum = true;
          for (int dl = -1; dl <= 1 && extremum; ++dl) {
            for (int dy = -1; dy <= 1 && extremum; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                if (dl == 0 && dy == 0 && dx == 0) continue;
                const float n = dog[layer + dl](r + dy, c + dx);
                if (val > 0 ? n > val : n < val) {
                  extremum = false;
                  break;
                }
              }
            }
          }
          if (!extremum) continue;

          // Quadratic refinement in (x, y, scale).
          int li = layer, ri = r, ci = c;
          Eigen::Vector3d offset;
          Eigen::Vector3d grad;
          double dxx = 0, dyy = 0, dxy = 0;
          bool converged = false;
          for (int step = 0; step < kMaxInterpSteps; ++step) {
            const auto& d0 = dog[li - 1];
            const auto& d1 = dog[li];
            const auto& d2 = dog[li + 1];
            grad << (d1(ri, ci + 1) - d1(ri, ci - 1)) * 0.5, (d1(ri + 1, ci) - d1(ri - 1, ci)) * 0.5,
                (d2(ri, ci) - d0(ri, ci)) * 0.5;
            const double v2 = 2.0 * d1(ri, ci);
            dxx = d1(ri, ci + 1) + d1(ri, ci - 1) - v2;
            dyy = d1(ri + 1, ci) + d1(ri - 1, ci) - v2;
            const double dss = d2(ri, ci) + d0(ri, ci) - v2;
            dxy = (d1(ri + 1, ci + 1) - d1(ri + 1, ci - 1) - d1(ri - 1, ci + 1) + d1(ri - 1, ci - 1)) * 0.25;
            const double dxs = (d2(ri, ci + 1) - d2(ri, ci - 1) - d0(ri, ci + 1) + d0(ri, ci - 1)) * 0.25;
            const double dys = (d2(ri + 1, ci) - d2(ri - 1, ci) - d0(ri + 1, ci) + d0(ri - 1, ci)) * 0.25;
            Eigen::Matrix3d H;
            H << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
            offset = -H.fullPivLu().solve(grad);
            if (!offset.allFinite()) break;
            if (offset.cwiseAbs().maxCoeff() < 0.5) {
              converged = true;
              break;
            }
            if (offset.cwiseAbs().maxCoeff() > 1e6) break;
            ci += static_cast<int>(std::lround(offset.x()));
            ri += static_cast<int>(std::lround(offset.y()));
            li += static_cast<int>(std::lround(offset.z()));
            if (li < 1 || li > s || ri < kDogBorder || ri >= rows - kDogBorder || ci < kDogBorder ||
                ci >= cols - kDogBorder) {
              break;
            }
          }
          if (!converged) continue;

          const double contrast = dog[li](ri, ci) + 0.5 * grad.dot(offset);
          if (std::abs(contrast) < threshold) continue;
          const double tr = dxx + dyy;
          const double det = dxx * dyy - dxy * dxy;
          if (det <= 0 || tr * tr * edge >= (edge + 1) * (edge + 1) * det) continue;

          const double octave_scale = std::ldexp(1.0, static_cast<int>(o));
          Keypoint kp;
          kp.x = (ci + offset.x()) * octave_scale;
          kp.y = (ri + offset.y()) * octave_scale;
          kp.scale = p.sigma * std::pow(2.0, (li + offset.z()) / s) * octave_scale;
          kp.response = std::abs(contrast);
          out.push_back(kp);
        }
      }
    }
  }
  return out;
}

// --- Harris ----------------------------------------------------------------

Eigen::MatrixXd harris_response(const GrayImage& img, int block, double k) {
  const int rows = static_cast<int>(img.rows());
  const int cols = static_cast<int>(img.cols());
  Eigen::MatrixXd ixx = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::MatrixXd iyy = ixx;
  Eigen::MatrixXd ixy = ixx;
  auto px = [&](int y, int x) { return static_cast<double>(img(reflect101(y, rows), reflect101(x, cols))); };
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1) - px(y - 1, x - 1) -
                         2 * px(y, x - 1) - px(y + 1, x - 1)) / 8.0;
      const double gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1) - px(y - 1, x - 1) -
                         2 * px(y - 1, x) - px(y - 1, x + 1)) / 8.0;
      ixx(y, x) = gx * gx;
      iyy(y, x) = gy * gy;
      ixy(y, x) = gx * gy;
    }
  }
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(rows, cols);
  const int lo = -(block / 2);
  const int hi = lo + block - 1;
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      double a = 0, b = 0, c = 0;
      for (int dy = lo; dy <= hi; ++dy) {
        const int yy = reflect101(y + dy, rows);
        for (int dx = lo; dx <= hi; ++dx) {
          const int xx = reflect101(x + dx, cols);
          a += ixx(yy, xx);
          b += iyy(yy, xx);
          c += ixy(yy, xx);
        }
      }
      R(y, x) = a * b - c * c - k * (a + b) * (a + b);
    }
  }
  return R;
}

KeypointList detect_harris(const GrayImage& image, const DetectorParams& p) {
  const Eigen::MatrixXd R = harris_response(image, p.block_size, p.harris_k);
  const int border = p.block_size / 2 + 2;
  KeypointList out;
  for (int y = border; y < R.rows() - border; ++y) {
    for (int x = border; x < R.cols() - border; ++x) {
      if (R(y, x) <= p.harris_threshold || !is_local_max(R, y, x)) continue;
      Keypoint kp;
      kp.x = x;
      kp.y = y;
      kp.scale = p.sigma * p.block_size / 3.0;
      kp.response = R(y, x);
      out.push_back(kp);
    }
  }
  return out;
}

// --- FAST pyramid -----------------------------------------------------------

constexpr std::array<std::array<int, 2>, 16> kFastCircle = {{{0, -3}, {1, -3}, {2, -2}, {3, -1},
                                                             {3, 0}, {3, 1}, {2, 2}, {1, 3},
                                                             {0, 3}, {-1, 3}, {-2, 2}, {-3, 1},
                                                             {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}}};
constexpr int kFastArc = 9;

// Largest threshold at which the pixel is still a segment-test corner.
Eigen::MatrixXd fast_score_map(const GrayImage& img) {
  const int rows = static_cast<int>(img.rows());
  const int cols = static_cast<int>(img.cols());
  Eigen::MatrixXd score = Eigen::MatrixXd::Zero(rows, cols);
  std::array<double, 32> diff{};
  for (int y = 3; y < rows - 3; ++y) {
    for (int x = 3; x < cols - 3; ++x) {
      const double center = img(y, x);
      for (int k = 0; k < 16; ++k) {
        diff[k] = img(y + kFastCircle[k][1], x + kFastCircle[k][0]) - center;
        diff[k + 16] = diff[k];
      }
      double best = 0.0;
      for (int start = 0; start < 16; ++start) {
        double bright = diff[start];
        double dark = -diff[start];
        for (int k = 1; k < kFastArc; ++k) {
          bright = std::min(bright, diff[start + k]);
          dark = std::min(dark, -diff[start + k]);
        }
        best = std::max({best, bright, dark});
      }
      score(y, x) = best;
    }
  }
  return score;
}

KeypointList detect_fast_pyramid(const GrayImage& image, const DetectorParams& p) {
  KeypointList out;
  constexpr int kHarrisBlock = 7;
  constexpr int kBorder = 3 + kHarrisBlock / 2 + 1;
  for (int level = 0; level < p.levels; ++level) {
    const double factor = std::pow(p.scale_factor, level);
    const int rows = static_cast<int>(std::lround(image.rows() / factor));
    const int cols = static_cast<int>(std::lround(image.cols() / factor));
    if (rows <= 2 * kBorder + 1 || cols <= 2 * kBorder + 1) break;
    GrayImage lvl = image;
    if (level > 0) {
      const double pre_blur = 0.5 * std::sqrt(factor * factor - 1.0);
      lvl = resize_bilinear(gaussian_blur(image, pre_blur), rows, cols);
    }
    const Eigen::MatrixXd score = fast_score_map(lvl);
    const Eigen::MatrixXd harris = harris_response(lvl, kHarrisBlock, 0.04);
    const double sx = static_cast<double>(image.cols()) / cols;
    const double sy = static_cast<double>(image.rows()) / rows;
    for (int y = kBorder; y < rows - kBorder; ++y) {
      for (int x = kBorder; x < cols - kBorder; ++x) {
        if (score(y, x) <= p.fast_threshold || !is_local_max(score, y, x)) continue;
        Keypoint kp;
        kp.x = (x + 0.5) * sx - 0.5;
        kp.y = (y + 0.5) * sy - 0.5;
        kp.scale = p.sigma * factor;
        kp.response = harris(y, x);
        out.push_back(kp);
      }
    }
  }
  return out;
}

// --- descriptors -------------------------------------------------------------

struct LevelRef {
  int octave = 0;
  int layer = 0;
  double octave_scale = 1.0;  // 2^octave
  double sigma_level = 1.0;   // keypoint scale in octave pixels
};

LevelRef select_level(double scale, double sigma, int layers, int n_octaves) {
  LevelRef ref;
  const double t = std::log2(scale / sigma);
  ref.octave = std::clamp(static_cast<int>(std::floor(t)), 0, std::max(0, n_octaves - 1));
  ref.layer = std::clamp(static_cast<int>(std::lround((t - ref.octave) * layers)), 0, layers + 2);
  ref.octave_scale = std::ldexp(1.0, ref.octave);
  ref.sigma_level = scale / ref.octave_scale;
  return ref;
}

int grad_hist_radius(double sigma_level) {
  const double hist_width = kDescHistScale * sigma_level;
  return static_cast<int>(std::lround(hist_width * std::sqrt(2.0) * (kDescWidth + 1) * 0.5));
}

double rot_binary_radius(double sigma_level, double pattern_scale) {
  return kRotBinaryRadiusPerSigma * pattern_scale * sigma_level;
}

const std::vector<std::array<double, 4>>& rot_binary_pattern() {
  static const std::vector<std::array<double, 4>> pattern = [] {
    std::mt19937 rng(kRotBinaryPatternSeed);
    std::normal_distribution<double> gauss(0.0, 0.4);
    std::vector<std::array<double, 4>> pts;
    auto draw = [&] {
      double v = gauss(rng);
      return std::clamp(v, -0.95, 0.95);
    };
    while (static_cast<int>(pts.size()) < kRotBinaryBits) {
      std::array<double, 4> q{draw(), draw(), draw(), draw()};
      if (q[0] * q[0] + q[1] * q[1] > 0.9025 || q[2] * q[2] + q[3] * q[3] > 0.9025) continue;
      pts.push_back(q);
    }
    return pts;
  }();
  return pattern;
}

bool patch_inside(const GrayImage& img, double cx, double cy, double radius) {
  return cx - radius >= 1 && cy - radius >= 1 && cx + radius <= img.cols() - 2 &&
         cy + radius <= img.rows() - 2;
}

bool grad_hist_descriptor(const GrayImage& img, double cx, double cy, double ori, double sigma_level,
                          float* dst) {
  const int radius = grad_hist_radius(sigma_level);
  const int px = static_cast<int>(std::lround(cx));
  const int py = static_cast<int>(std::lround(cy));
  if (!patch_inside(img, px, py, radius + 1)) return false;
  const double hist_width = kDescHistScale * sigma_level;
  const double cos_t = std::cos(ori) / hist_width;
  const double sin_t = std::sin(ori) / hist_width;
  const double exp_scale = -1.0 / (kDescWidth * kDescWidth * 0.5);
  constexpr int kHw = kDescWidth + 2;
  constexpr int kHb = kDescBins + 2;
  std::array<double, kHw * kHw * kHb> hist{};
  const double sub_x = cx - px;
  const double sub_y = cy - py;

  for (int i = -radius; i <= radius; ++i) {
    for (int j = -radius; j <= radius; ++j) {
      const double ox = j - sub_x;
      const double oy = i - sub_y;
      const double c_rot = ox * cos_t + oy * sin_t;
      const double r_rot = -ox * sin_t + oy * cos_t;
      const double rbin = r_rot + kDescWidth / 2.0 - 0.5;
      const double cbin = c_rot + kDescWidth / 2.0 - 0.5;
      if (!(rbin > -1 && rbin < kDescWidth && cbin > -1 && cbin < kDescWidth)) continue;
      const int y = py + i;
      const int x = px + j;
      const double dx = img(y, x + 1) - img(y, x - 1);
      const double dy = img(y + 1, x) - img(y - 1, x);
      const double mag = std::hypot(dx, dy);
      if (mag == 0.0) continue;
      double obin = (std::atan2(dy, dx) - ori) * kDescBins / kTwoPi;
      obin = std::fmod(obin, kDescBins);
      if (obin < 0) obin += kDescBins;
      const double w = mag * std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      int o0 = static_cast<int>(std::floor(obin));
      const double dr = rbin - r0;
      const double dc = cbin - c0;
      const double dob = obin - o0;
      for (int a = 0; a < 2; ++a) {
        const double wr = w * (a ? dr : 1 - dr);
        for (int b = 0; b < 2; ++b) {
          const double wc = wr * (b ? dc : 1 - dc);
          for (int c = 0; c < 2; ++c) {
            const double wo = wc * (c ? dob : 1 - dob);
            const int ob = (o0 + c) % kDescBins;
            hist[((r0 + 1 + a) * kHw + (c0 + 1 + b)) * kHb + ob] += wo;
          }
        }
      }
    }
  }

  double norm2 = 0.0;
  std::array<double, kGradHistWidth> desc{};
  for (int r = 0; r < kDescWidth; ++r)
    for (int c = 0; c < kDescWidth; ++c)
      for (int o = 0; o < kDescBins; ++o) {
        const double v = hist[((r + 1) * kHw + (c + 1)) * kHb + o];
        desc[(r * kDescWidth + c) * kDescBins + o] = v;
        norm2 += v * v;
      }
  if (norm2 > 0.0) {
    const double clamp = kDescMagClamp * std::sqrt(norm2);
    norm2 = 0.0;
    for (auto& v : desc) {
      v = std::min(v, clamp);
      norm2 += v * v;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : desc) v *= inv;
  }
  for (int k = 0; k < kGradHistWidth; ++k) dst[k] = static_cast<float>(desc[k]);
  return true;
}

}  // namespace

std::string to_string(DetectorAlgorithm algorithm) {
  switch (algorithm) {
    case DetectorAlgorithm::DoG: return "DoG";
    case DetectorAlgorithm::Harris: return "Harris";
    case DetectorAlgorithm::FastPyramid: return "FastPyramid";
  }
  return "?";
}

DetectorAlgorithm detector_algorithm_from_string(const std::string& name) {
  if (name == "DoG") return DetectorAlgorithm::DoG;
  if (name == "Harris") return DetectorAlgorithm::Harris;
  if (name == "FastPyramid" || name == "FAST") return DetectorAlgorithm::FastPyramid;
  throw Error(ErrorCode::BadConfig, "unknown detector '" + name + "'");
}

std::string to_string(DescriptorKind kind) {
  return kind == DescriptorKind::GradHist ? "GradHist" : "RotBinary";
}

DescriptorKind descriptor_kind_from_string(const std::string& name) {
  if (name == "GradHist") return DescriptorKind::GradHist;
  if (name == "RotBinary") return DescriptorKind::RotBinary;
  throw Error(ErrorCode::BadConfig, "unknown descriptor '" + name + "'");
}

std::string DetectorParams::label() const {
  char buf[128];
  switch (algorithm) {
    case DetectorAlgorithm::DoG:
      std::snprintf(buf, sizeof(buf), "DoG %g %.1f %g %d", contrast_threshold, edge_threshold, sigma,
                    n_octave_layers);
      break;
    case DetectorAlgorithm::Harris:
      std::snprintf(buf, sizeof(buf), "Harris %d %g %g", block_size, harris_k, harris_threshold);
      break;
    case DetectorAlgorithm::FastPyramid:
      std::snprintf(buf, sizeof(buf), "FastPyramid %g %d %g", fast_threshold, levels, scale_factor);
      break;
  }
  return buf;
}

void DetectorParams::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::BadConfig, "detector: " + m); };
  if (!(contrast_threshold > 0) || !(edge_threshold > 0) || !(sigma > 0)) bad("thresholds and sigma must be positive");
  if (n_octave_layers < 1) bad("n_octave_layers must be >= 1");
  if (block_size < 2 || !(harris_threshold > 0)) bad("Harris block size >= 2 and threshold > 0 required");
  if (!(fast_threshold > 0) || levels < 1 || !(scale_factor > 1)) bad("FAST threshold > 0, levels >= 1, scale factor > 1 required");
}

std::string DescriptorParams::label() const {
  if (kind == DescriptorKind::RotBinary) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "RotBinary %g", pattern_scale);
    return buf;
  }
  return "GradHist";
}

int default_octave_count(int width, int height) {
  return std::max(1, static_cast<int>(std::floor(std::log2(std::max(1, std::min(width, height))))));
}

std::pair<int, int> ScaleSpace::level_for_scale(double scale) const {
  const LevelRef ref = select_level(scale, sigma, layers, static_cast<int>(octaves.size()));
  return {ref.octave, ref.layer};
}

ScaleSpace build_scale_space(const GrayImage& image, double sigma, int layers, int n_octaves) {
  ScaleSpace space;
  space.sigma = sigma;
  space.layers = layers;
  const int levels = layers + 3;
  std::vector<double> increments(levels, 0.0);
  const double k = std::pow(2.0, 1.0 / layers);
  for (int i = 1; i < levels; ++i) {
    const double prev = sigma * std::pow(k, i - 1);
    const double total = prev * k;
    increments[i] = std::sqrt(total * total - prev * prev);
  }
  constexpr double kAssumedInputBlur = 0.5;
  for (int o = 0; o < n_octaves; ++o) {
    std::vector<GrayImage> octave;
    if (o == 0) {
      octave.push_back(gaussian_blur(
          image, std::sqrt(std::max(sigma * sigma - kAssumedInputBlur * kAssumedInputBlur, 0.01))));
    } else {
      const GrayImage base = downsample2(space.octaves.back()[layers]);
      if (base.rows() < 3 || base.cols() < 3) break;
      octave.push_back(base);
    }
    for (int i = 1; i < levels; ++i) octave.push_back(gaussian_blur(octave.back(), increments[i]));
    space.octaves.push_back(std::move(octave));
  }
  return space;
}

std::vector<double> dominant_orientations(const ScaleSpace& space, const Keypoint& kp) {
  const LevelRef ref = select_level(kp.scale, space.sigma, space.layers, static_cast<int>(space.octaves.size()));
  const GrayImage& img = space.octaves[ref.octave][ref.layer];
  const int cx = static_cast<int>(std::lround(kp.x / ref.octave_scale));
  const int cy = static_cast<int>(std::lround(kp.y / ref.octave_scale));
  const int radius = static_cast<int>(std::lround(kOriRadiusFactor * ref.sigma_level));
  const double weight_scale = -1.0 / (2.0 * std::pow(kOriSigmaFactor * ref.sigma_level, 2));
  std::array<double, kOriBins> raw{};
  for (int i = -radius; i <= radius; ++i) {
    const int y = cy + i;
    if (y <= 0 || y >= img.rows() - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = cx + j;
      if (x <= 0 || x >= img.cols() - 1) continue;
      const double dx = img(y, x + 1) - img(y, x - 1);
      const double dy = img(y + 1, x) - img(y - 1, x);
      const double mag = std::hypot(dx, dy);
      if (mag == 0.0) continue;
      const double w = std::exp((i * i + j * j) * weight_scale);
      int bin = static_cast<int>(std::lround(kOriBins * std::atan2(dy, dx) / kTwoPi));
      bin = ((bin % kOriBins) + kOriBins) % kOriBins;
      raw[bin] += w * mag;
    }
  }
  std::array<double, kOriBins> hist{};
  for (int b = 0; b < kOriBins; ++b) {
    auto at = [&](int d) { return raw[((b + d) % kOriBins + kOriBins) % kOriBins]; };
    hist[b] = (at(-2) + at(2)) / 16.0 + (at(-1) + at(1)) * 4.0 / 16.0 + at(0) * 6.0 / 16.0;
  }
  const double max_v = *std::max_element(hist.begin(), hist.end());
  if (!(max_v > 0.0)) return {0.0};
  std::vector<double> out;
  for (int b = 0; b < kOriBins; ++b) {
    const double l = hist[(b + kOriBins - 1) % kOriBins];
    const double r = hist[(b + 1) % kOriBins];
    const double c = hist[b];
    if (c > l && c > r && c >= kOriPeakRatio * max_v) {
      double bin = b + 0.5 * (l - r) / (l - 2 * c + r);
      bin = std::fmod(bin + kOriBins, kOriBins);
      double ori = kTwoPi * bin / kOriBins;
      if (ori >= kTwoPi) ori -= kTwoPi;
      out.push_back(ori);
    }
  }
  if (out.empty()) out.push_back(0.0);
  return out;
}

KeypointList detect(const GrayImage& image, const DetectorParams& params) {
  params.validate();
  const int min_dim = static_cast<int>(std::min(image.rows(), image.cols()));
  int support = 0;
  switch (params.algorithm) {
    case DetectorAlgorithm::DoG:
      support = 2 * static_cast<int>(std::ceil(4.0 * params.sigma)) + 1;
      break;
    case DetectorAlgorithm::Harris:
      support = params.block_size + 2;
      break;
    case DetectorAlgorithm::FastPyramid:
      support = 7;
      break;
  }
  if (min_dim < support) {
    throw Error(ErrorCode::ImageTooSmall, "image smaller than the detector filter support");
  }
  KeypointList raw;
  switch (params.algorithm) {
    case DetectorAlgorithm::DoG:
      raw = detect_dog(image, params);
      break;
    case DetectorAlgorithm::Harris:
      raw = detect_harris(image, params);
      break;
    case DetectorAlgorithm::FastPyramid:
      raw = detect_fast_pyramid(image, params);
      break;
  }
  KeypointList out = with_orientations(image, raw, params.sigma);
  sort_keypoints(out);
  return out;
}

double descriptor_support_radius(const Keypoint& kp, const DescriptorParams& params) {
  // Octave count only matters for clamping very large scales; use a generous bound.
  const LevelRef ref = select_level(kp.scale, params.sigma, params.n_octave_layers, 64);
  if (params.kind == DescriptorKind::GradHist) return (grad_hist_radius(ref.sigma_level) + 1.5) * ref.octave_scale;
  return (rot_binary_radius(ref.sigma_level, params.pattern_scale) + 2.0) * ref.octave_scale;
}

DescribeResult describe(const GrayImage& image, const KeypointList& keypoints,
                        const DescriptorParams& params) {
  if (image.size() == 0) throw Error(ErrorCode::EmptyInput, "cannot describe an empty image");
  DescribeResult result;
  const int n = static_cast<int>(keypoints.size());
  result.descriptors = params.kind == DescriptorKind::GradHist ? DescriptorSet::make_real(n, kGradHistWidth)
                                                               : DescriptorSet::make_binary(n, kRotBinaryBits);
  if (n == 0) return result;
  const ScaleSpace space = build_scale_space(
      image, params.sigma, params.n_octave_layers,
      default_octave_count(static_cast<int>(image.cols()), static_cast<int>(image.rows())));
  const auto& pattern = rot_binary_pattern();
  int row = 0;
  for (int i = 0; i < n; ++i) {
    const Keypoint& kp = keypoints[i];
    const LevelRef ref = select_level(kp.scale, space.sigma, space.layers, static_cast<int>(space.octaves.size()));
    const GrayImage& img = space.octaves[ref.octave][ref.layer];
    const double cx = kp.x / ref.octave_scale;
    const double cy = kp.y / ref.octave_scale;
    bool ok = false;
    if (params.kind == DescriptorKind::GradHist) {
      ok = grad_hist_descriptor(img, cx, cy, kp.orientation, ref.sigma_level,
                                result.descriptors.real.row(row).data());
    } else {
      const double radius = rot_binary_radius(ref.sigma_level, params.pattern_scale);
      ok = patch_inside(img, cx, cy, radius + 1.0);
      if (ok) {
        const double c = std::cos(kp.orientation) * radius;
        const double s = std::sin(kp.orientation) * radius;
        for (int b = 0; b < kRotBinaryBits; ++b) {
          const auto& q = pattern[b];
          const float v1 = bilinear(img, cx + c * q[0] - s * q[1], cy + s * q[0] + c * q[1]);
          const float v2 = bilinear(img, cx + c * q[2] - s * q[3], cy + s * q[2] + c * q[3]);
          result.descriptors.set_bit(row, b, v1 < v2);
        }
      }
    }
    if (!ok) continue;
    result.kept.push_back(i);
    ++row;
  }
  if (params.kind == DescriptorKind::GradHist) {
    result.descriptors.real.conservativeResize(row, kGradHistWidth);
  } else {
    result.descriptors.bits.conservativeResize(row, result.descriptors.bits.cols());
  }
  return result;
}

}  // namespace fisheval
