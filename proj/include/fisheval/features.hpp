#pragma once

#include <string>
#include <vector>

#include "fisheval/image.hpp"
#include "fisheval/keypoint.hpp"

namespace fisheval {

enum class DetectorAlgorithm { DoG, Harris, FastPyramid };

std::string to_string(DetectorAlgorithm algorithm);
DetectorAlgorithm detector_algorithm_from_string(const std::string& name);

/// Parameters of the three baseline detectors. Intensities are in [0, 1].
///
/// DoG mirrors the usual SIFT knobs: a candidate is rejected when its
/// interpolated response |D| is below contrast_threshold / n_octave_layers,
/// or when the principal-curvature ratio exceeds edge_threshold.
struct DetectorParams {
  DetectorAlgorithm algorithm = DetectorAlgorithm::DoG;

  double contrast_threshold = 0.04;
  double edge_threshold = 10.0;
  double sigma = 1.6;
  int n_octave_layers = 3;

  int block_size = 3;
  double harris_k = 0.04;
  double harris_threshold = 1e-5;

  double fast_threshold = 0.08;
  int levels = 8;
  double scale_factor = 1.2;

  /// Short setup label, e.g. "DoG 0.04 10.0 1.6".
  std::string label() const;
  void validate() const;
};

/// Gaussian scale space: octave o holds n_octave_layers + 3 images, level i
/// blurred to sigma * 2^(i / n_octave_layers) in octave pixels.
struct ScaleSpace {
  double sigma = 1.6;
  int layers = 3;
  std::vector<std::vector<GrayImage>> octaves;

  /// Octave and level whose blur is closest to `scale` (original pixels).
  std::pair<int, int> level_for_scale(double scale) const;
};

ScaleSpace build_scale_space(const GrayImage& image, double sigma, int layers, int n_octaves);

int default_octave_count(int width, int height);

/// Detections sorted by descending response, ties by (y, x).
KeypointList detect(const GrayImage& image, const DetectorParams& params);

/// Dominant gradient orientations (radians) of the patch around `kp`.
std::vector<double> dominant_orientations(const ScaleSpace& space, const Keypoint& kp);

enum class DescriptorKind { GradHist, RotBinary };

std::string to_string(DescriptorKind kind);
DescriptorKind descriptor_kind_from_string(const std::string& name);

struct DescriptorParams {
  DescriptorKind kind = DescriptorKind::GradHist;
  /// RotBinary sampling radius multiplier.
  double pattern_scale = 1.0;
  double sigma = 1.6;
  int n_octave_layers = 3;

  std::string label() const;
};

inline constexpr int kGradHistWidth = 128;
inline constexpr int kRotBinaryBits = 256;
inline constexpr unsigned kRotBinaryPatternSeed = 0x5EEDB1u;

struct DescribeResult {
  DescriptorSet descriptors;
  /// kept[i] is the index into the input keypoints of descriptor row i.
  std::vector<int> kept;
};

/// Keypoints whose patch would leave the image are dropped.
DescribeResult describe(const GrayImage& image, const KeypointList& keypoints,
                        const DescriptorParams& params);

/// Patch radius (original pixels) that `describe` needs around `kp`.
double descriptor_support_radius(const Keypoint& kp, const DescriptorParams& params);

}  // namespace fisheval
