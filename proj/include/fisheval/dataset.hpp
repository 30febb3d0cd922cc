#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fisheval/geometry.hpp"
#include "fisheval/image.hpp"
#include "fisheval/keypoint.hpp"

namespace fisheval {

/// Per-pixel Euclidean range along each pixel's ray, with a validity flag.
struct DistanceMap {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;
  ByteMask valid;
  double cap = kDefaultDistanceCap;

  int width() const { return static_cast<int>(values.cols()); }
  int height() const { return static_cast<int>(values.rows()); }

  /// Flags every entry that is NaN, non-positive or beyond `cap`.
  static DistanceMap from_values(
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values,
      double cap = kDefaultDistanceCap);

  /// Sky pixels are never valid.
  void apply_sky_mask(const ByteMask& sky);

  /// Range at the pixel nearest to `pixel`, or nullopt if invalid/outside.
  std::optional<double> lookup_nearest(const Eigen::Vector2d& pixel) const;
};

struct CameraView {
  GrayImage image;
  DistanceMap distance;
  ByteMask sky;
  FisheyeModeld model;
  Posed pose;
};

/// The unit of evaluation: both cameras of the rig at one shot.
struct StereoPair {
  std::string id;
  CameraView front;
  CameraView rear;
};

struct Rig {
  FisheyeModeld front;
  FisheyeModeld rear;
  /// Rear camera pose expressed in the front camera frame.
  Posed rear_offset;

  /// Rear camera with a 2 m baseline along X and the given XZY shift (degrees).
  static Posed make_offset(double baseline_x, const Eigen::Vector3d& euler_xzy_deg);
};

struct Sequence {
  Rig rig;
  std::vector<Posed> trajectory;  // front camera, one per frame
  std::vector<StereoPair> frames;
};

struct DistanceEncoding {
  enum class Kind { Raw32F, PNG16 };
  Kind kind = Kind::Raw32F;
  double scale = 1.0;   // PNG16 only: meters = raw * scale + offset
  double offset = 0.0;

  static DistanceEncoding parse(const std::string& name, double scale = 1.0, double offset = 0.0);
};

DistanceMap decode_distance_map(const std::filesystem::path& file, const DistanceEncoding& encoding,
                                double cap = kDefaultDistanceCap);

/// Raw32F layout: "FEDM" magic, uint32 width, uint32 height, row-major
/// little-endian float32 meters. Invalid entries are written as 0.
void write_distance_raw32f(const std::filesystem::path& file, const DistanceMap& map);

/// Front camera pose from a planar trajectory record (X, Y, yaw about Z).
Posed trajectory_pose(double x, double y, double yaw_deg, double height);

Sequence load_sequence(const std::filesystem::path& manifest_path);

struct SequenceFrameRecord {
  double x = 0.0;
  double y = 0.0;
  double yaw_deg = 0.0;
};

/// Writes images, Raw32F distance maps, sky masks and a manifest into `dir`.
void write_sequence(const std::filesystem::path& dir, const Sequence& sequence,
                    const std::vector<SequenceFrameRecord>& records, double camera_height,
                    const Eigen::Vector3d& rear_euler_xzy_deg, double baseline);

// Keypoint interchange ------------------------------------------------------

struct KeypointFile {
  std::string image_id;
  std::string detector_id;
  std::string parameters;
  ImageFrame frame = ImageFrame::Fisheye;
  KeypointList keypoints;
  std::optional<DescriptorSet> descriptors;
};

inline constexpr const char* kKeypointMagic = "FISHEVAL-KEYPOINTS";
inline constexpr int kKeypointVersion = 1;

void write_keypoint_file(const std::filesystem::path& path, const KeypointFile& file);
KeypointFile read_keypoint_file(const std::filesystem::path& path);

}  // namespace fisheval
