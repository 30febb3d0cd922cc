#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

#include "fisheval/dataset.hpp"
#include "fisheval/geometry.hpp"
#include "fisheval/image.hpp"

namespace fisheval {

/// Axis-aligned textured box.
struct Box {
  Eigen::Vector3d min_corner;
  Eigen::Vector3d max_corner;
  std::uint64_t texture_seed = 0;
};

/// Urban-canyon style scene: boxes, an optional ground plane at z = 0 and a
/// procedural sky. The seed fully determines every rendered pixel.
struct Scene {
  std::vector<Box> boxes;
  bool ground_plane = true;
  std::uint64_t seed = 0;
  /// Texture cells per meter; higher values give more detections.
  double texture_density = 1.5;
  double world_bound = 1000.0;
};

struct Hit {
  double distance = 0.0;
  Eigen::Vector3d point;
  int primitive = -1;  // box index, or -1 for the ground plane
};

/// Nearest intersection along a unit direction from `origin`.
std::optional<Hit> cast_ray(const Scene& scene, const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& direction);

/// Texture intensity in [0, 1] at a surface point of a primitive.
float surface_intensity(const Scene& scene, const Hit& hit);

/// Street along X lined with buildings on both sides, closed at the far end.
Scene make_urban_canyon(std::uint64_t seed, double texture_density = 1.5);

struct RenderOptions {
  int width = 600;
  int height = 600;
  /// Supersampling grid per axis for intensities; distances use the pixel center.
  int supersample = 2;
  float border_value = 0.0f;
};

struct RenderedView {
  GrayImage image;
  DistanceMap distance;
  ByteMask sky;
};

RenderedView render_view(const Scene& scene, const FisheyeModeld& model, const Posed& pose,
                         const RenderOptions& options = {});

struct MotionParams {
  Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();  // rad/s, world frame
  Eigen::Vector3d linear_velocity = Eigen::Vector3d::Zero();   // m/s, world frame
  double exposure = 0.0;                                        // seconds
  int subsamples = 1;
};

/// Pose at time `t` (seconds, relative to mid-exposure) under constant velocity.
Posed pose_at(const Posed& pose, const MotionParams& motion, double t);

/// Both rig views. Intensities average `subsamples` renders spread across the
/// exposure; distance maps and sky masks come from the mid-exposure pose.
StereoPair render_pair(const Scene& scene, const Rig& rig, const Posed& front_pose,
                       const MotionParams& motion, const RenderOptions& options = {},
                       const std::string& id = "0");

/// PFSeq-like rig geometry scaled to `width` pixels.
Rig make_pfseq_rig(ProjectionKind kind, int width);

struct SynthSpec {
  std::uint64_t seed = 1;
  int frames = 3;
  int width = 600;
  ProjectionKind kind = ProjectionKind::Equidistant;
  double texture_density = 1.5;
  double camera_height = 2.0;
  double step = 1.5;            // meters between shots along X
  double yaw_step_deg = 0.0;
  MotionParams motion;
  int supersample = 2;
};

struct SynthSequence {
  Sequence sequence;
  std::vector<SequenceFrameRecord> records;
};

SynthSequence generate_sequence(const SynthSpec& spec);

inline const Eigen::Vector3d kPfseqRearShiftDeg{-8.0, 6.0, -7.0};
inline constexpr double kPfseqBaseline = -2.0;
inline constexpr double kPfseqFovDeg = 181.8;

}  // namespace fisheval
