#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "fisheval/dataset.hpp"
#include "fisheval/features.hpp"
#include "fisheval/matching.hpp"
#include "fisheval/polar.hpp"

namespace fisheval {

struct MatchCriterion {
  enum class Kind { Sphere, Angular };
  Kind kind = Kind::Sphere;
  /// Sphere radius in meters, or angular half-angle in radians.
  double threshold = 0.02;

  static MatchCriterion sphere(double radius_m) { return {Kind::Sphere, radius_m}; }
  static MatchCriterion angular(double half_angle_rad) { return {Kind::Angular, half_angle_rad}; }
};

/// Default tolerance sweep, meters.
inline const std::vector<double> kDefaultTolerances{0.005, 0.01, 0.02, 0.03, 0.04, 0.05,
                                                    0.06,  0.07, 0.08, 0.09, 0.10, 0.15};

/// Everything needed to lift a detection of one view into the world.
struct ViewGeometry {
  FisheyeModeld model;
  Posed pose;
  const DistanceMap* distance = nullptr;
  /// Set when detections live on the polar-rectified image.
  std::optional<PolarMeta> polar;

  static ViewGeometry of(const CameraView& view) { return {view.model, view.pose, &view.distance, std::nullopt}; }
};

/// World points of a detection list; nullopt for detections on invalid
/// (sky / beyond cap / outside circle) pixels.
struct BackProjection {
  std::vector<std::optional<Eigen::Vector3d>> points;
  Eigen::Vector3d camera_center = Eigen::Vector3d::Zero();

  int valid_count() const;
};

/// Distances are looked up at the nearest pixel, never interpolated.
BackProjection back_project_detections(const KeypointList& detections, const ViewGeometry& geometry);

/// Fisheye pixel coordinates of a detection (identity for fisheye frames).
Eigen::Vector2d to_fisheye_coords(const Keypoint& kp, const std::optional<PolarMeta>& polar);

/// Meters for Sphere; for Angular, the larger of the angles the two points
/// subtend at either camera center.
double separation(MatchCriterion::Kind kind, const Eigen::Vector3d& pa, const Eigen::Vector3d& pb,
                  const Eigen::Vector3d& center_a, const Eigen::Vector3d& center_b);

struct OracleMatch {
  int index_a = 0;
  int index_b = 0;
  double separation = 0.0;
};

struct MatchSet {
  MatchCriterion criterion;
  std::vector<OracleMatch> matches;  // ascending separation
  int n_det_a = 0;
  int n_det_b = 0;
  BackProjection proj_a;
  BackProjection proj_b;
};

/// All detection pairs satisfying the criterion, sorted by (separation, a, b).
std::vector<OracleMatch> candidate_pairs(const BackProjection& a, const BackProjection& b,
                                         const MatchCriterion& criterion);

/// One-to-one greedy selection over candidates in the given order.
std::vector<OracleMatch> greedy_one_to_one(const std::vector<OracleMatch>& sorted_candidates);

MatchSet ground_truth_matches(BackProjection a, BackProjection b, const MatchCriterion& criterion);
MatchSet ground_truth_matches(const KeypointList& det_a, const KeypointList& det_b, const ViewGeometry& geo_a,
                              const ViewGeometry& geo_b, const MatchCriterion& criterion);

struct MetricRow {
  double tolerance = 0.0;
  int n_matches = 0;
  double repeatability = 0.0;
  int n_correct = 0;
  double matching_score = 0.0;
  double drop = 0.0;
  int n_det_min = 0;
};

/// Attempted pairs that satisfy the criterion, one-to-one deduplicated by
/// ascending separation.
std::vector<OracleMatch> correct_attempted(const MatchSet& set, const std::vector<AttemptedMatch>& attempted,
                                           const MatchCriterion& criterion);

MetricRow metric_scores(const MatchSet& set, const std::vector<AttemptedMatch>& attempted,
                        const MatchCriterion& criterion, int n_det_a, int n_det_b);

/// Metric rows for ascending tolerances, sharing one candidate search.
std::vector<MetricRow> sweep_metrics(const BackProjection& a, const BackProjection& b,
                                     const std::vector<AttemptedMatch>& attempted, MatchCriterion::Kind kind,
                                     const std::vector<double>& tolerances, int n_det_a, int n_det_b);

/// One detector / descriptor / matcher setup.
struct PipelineConfig {
  DetectorParams detector;
  std::optional<DescriptorParams> descriptor;
  std::optional<MatchParams> matcher;
  bool polar = false;
  MatchCriterion::Kind criterion = MatchCriterion::Kind::Sphere;

  /// e.g. "DoG 0.04 10.0 1.6 3 nopol GradHist BruteForce".
  std::string setup_string() const;
};

struct PipelineResult {
  KeypointList det_a;  // fisheye or polar frame, as detected
  KeypointList det_b;
  std::vector<Eigen::Vector2d> fisheye_a;  // detections in fisheye pixels
  std::vector<Eigen::Vector2d> fisheye_b;
  std::vector<AttemptedMatch> attempted;  // indices into det_a / det_b
  std::vector<MetricRow> rows;
};

/// Detect, optionally rectify, describe and match, then score every tolerance.
PipelineResult run_pipeline(const PipelineConfig& config, const StereoPair& pair,
                            const std::vector<double>& tolerances = kDefaultTolerances);

std::vector<MetricRow> sweep(const PipelineConfig& config, const StereoPair& pair,
                             const std::vector<double>& tolerances = kDefaultTolerances);

struct SpreadingGrid {
  int n_radial = 4;
  int n_azimuthal = 8;
};

/// Fraction of equal-area polar cells of the image disc that hold at least
/// `fill_threshold` keypoints (keypoints in fisheye pixels).
double spreading_score(const std::vector<Eigen::Vector2d>& points, const FisheyeModeld& model,
                       const SpreadingGrid& cells = {}, int fill_threshold = 2);

inline constexpr const char* kMetricCsvHeader =
    "tolerance_m,n_matches,repeatability,n_correct,matching_score,drop,n_det_min";

std::string format_metric_row(const MetricRow& row);

}  // namespace fisheval
