#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fisheval {

/// A correspondence in fisheye pixels, view a then view b.
struct PixelMatch {
  Eigen::Vector2d a;
  Eigen::Vector2d b;
};

struct RayPair {
  Eigen::Vector3d a;
  Eigen::Vector3d b;
};

/// One-parameter equisolid lifting: theta = 2 asin(a r), a = 1 / (2 f).
/// OutOfDomain when a r > 1.
Eigen::Vector3d lift_pixel(const Eigen::Vector2d& pixel, double a, const Eigen::Vector2d& center);

std::vector<RayPair> rays_from_matches(const std::vector<PixelMatch>& matches, double a,
                                       const Eigen::Vector2d& center_a, const Eigen::Vector2d& center_b);

/// Least-squares E with b' E a = 0, projected to singular values (s, s, 0)
/// and scaled to unit Frobenius norm. Degenerate when the design matrix has
/// more than a one-dimensional null space.
Eigen::Matrix3d eight_point(const std::vector<RayPair>& pairs);

/// Angle between ray b and the epipolar plane of ray a.
double angular_residual(const Eigen::Matrix3d& E, const RayPair& pair);
/// Mean of the residual in both directions.
double symmetric_angular_residual(const Eigen::Matrix3d& E, const RayPair& pair);

/// Unit epipoles (left: E e = 0, right: E' e = 0), each with X >= 0.
std::pair<Eigen::Vector3d, Eigen::Vector3d> epipoles_from_E(const Eigen::Matrix3d& E);

/// n values spread evenly over [1 - span, 1 + span] * a_nominal; the middle
/// entry is exactly a_nominal when n is odd.
std::vector<double> make_a_grid(double a_nominal, int n = 61, double span = 0.2);

struct CalibConfig {
  std::vector<double> a_grid;
  Eigen::Vector2d center_a = Eigen::Vector2d::Zero();
  Eigen::Vector2d center_b = Eigen::Vector2d::Zero();
  int sample_size = 8;
  int max_iterations = 50000;
  double inlier_threshold = 0.005;  // radians
  double confidence = 0.99;
  std::uint64_t seed = 1;
};

struct CalibEstimate {
  double a = 0.0;
  int a_index = -1;
  Eigen::Matrix3d essential = Eigen::Matrix3d::Zero();
  Eigen::Vector3d epipole_left = Eigen::Vector3d::Zero();
  Eigen::Vector3d epipole_right = Eigen::Vector3d::Zero();
  std::vector<int> inliers;
  double epsilon = 0.0;
  int iterations_used = 0;
};

/// Grid-a RANSAC over 8-point essential matrices. For each sample every grid
/// value is solved; only values where the unconstrained solution is locally
/// closest to rank 2 are scored against all matches.
CalibEstimate ransac_calibrate(const std::vector<PixelMatch>& matches, const CalibConfig& config);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct StabilityStats {
  int runs = 0;
  MeanStd a, x_el, y_el, z_el, x_er, y_er, z_er, epsilon;
  double avg_inliers = 0.0;
  double avg_iterations = 0.0;
  double attempted_over_detections = 0.0;
  double inliers_over_detections = 0.0;
  double inliers_over_attempted = 0.0;
};

/// `a_scale` multiplies a before the statistics (e.g. the image-circle
/// radius, giving a dimensionless a r_max). TooFewRuns below two runs.
StabilityStats stability_stats(const std::vector<CalibEstimate>& runs, int n_det_min, int n_attempted,
                               double a_scale = 1.0);

inline constexpr const char* kStabilityCsvHeader =
    "setup,runs,a_avg,a_std,x_el_avg,x_el_std,y_el_avg,y_el_std,z_el_avg,z_el_std,x_er_avg,x_er_std,y_er_avg,"
    "y_er_std,z_er_avg,z_er_std,eps_avg,eps_std,inliers_avg,iterations_avg,attempted_per_det,inliers_per_det,"
    "inliers_per_attempted";

std::string format_stability_row(const std::string& setup, const StabilityStats& stats);

}  // namespace fisheval
