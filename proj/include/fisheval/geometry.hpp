#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "fisheval/error.hpp"

namespace fisheval {

enum class ProjectionKind { Equidistant, EquisolidAngle };

std::string to_string(ProjectionKind kind);
ProjectionKind projection_kind_from_string(const std::string& name);

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

template <typename Scalar>
constexpr Scalar deg_to_rad(Scalar deg) {
  return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}

template <typename Scalar>
constexpr Scalar rad_to_deg(Scalar rad) {
  return rad * Scalar(180) / std::numbers::pi_v<Scalar>;
}

/// Radial distance on the sensor for incidence angle theta.
template <typename Scalar>
Scalar radius_for_angle(ProjectionKind kind, Scalar focal, Scalar theta) {
  using std::sin;
  switch (kind) {
    case ProjectionKind::Equidistant:
      return focal * theta;
    case ProjectionKind::EquisolidAngle:
      return Scalar(2) * focal * sin(theta / Scalar(2));
  }
  return Scalar(0);
}

/// Inverse of radius_for_angle. Returns nullopt when r lies outside the
/// range of the radial map (equisolid: r > 2f).
template <typename Scalar>
std::optional<Scalar> angle_for_radius(ProjectionKind kind, Scalar focal, Scalar r) {
  using std::asin;
  switch (kind) {
    case ProjectionKind::Equidistant:
      return r / focal;
    case ProjectionKind::EquisolidAngle: {
      const Scalar s = r / (Scalar(2) * focal);
      if (s > Scalar(1)) return std::nullopt;
      return Scalar(2) * asin(s);
    }
  }
  return std::nullopt;
}

/// Focal length (pixels) such that the half field of view lands exactly on
/// the image-circle radius.
template <typename Scalar>
Scalar focal_from_fov(ProjectionKind kind, Scalar fov_deg, Scalar circle_radius) {
  using std::sin;
  if (!(fov_deg > Scalar(0) && fov_deg <= Scalar(360))) {
    throw Error(ErrorCode::InvalidModel, "fov must lie in (0, 360] degrees");
  }
  const Scalar theta_max = deg_to_rad(fov_deg) / Scalar(2);
  switch (kind) {
    case ProjectionKind::Equidistant:
      return circle_radius / theta_max;
    case ProjectionKind::EquisolidAngle:
      return circle_radius / (Scalar(2) * sin(theta_max / Scalar(2)));
  }
  return Scalar(0);
}

/// Central fisheye camera with a purely radial projection.
///
/// Image axes: x to the right, y down; the camera frame shares these axes
/// with z along the optical axis. The azimuth of a ray is atan2(y, x) and is
/// preserved by the projection.
template <typename Scalar>
struct FisheyeModel {
  ProjectionKind kind = ProjectionKind::Equidistant;
  Scalar focal = Scalar(1);
  Vec2<Scalar> center = Vec2<Scalar>::Zero();
  Scalar circle_radius = Scalar(1);
  Scalar fov_deg = Scalar(180);

  /// Builds a self-consistent model, deriving the focal from fov and circle.
  static FisheyeModel from_fov(ProjectionKind kind, Scalar fov_deg, Scalar circle_radius,
                               const Vec2<Scalar>& center) {
    FisheyeModel m;
    m.kind = kind;
    m.fov_deg = fov_deg;
    m.circle_radius = circle_radius;
    m.center = center;
    m.focal = focal_from_fov(kind, fov_deg, circle_radius);
    m.validate();
    return m;
  }

  Scalar max_theta() const { return deg_to_rad(fov_deg) / Scalar(2); }

  Scalar radius_of(Scalar theta) const { return radius_for_angle(kind, focal, theta); }

  void validate() const {
    using std::abs;
    if (!(focal > Scalar(0))) throw Error(ErrorCode::InvalidModel, "focal must be positive");
    if (!(circle_radius > Scalar(0)))
      throw Error(ErrorCode::InvalidModel, "image circle radius must be positive");
    if (!(fov_deg > Scalar(0) && fov_deg <= Scalar(360)))
      throw Error(ErrorCode::InvalidModel, "fov must lie in (0, 360] degrees");
    if (abs(radius_of(max_theta()) - circle_radius) > Scalar(1e-6)) {
      throw Error(ErrorCode::InvalidModel,
                  "focal, fov and image circle radius are inconsistent");
    }
  }

  template <typename Other>
  FisheyeModel<Other> cast() const {
    FisheyeModel<Other> m;
    m.kind = kind;
    m.focal = Other(focal);
    m.center = center.template cast<Other>();
    m.circle_radius = Other(circle_radius);
    m.fov_deg = Other(fov_deg);
    return m;
  }
};

using FisheyeModeld = FisheyeModel<double>;

/// Unit bearing in the camera frame.
template <typename Scalar>
class Ray {
 public:
  Ray() : direction_(Vec3<Scalar>::UnitZ()) {}

  /// Normalizes `v`; a zero vector is rejected.
  static Ray from_direction(const Vec3<Scalar>& v) {
    const Scalar n = v.norm();
    if (!(n > Scalar(0))) throw Error(ErrorCode::OutOfRange, "zero-length ray direction");
    Ray r;
    r.direction_ = v / n;
    return r;
  }

  const Vec3<Scalar>& direction() const { return direction_; }

  /// Angle to the optical axis, in [0, pi].
  Scalar theta() const {
    using std::atan2;
    return atan2(direction_.template head<2>().norm(), direction_.z());
  }

 private:
  Vec3<Scalar> direction_;
};

using Rayd = Ray<double>;

/// Rigid transform from camera to world coordinates: world = R * cam + t.
template <typename Scalar>
struct Pose {
  Mat3<Scalar> rotation = Mat3<Scalar>::Identity();
  Vec3<Scalar> translation = Vec3<Scalar>::Zero();

  static Pose identity() { return Pose{}; }

  Vec3<Scalar> apply(const Vec3<Scalar>& p) const { return rotation * p + translation; }

  Vec3<Scalar> apply_inverse(const Vec3<Scalar>& p) const {
    return rotation.transpose() * (p - translation);
  }

  const Vec3<Scalar>& camera_center() const { return translation; }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// this ∘ other: first apply `other`, then this.
  Pose operator*(const Pose& other) const {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  bool is_valid(Scalar tol = Scalar(1e-9)) const {
    using std::abs;
    return abs(rotation.determinant() - Scalar(1)) <= tol &&
           (rotation.transpose() * rotation - Mat3<Scalar>::Identity()).cwiseAbs().maxCoeff() <= tol;
  }
};

using Posed = Pose<double>;

template <typename Scalar>
Mat3<Scalar> rotation_x(Scalar rad) {
  return Eigen::AngleAxis<Scalar>(rad, Vec3<Scalar>::UnitX()).toRotationMatrix();
}
template <typename Scalar>
Mat3<Scalar> rotation_y(Scalar rad) {
  return Eigen::AngleAxis<Scalar>(rad, Vec3<Scalar>::UnitY()).toRotationMatrix();
}
template <typename Scalar>
Mat3<Scalar> rotation_z(Scalar rad) {
  return Eigen::AngleAxis<Scalar>(rad, Vec3<Scalar>::UnitZ()).toRotationMatrix();
}

/// Gimbal XZY Euler angles (degrees) to an active right-handed rotation,
/// R = Ry(ry) * Rz(rz) * Rx(rx).
template <typename Scalar>
Mat3<Scalar> euler_xzy_to_rotation(Scalar rx_deg, Scalar ry_deg, Scalar rz_deg) {
  return rotation_y(deg_to_rad(ry_deg)) * rotation_z(deg_to_rad(rz_deg)) *
         rotation_x(deg_to_rad(rx_deg));
}

/// Inverse of euler_xzy_to_rotation; returns (rx, ry, rz) in degrees with
/// rz in [-90, 90].
template <typename Scalar>
Vec3<Scalar> rotation_to_euler_xzy(const Mat3<Scalar>& R) {
  using std::asin;
  using std::atan2;
  using std::clamp;
  const Scalar rz = asin(clamp(R(1, 0), Scalar(-1), Scalar(1)));
  const Scalar rx = atan2(-R(1, 2), R(1, 1));
  const Scalar ry = atan2(-R(2, 0), R(0, 0));
  return {rad_to_deg(rx), rad_to_deg(ry), rad_to_deg(rz)};
}

/// Projects a camera-frame ray to pixel coordinates; nullopt when the ray is
/// outside the field of view.
template <typename Scalar>
std::optional<Vec2<Scalar>> project_ray(const FisheyeModel<Scalar>& model, const Ray<Scalar>& ray) {
  const Vec3<Scalar>& d = ray.direction();
  const Scalar theta = ray.theta();
  if (theta > model.max_theta()) return std::nullopt;
  const Scalar rho = d.template head<2>().norm();
  if (rho == Scalar(0)) return model.center;
  const Scalar r = model.radius_of(theta);
  return Vec2<Scalar>(model.center + (r / rho) * d.template head<2>());
}

/// Analytic inverse of project_ray; nullopt outside the image circle.
template <typename Scalar>
std::optional<Ray<Scalar>> unproject_pixel(const FisheyeModel<Scalar>& model,
                                           const Vec2<Scalar>& pixel) {
  using std::cos;
  using std::sin;
  const Vec2<Scalar> offset = pixel - model.center;
  const Scalar r = offset.norm();
  // Relative slack absorbs rounding of rays projected exactly onto the rim.
  if (r > model.circle_radius * (Scalar(1) + Scalar(1e-12))) return std::nullopt;
  const auto theta = angle_for_radius(model.kind, model.focal, r);
  if (!theta || *theta > std::numbers::pi_v<Scalar>) return std::nullopt;
  if (r == Scalar(0)) return Ray<Scalar>();
  const Scalar s = sin(*theta);
  Vec3<Scalar> dir;
  dir << s * offset.x() / r, s * offset.y() / r, cos(*theta);
  return Ray<Scalar>::from_direction(dir);
}

inline constexpr double kDefaultDistanceCap = 500.0;

/// World point seen at `pixel` with Euclidean range `distance` along the ray.
template <typename Scalar>
Vec3<Scalar> back_project(const FisheyeModel<Scalar>& model, const Pose<Scalar>& pose,
                          const Vec2<Scalar>& pixel, Scalar distance,
                          Scalar distance_cap = Scalar(kDefaultDistanceCap)) {
  using std::isnan;
  if (isnan(distance) || !(distance > Scalar(0)) || distance > distance_cap) {
    throw Error(ErrorCode::InvalidDistance, "distance outside (0, cap]");
  }
  const auto ray = unproject_pixel(model, pixel);
  if (!ray) throw Error(ErrorCode::OutOfCircle, "pixel outside the image circle");
  return pose.apply(distance * ray->direction());
}

}  // namespace fisheval
