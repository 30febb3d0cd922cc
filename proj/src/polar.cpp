#include "fisheval/polar.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "fisheval/geometry_io.hpp"
#include "fisheval/keyvalue.hpp"

namespace fisheval {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Eigen::Vector2d cell_to_fisheye(const PolarMeta& meta, double row, double col) {
  const double theta = std::clamp(row * meta.theta_resolution, 0.0, meta.max_theta);
  const double phi = col * meta.phi_resolution;
  const double r = meta.source_model.radius_of(theta);
  return meta.source_model.center + r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
}

// dr / dtheta of the radial map.
double radial_rate(const FisheyeModeld& model, double theta) {
  return model.kind == ProjectionKind::Equidistant ? model.focal : model.focal * std::cos(theta / 2.0);
}

long nearest(double v) { return static_cast<long>(std::floor(v + 0.5)); }

}  // namespace

PolarMeta polar_layout(const FisheyeModeld& model) {
  model.validate();
  PolarMeta meta;
  meta.source_model = model;
  meta.source_model_hash = model_hash(model);
  meta.max_theta = std::min(model.max_theta(), std::numbers::pi);
  auto layout = [&](double scale) {
    meta.cols = static_cast<int>(std::ceil(kTwoPi * model.circle_radius * scale));
    meta.rows = std::max(2, static_cast<int>(std::ceil(meta.cols * meta.max_theta / kTwoPi)));
  };
  layout(1.0);
  // Nearest-neighbour sampling reaches every pixel only if each pixel centre
  // is within half a pixel of some sample, i.e. the sampling cell diagonal
  // stays <= 1 px. Near the rim the one-column-per-rim-pixel rule is too
  // coarse for that, so both axes are refined by the missing factor.
  double diagonal = 0.0;
  const double dphi = kTwoPi / meta.cols;
  const double dtheta = meta.max_theta / (meta.rows - 1);
  for (int k = 0; k <= 256; ++k) {
    const double theta = meta.max_theta * k / 256.0;
    const double arc = model.radius_of(theta) * dphi;
    const double radial = radial_rate(model, theta) * dtheta;
    diagonal = std::max(diagonal, std::hypot(arc, radial));
  }
  if (diagonal > 1.0) layout(diagonal);
  meta.phi_resolution = kTwoPi / meta.cols;
  meta.theta_resolution = meta.max_theta / (meta.rows - 1);
  return meta;
}

PolarImage polar_rectify(const GrayImage& image, const FisheyeModeld& model) {
  const double tol = 1e-6;
  const auto& c = model.center;
  if (c.x() - model.circle_radius < -0.5 - tol || c.y() - model.circle_radius < -0.5 - tol ||
      c.x() + model.circle_radius > image.cols() - 0.5 + tol ||
      c.y() + model.circle_radius > image.rows() - 0.5 + tol) {
    throw Error(ErrorCode::ModelMismatch, "image circle exceeds the image bounds");
  }
  PolarImage out;
  out.meta = polar_layout(model);
  out.pixels.resize(out.meta.rows, out.meta.cols);
  for (int i = 0; i < out.meta.rows; ++i) {
    for (int j = 0; j < out.meta.cols; ++j) {
      const Eigen::Vector2d p = cell_to_fisheye(out.meta, i, j);
      const long x = std::clamp(nearest(p.x()), 0L, static_cast<long>(image.cols()) - 1);
      const long y = std::clamp(nearest(p.y()), 0L, static_cast<long>(image.rows()) - 1);
      out.pixels(i, j) = image(y, x);
    }
  }
  return out;
}

Eigen::Vector2d map_coords(PolarDirection direction, const Eigen::Vector2d& coords,
                           const PolarMeta& meta) {
  if (direction == PolarDirection::FisheyeToPolar) {
    const auto ray = unproject_pixel(meta.source_model, coords);
    if (!ray) throw Error(ErrorCode::OutOfCircle, "fisheye point outside the image circle");
    const Eigen::Vector3d& d = ray->direction();
    const double theta = std::min(ray->theta(), meta.max_theta);
    if (theta == 0.0) return Eigen::Vector2d::Zero();
    double phi = std::atan2(d.y(), d.x());
    if (phi < 0.0) phi += kTwoPi;
    double col = phi / meta.phi_resolution;
    if (col >= meta.cols) col -= meta.cols;
    return {col, theta / meta.theta_resolution};
  }
  const double col = coords.x();
  const double row = coords.y();
  if (!(row >= -0.5 && row <= meta.rows - 0.5 && col >= -0.5 && col < meta.cols + 0.5)) {
    throw Error(ErrorCode::OutOfRange, "polar point outside the rectified grid");
  }
  if (row < 0.0) {
    // Half a cell past the pole lands on the opposite azimuth.
    return cell_to_fisheye(meta, -row, col + meta.cols / 2.0);
  }
  return cell_to_fisheye(meta, row, col);
}

Eigen::MatrixXi polar_source_hits(const PolarMeta& meta, int width, int height) {
  Eigen::MatrixXi hits = Eigen::MatrixXi::Zero(height, width);
  for (int i = 0; i < meta.rows; ++i) {
    for (int j = 0; j < meta.cols; ++j) {
      const Eigen::Vector2d p = cell_to_fisheye(meta, i, j);
      const long x = nearest(p.x());
      const long y = nearest(p.y());
      if (x >= 0 && y >= 0 && x < width && y < height) ++hits(y, x);
    }
  }
  return hits;
}

void write_polar_meta(const std::filesystem::path& path, const PolarMeta& meta) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
  out.precision(17);
  out << "# polar rectification metadata\n"
      << "rows = " << meta.rows << "\n"
      << "cols = " << meta.cols << "\n"
      << "theta_resolution = " << meta.theta_resolution << "\n"
      << "phi_resolution = " << meta.phi_resolution << "\n"
      << "max_theta = " << meta.max_theta << "\n"
      << "source_model_hash = " << meta.source_model_hash << "\n"
      << write_model(meta.source_model, "source.");
}

PolarMeta read_polar_meta(const std::filesystem::path& path) {
  const auto kv = KeyValueFile::load(path);
  PolarMeta meta = polar_layout(read_model(kv, "source."));
  if (kv.get_int("rows") != meta.rows || kv.get_int("cols") != meta.cols) {
    kv.fail("rows", "grid size disagrees with the source model");
  }
  if (kv.get("source_model_hash") != meta.source_model_hash) {
    kv.fail("source_model_hash", "does not match the source model parameters");
  }
  return meta;
}

}  // namespace fisheval
