#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>

#include "fisheval/geometry.hpp"
#include "fisheval/image.hpp"

namespace fisheval {

/// Layout of a (theta, phi) rectified image. Row i holds theta = i *
/// theta_resolution, column j holds phi = j * phi_resolution.
struct PolarMeta {
  int rows = 0;
  int cols = 0;
  double theta_resolution = 0.0;
  double phi_resolution = 0.0;
  double max_theta = 0.0;
  FisheyeModeld source_model;
  std::string source_model_hash;
};

struct PolarImage {
  GrayImage pixels;
  PolarMeta meta;
};

/// Adaptive resolution: cols = ceil(2 pi R s), rows = ceil(cols * (fov/2) / (2 pi)),
/// where s >= 1 is the smallest refinement whose sampling cells have a
/// diagonal of at most one source pixel (so every in-circle pixel is read).
PolarMeta polar_layout(const FisheyeModeld& model);

/// Nearest-neighbour resampling of the fisheye disc onto the polar grid.
PolarImage polar_rectify(const GrayImage& image, const FisheyeModeld& model);

enum class PolarDirection { FisheyeToPolar, PolarToFisheye };

/// Polar coordinates are (x = column, y = row). Throws OutOfCircle for a
/// fisheye point outside the disc and OutOfRange for a polar point outside
/// the grid (half a cell of slack on each side). Columns wrap, so the last
/// column's far half maps back next to column 0.
Eigen::Vector2d map_coords(PolarDirection direction, const Eigen::Vector2d& coords,
                           const PolarMeta& meta);

/// Per-source-pixel count of polar cells that sample it.
Eigen::MatrixXi polar_source_hits(const PolarMeta& meta, int width, int height);

void write_polar_meta(const std::filesystem::path& path, const PolarMeta& meta);
PolarMeta read_polar_meta(const std::filesystem::path& path);

}  // namespace fisheval
