#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace fisheval {

/// Image a detection's coordinates refer to.
enum class ImageFrame { Fisheye, Polar };

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double scale = 1.0;        // sigma, pixels
  double orientation = 0.0;  // radians in [0, 2 pi)
  double response = 0.0;
  ImageFrame frame = ImageFrame::Fisheye;
};

using KeypointList = std::vector<Keypoint>;

/// Row-per-keypoint descriptor matrix, either real-valued or packed bits
/// (bit k of a row lives in byte k / 8, position k % 8).
struct DescriptorSet {
  enum class Type { Real, Binary };

  Type type = Type::Real;
  int width = 0;  // reals per row, or bits per row
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> real;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> bits;

  static DescriptorSet make_real(int rows, int width) {
    DescriptorSet d;
    d.type = Type::Real;
    d.width = width;
    d.real.setZero(rows, width);
    return d;
  }
  static DescriptorSet make_binary(int rows, int width_bits) {
    DescriptorSet d;
    d.type = Type::Binary;
    d.width = width_bits;
    d.bits.setZero(rows, (width_bits + 7) / 8);
    return d;
  }

  int size() const { return static_cast<int>(type == Type::Real ? real.rows() : bits.rows()); }
  bool empty() const { return size() == 0; }

  bool bit(int row, int k) const { return (bits(row, k / 8) >> (k % 8)) & 1U; }
  void set_bit(int row, int k, bool value) {
    const auto mask = static_cast<std::uint8_t>(1U << (k % 8));
    if (value) bits(row, k / 8) |= mask; else bits(row, k / 8) &= static_cast<std::uint8_t>(~mask);
  }
};

}  // namespace fisheval
