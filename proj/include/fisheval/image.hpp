#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>

namespace fisheval {

/// Grayscale intensities in [0, 1], indexed (row = y, col = x).
using GrayImage = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Byte mask; nonzero means "set".
using ByteMask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Raw16Image = Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// PNG (gray/RGB, 8 or 16 bit) or JPEG, converted to luminance.
GrayImage read_gray_image(const std::filesystem::path& path);
/// 8-bit grayscale PNG; values are clamped to [0, 1] and rounded.
void write_gray_png(const std::filesystem::path& path, const GrayImage& image);

/// Raw 16-bit single-channel samples without any gamma or scaling.
Raw16Image read_png16(const std::filesystem::path& path);
void write_png16(const std::filesystem::path& path, const Raw16Image& image);

ByteMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const ByteMask& mask);

}  // namespace fisheval
