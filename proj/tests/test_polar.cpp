#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <unistd.h>

#include "fisheval/polar.hpp"

using namespace fisheval;

namespace {

constexpr double kPi = 3.14159265358979323846;

FisheyeModeld desk_model(ProjectionKind kind) {
  // 600 px image, 300 px circle centred on the pixel grid.
  return FisheyeModeld::from_fov(kind, 181.8, 299.5, {299.5, 299.5});
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / ("fisheval_polar_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(PolarLayout, WorkedExample2310) {
  // One column per rim pixel gives ceil(2 pi 1155) = 7258 x 1815, whose rim
  // cells are 1.0 x 0.5 px; their diagonal (1.118 px) sets the refinement.
  const double R = 1155.0;
  const auto m = FisheyeModeld::from_fov(ProjectionKind::EquisolidAngle, 180.0, R, {1155, 1155});
  const int cols0 = static_cast<int>(std::ceil(2 * kPi * R));
  const int rows0 = static_cast<int>(std::ceil(cols0 / 4.0));
  ASSERT_EQ(cols0, 7258);
  ASSERT_EQ(rows0, 1815);
  const double f = R / (2 * std::sin(kPi / 4));
  const double arc = R * 2 * kPi / cols0;
  const double radial = f * std::cos(kPi / 4) * (kPi / 2) / (rows0 - 1);
  const double scale = std::hypot(arc, radial);
  const PolarMeta meta = polar_layout(m);
  EXPECT_EQ(meta.cols, static_cast<int>(std::ceil(2 * kPi * R * scale)));
  EXPECT_EQ(meta.rows, static_cast<int>(std::ceil(meta.cols / 4.0)));
  EXPECT_NEAR(meta.cols * meta.phi_resolution, 2 * kPi, 1e-12);
  EXPECT_NEAR((meta.rows - 1) * meta.theta_resolution, kPi / 2, 1e-12);
  // Same order as a 7431 x 1859 rectification of a similar circle.
  EXPECT_NEAR(meta.cols / 7431.0, 1.0, 0.1);
  EXPECT_NEAR(meta.rows / 1859.0, 1.0, 0.1);
}

TEST(PolarLayout, CoverageAcrossModels) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (double R : {60.3, 181.0, 255.5})
    for (double fov : {60.0, 150.0, 181.8, 220.0})
      for (auto kind : {ProjectionKind::Equidistant, ProjectionKind::EquisolidAngle}) {
        const int w = static_cast<int>(2 * R) + 4;
        const Eigen::Vector2d c(R + 1 + u(rng), R + 1 + u(rng));
        const auto m = FisheyeModeld::from_fov(kind, fov, R, c);
        const auto hits = polar_source_hits(polar_layout(m), w, w);
        int missed = 0;
        for (int y = 0; y < w; ++y)
          for (int x = 0; x < w; ++x)
            if ((Eigen::Vector2d(x, y) - c).norm() <= R && hits(y, x) == 0) ++missed;
        EXPECT_EQ(missed, 0) << R << " " << fov << " " << to_string(kind);
      }
}

TEST(PolarRectify, UniformStaysUniform) {
  const auto m = desk_model(ProjectionKind::Equidistant);
  GrayImage img = GrayImage::Constant(600, 600, 0.37f);
  const PolarImage p = polar_rectify(img, m);
  EXPECT_EQ(p.pixels.rows(), p.meta.rows);
  EXPECT_EQ(p.pixels.cols(), p.meta.cols);
  EXPECT_EQ(p.pixels.minCoeff(), 0.37f);
  EXPECT_EQ(p.pixels.maxCoeff(), 0.37f);
}

TEST(PolarRectify, CenterPixelOnlyNearPole) {
  // Integer centre so that the optical centre is exactly one pixel.
  const auto m = FisheyeModeld::from_fov(ProjectionKind::EquisolidAngle, 181.8, 299.0, {300, 300});
  GrayImage img = GrayImage::Zero(600, 600);
  img(300, 300) = 1.0f;
  const PolarImage p = polar_rectify(img, m);
  for (int j = 0; j < p.meta.cols; ++j) EXPECT_EQ(p.pixels(0, j), 1.0f);
  for (int i = 2; i < p.meta.rows; ++i) EXPECT_EQ(p.pixels.row(i).maxCoeff(), 0.0f) << "row " << i;
}

TEST(PolarRectify, ValuesComeFromSource) {
  const auto m = desk_model(ProjectionKind::Equidistant);
  GrayImage img(600, 600);
  std::set<float> values;
  for (int y = 0; y < 600; ++y)
    for (int x = 0; x < 600; ++x) {
      img(y, x) = static_cast<float>((x * 7 + y * 13) % 256) / 255.0f;
      values.insert(img(y, x));
    }
  const PolarImage p = polar_rectify(img, m);
  for (int i = 0; i < p.meta.rows; i += 3)
    for (int j = 0; j < p.meta.cols; j += 3) EXPECT_TRUE(values.count(p.pixels(i, j)));
}

TEST(PolarRectify, CircleBeyondImageIsModelMismatch) {
  const auto m = FisheyeModeld::from_fov(ProjectionKind::Equidistant, 181.8, 320.0, {299.5, 299.5});
  try {
    polar_rectify(GrayImage::Zero(600, 600), m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ModelMismatch);
  }
}

TEST(PolarCoverage, EveryInCirclePixelSampled) {
  for (auto kind : {ProjectionKind::Equidistant, ProjectionKind::EquisolidAngle}) {
    const auto m = desk_model(kind);
    const PolarMeta meta = polar_layout(m);
    const Eigen::MatrixXi hits = polar_source_hits(meta, 600, 600);
    int missed = 0, inside = 0;
    for (int y = 0; y < 600; ++y)
      for (int x = 0; x < 600; ++x) {
        if ((Eigen::Vector2d(x, y) - m.center).norm() > m.circle_radius) continue;
        ++inside;
        if (hits(y, x) == 0) ++missed;
      }
    EXPECT_GT(inside, 280000);
    EXPECT_EQ(missed, 0) << to_string(kind);
  }
}

TEST(MapCoords, CenterToPoleColumnZero) {
  const auto meta = polar_layout(desk_model(ProjectionKind::Equidistant));
  const Eigen::Vector2d p = map_coords(PolarDirection::FisheyeToPolar, meta.source_model.center, meta);
  EXPECT_EQ(p, Eigen::Vector2d(0, 0));
}

TEST(MapCoords, RimAtNinetyDegrees) {
  const auto meta = polar_layout(desk_model(ProjectionKind::EquisolidAngle));
  const auto& m = meta.source_model;
  // Image y points down, so phi = 90 deg is straight below the centre.
  const Eigen::Vector2d rim = m.center + Eigen::Vector2d(0, m.circle_radius);
  const Eigen::Vector2d p = map_coords(PolarDirection::FisheyeToPolar, rim, meta);
  EXPECT_NEAR(p.y(), meta.rows - 1, 1e-6);
  EXPECT_NEAR(p.x(), meta.cols / 4.0, 1e-6);
}

TEST(MapCoords, RoundTripRandomPoints) {
  for (auto kind : {ProjectionKind::Equidistant, ProjectionKind::EquisolidAngle}) {
    const auto meta = polar_layout(desk_model(kind));
    const auto& m = meta.source_model;
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(0, 1);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
      const double r = m.circle_radius * std::sqrt(u(rng));
      const double phi = 2 * kPi * u(rng);
      const Eigen::Vector2d px = m.center + r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
      const Eigen::Vector2d polar = map_coords(PolarDirection::FisheyeToPolar, px, meta);
      const Eigen::Vector2d back = map_coords(PolarDirection::PolarToFisheye, polar, meta);
      worst = std::max(worst, (back - px).norm());
    }
    EXPECT_LT(worst, 1e-6);
  }
}

TEST(MapCoords, Errors) {
  const auto meta = polar_layout(desk_model(ProjectionKind::Equidistant));
  try {
    map_coords(PolarDirection::FisheyeToPolar, {0.0, 0.0}, meta);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfCircle);
  }
  try {
    map_coords(PolarDirection::PolarToFisheye, {10.0, meta.rows + 1.0}, meta);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
  }
}

TEST(MapCoords, ColumnsWrapNearFullTurn) {
  const auto meta = polar_layout(desk_model(ProjectionKind::Equidistant));
  const auto& m = meta.source_model;
  // Just below a full turn the forward map lands past the last column centre.
  const double phi = 2 * kPi - 0.25 * meta.phi_resolution;
  const Eigen::Vector2d px = m.center + 100.0 * Eigen::Vector2d(std::cos(phi), std::sin(phi));
  const Eigen::Vector2d polar = map_coords(PolarDirection::FisheyeToPolar, px, meta);
  EXPECT_GT(polar.x(), meta.cols - 0.5);
  EXPECT_LT((map_coords(PolarDirection::PolarToFisheye, polar, meta) - px).norm(), 1e-9);
  EXPECT_THROW(map_coords(PolarDirection::PolarToFisheye, {meta.cols + 0.5, 10.0}, meta), Error);
}

TEST(MapCoords, NegativeRowFlipsAzimuth) {
  const auto meta = polar_layout(desk_model(ProjectionKind::Equidistant));
  const Eigen::Vector2d a = map_coords(PolarDirection::PolarToFisheye, {0.0, -0.4}, meta);
  const Eigen::Vector2d b = map_coords(PolarDirection::PolarToFisheye, {meta.cols / 2.0, 0.4}, meta);
  EXPECT_LT((a - b).norm(), 1e-9);
}

TEST(PolarMetaIo, RoundTrip) {
  const auto meta = polar_layout(desk_model(ProjectionKind::EquisolidAngle));
  const auto path = temp_dir() / "meta.txt";
  write_polar_meta(path, meta);
  const PolarMeta back = read_polar_meta(path);
  EXPECT_EQ(back.rows, meta.rows);
  EXPECT_EQ(back.cols, meta.cols);
  EXPECT_DOUBLE_EQ(back.theta_resolution, meta.theta_resolution);
  EXPECT_EQ(back.source_model_hash, meta.source_model_hash);
  std::filesystem::remove_all(path.parent_path());
}
