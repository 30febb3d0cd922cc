#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fisheval/error.hpp"
#include "fisheval/features.hpp"

using namespace fisheval;

namespace {

constexpr double kPi = std::numbers::pi;

GrayImage gaussian_blob(int size, double cx, double cy, double s, float amplitude = 0.8f) {
  GrayImage img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      img(y, x) = 0.1f + amplitude * static_cast<float>(
                             std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s)));
  return img;
}

// Sum of random Gaussian blobs and a few bright rectangles.
GrayImage textured(int size, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> pos(0, size), sc(1.5, 6.0), amp(-0.3, 0.3);
  GrayImage img = GrayImage::Constant(size, size, 0.5f);
  for (int b = 0; b < size / 2; ++b) {
    const double cx = pos(rng), cy = pos(rng), s = sc(rng), a = amp(rng);
    const int r = static_cast<int>(3 * s);
    for (int y = std::max(0, int(cy) - r); y < std::min(size, int(cy) + r + 1); ++y)
      for (int x = std::max(0, int(cx) - r); x < std::min(size, int(cx) + r + 1); ++x)
        img(y, x) += static_cast<float>(a * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s)));
  }
  for (int k = 0; k < 6; ++k) {
    const int x0 = static_cast<int>(pos(rng) * 0.8), y0 = static_cast<int>(pos(rng) * 0.8);
    img.block(y0, x0, size / 10, size / 8).array() += 0.2f;
  }
  return img.cwiseMax(0.0f).cwiseMin(1.0f);
}

// Rotation by +90 degrees in image coordinates: (x, y) -> (n - 1 - y, x).
GrayImage rotate90(const GrayImage& img) {
  const int n = static_cast<int>(img.rows());
  GrayImage out(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) out(x, n - 1 - y) = img(y, x);
  return out;
}

DetectorParams params_for(DetectorAlgorithm a) {
  DetectorParams p;
  p.algorithm = a;
  return p;
}

}  // namespace

TEST(Detect, ConstantImageHasNoKeypoints) {
  const GrayImage img = GrayImage::Constant(64, 64, 0.4f);
  for (auto a : {DetectorAlgorithm::DoG, DetectorAlgorithm::Harris, DetectorAlgorithm::FastPyramid})
    EXPECT_TRUE(detect(img, params_for(a)).empty()) << to_string(a);
}

TEST(Detect, DogFindsBlobAtItsScale) {
  for (double s : {3.0, 6.0}) {
    const GrayImage img = gaussian_blob(96, 48, 48, s);
    const auto kps = detect(img, params_for(DetectorAlgorithm::DoG));
    ASSERT_FALSE(kps.empty()) << s;
    const Keypoint& top = kps.front();
    EXPECT_NEAR(top.x, 48, 0.5);
    EXPECT_NEAR(top.y, 48, 0.5);
    // A Gaussian blob of std s peaks in scale-normalised DoG near sigma = s.
    EXPECT_NEAR(top.scale / s, 1.0, 0.25) << top.scale;
  }
}

TEST(Detect, HarrisAndFastFindSquareCorners) {
  GrayImage img = GrayImage::Constant(64, 64, 0.1f);
  img.block(20, 20, 24, 24).setConstant(0.9f);
  const std::vector<Eigen::Vector2d> corners{{20, 20}, {43, 20}, {20, 43}, {43, 43}};
  for (auto a : {DetectorAlgorithm::Harris, DetectorAlgorithm::FastPyramid}) {
    const auto kps = detect(img, params_for(a));
    ASSERT_GE(kps.size(), 4u) << to_string(a);
    for (const auto& c : corners) {
      double best = 1e9;
      for (const auto& kp : kps) best = std::min(best, (Eigen::Vector2d(kp.x, kp.y) - c).norm());
      EXPECT_LT(best, 2.5) << to_string(a) << " corner " << c.transpose();
    }
  }
}

TEST(Detect, ContrastThresholdIsMonotone) {
  const GrayImage img = textured(128, 1);
  std::size_t prev = SIZE_MAX;
  for (double t : {0.01, 0.02, 0.04, 0.08}) {
    DetectorParams p;
    p.contrast_threshold = t;
    const std::size_t n = detect(img, p).size();
    EXPECT_LE(n, prev) << t;
    prev = n;
  }
  EXPECT_GT(detect(img, DetectorParams{}).size(), 10u);
}

TEST(Detect, EdgeThresholdIsMonotone) {
  const GrayImage img = textured(128, 2);
  std::size_t prev = 0;
  for (double e : {2.0, 5.0, 10.0, 20.0}) {
    DetectorParams p;
    p.edge_threshold = e;
    const std::size_t n = detect(img, p).size();
    EXPECT_GE(n, prev) << e;
    prev = n;
  }
}

TEST(Detect, FastThresholdIsMonotone) {
  const GrayImage img = textured(128, 3);
  std::size_t prev = SIZE_MAX;
  for (double t : {0.02, 0.05, 0.1, 0.2}) {
    DetectorParams p = params_for(DetectorAlgorithm::FastPyramid);
    p.fast_threshold = t;
    const std::size_t n = detect(img, p).size();
    EXPECT_LE(n, prev) << t;
    prev = n;
  }
}

TEST(Detect, DeterministicAndSorted) {
  const GrayImage img = textured(128, 4);
  for (auto a : {DetectorAlgorithm::DoG, DetectorAlgorithm::Harris, DetectorAlgorithm::FastPyramid}) {
    const auto k1 = detect(img, params_for(a));
    const auto k2 = detect(img, params_for(a));
    ASSERT_EQ(k1.size(), k2.size());
    for (std::size_t i = 0; i < k1.size(); ++i) {
      EXPECT_EQ(k1[i].x, k2[i].x);
      EXPECT_EQ(k1[i].orientation, k2[i].orientation);
      if (i > 0) EXPECT_GE(k1[i - 1].response, k1[i].response);
      EXPECT_GE(k1[i].orientation, 0.0);
      EXPECT_LT(k1[i].orientation, 2 * kPi);
    }
  }
}

TEST(Detect, ErrorsAndLabels) {
  try {
    detect(GrayImage::Constant(5, 5, 0.5f), DetectorParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ImageTooSmall);
  }
  DetectorParams bad;
  bad.n_octave_layers = 0;
  try {
    detect(GrayImage::Constant(64, 64, 0.5f), bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadConfig);
  }
  EXPECT_EQ(DetectorParams{}.label(), "DoG 0.04 10.0 1.6 3");
  EXPECT_EQ(detector_algorithm_from_string("FAST"), DetectorAlgorithm::FastPyramid);
}

TEST(Scale, SpaceLevels) {
  const ScaleSpace s = build_scale_space(textured(64, 5), 1.6, 3, default_octave_count(64, 64));
  ASSERT_EQ(s.octaves.size(), 5u);  // the 2x2 octave is below the 3 px minimum
  EXPECT_EQ(s.octaves[0].size(), 6u);
  EXPECT_EQ(s.octaves[1][0].rows(), 32);
  EXPECT_EQ(s.level_for_scale(1.6), std::make_pair(0, 0));
  EXPECT_EQ(s.level_for_scale(3.2), std::make_pair(1, 0));
  EXPECT_EQ(s.level_for_scale(1.6 * std::pow(2.0, 2.0 / 3)), std::make_pair(0, 2));
}

// Descriptors -----------------------------------------------------------------

TEST(Describe, ZeroPatchGivesZeroVector) {
  const GrayImage img = GrayImage::Constant(65, 65, 0.3f);
  Keypoint kp;
  kp.x = kp.y = 32;
  kp.scale = 1.6;
  const auto r = describe(img, {kp}, DescriptorParams{});
  ASSERT_EQ(r.kept, std::vector<int>{0});
  EXPECT_EQ(r.descriptors.real.row(0).squaredNorm(), 0.0f);
}

TEST(Describe, GradHistNormIsZeroOrOne) {
  const GrayImage img = textured(128, 6);
  const auto kps = detect(img, DetectorParams{});
  const auto r = describe(img, kps, DescriptorParams{});
  ASSERT_GT(r.kept.size(), 5u);
  for (int i = 0; i < r.descriptors.size(); ++i) {
    const float n = r.descriptors.real.row(i).norm();
    EXPECT_TRUE(n == 0.0f || std::abs(n - 1.0f) < 1e-5f) << n;
    EXPECT_GE(r.descriptors.real.row(i).minCoeff(), 0.0f);
  }
}

TEST(Describe, GradHistRotationCovariant) {
  const GrayImage img = textured(129, 7);
  const GrayImage rot = rotate90(img);
  Keypoint kp;
  kp.x = kp.y = 64;
  kp.scale = 2.5;
  for (double ori : {0.3, 1.0, 4.0}) {
    kp.orientation = ori;
    Keypoint kr = kp;
    kr.orientation = std::fmod(ori + kPi / 2, 2 * kPi);
    const auto a = describe(img, {kp}, DescriptorParams{});
    const auto b = describe(rot, {kr}, DescriptorParams{});
    ASSERT_EQ(a.descriptors.size(), 1);
    ASSERT_EQ(b.descriptors.size(), 1);
    const double diff = (a.descriptors.real.row(0) - b.descriptors.real.row(0)).norm();
    EXPECT_LT(diff, 0.05 * a.descriptors.real.row(0).norm()) << ori;
  }
}

TEST(Describe, RotBinaryRotationCovariant) {
  const GrayImage img = textured(129, 8);
  const GrayImage rot = rotate90(img);
  DescriptorParams p;
  p.kind = DescriptorKind::RotBinary;
  Keypoint kp;
  kp.x = kp.y = 64;
  kp.scale = 2.0;
  kp.orientation = 0.7;
  Keypoint kr = kp;
  kr.orientation = 0.7 + kPi / 2;
  const auto a = describe(img, {kp}, p);
  const auto b = describe(rot, {kr}, p);
  ASSERT_EQ(a.descriptors.size(), 1);
  ASSERT_EQ(b.descriptors.size(), 1);
  int differing = 0;
  for (int k = 0; k < kRotBinaryBits; ++k) differing += a.descriptors.bit(0, k) != b.descriptors.bit(0, k);
  EXPECT_LE(differing, kRotBinaryBits / 20);
}

TEST(Describe, BorderKeypointsAreDropped) {
  const GrayImage img = textured(96, 9);
  KeypointList kps;
  for (double x : {0.0, 2.0, 48.0, 94.0, 95.0}) {
    Keypoint kp;
    kp.x = x;
    kp.y = x == 48.0 ? 48.0 : 1.0;
    kp.scale = 1.6;
    kps.push_back(kp);
  }
  for (auto kind : {DescriptorKind::GradHist, DescriptorKind::RotBinary}) {
    DescriptorParams p;
    p.kind = kind;
    const auto r = describe(img, kps, p);
    EXPECT_EQ(r.kept, std::vector<int>{2}) << to_string(kind);
    EXPECT_EQ(r.descriptors.size(), 1);
    EXPECT_GT(descriptor_support_radius(kps[2], p), 5.0);
  }
}

TEST(Describe, EmptyInputs) {
  EXPECT_EQ(describe(textured(32, 1), {}, DescriptorParams{}).descriptors.size(), 0);
  try {
    describe(GrayImage(), {Keypoint{}}, DescriptorParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}
