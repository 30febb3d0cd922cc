#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fisheval/error.hpp"
#include "fisheval/matching.hpp"

using namespace fisheval;

namespace {

DescriptorSet real_rows(std::initializer_list<std::vector<float>> rows) {
  const int w = static_cast<int>(rows.begin()->size());
  DescriptorSet d = DescriptorSet::make_real(static_cast<int>(rows.size()), w);
  int i = 0;
  for (const auto& r : rows) {
    for (int k = 0; k < w; ++k) d.real(i, k) = r[k];
    ++i;
  }
  return d;
}

DescriptorSet random_real(int n, int w, std::mt19937& rng) {
  std::normal_distribution<float> g;
  DescriptorSet d = DescriptorSet::make_real(n, w);
  for (Eigen::Index i = 0; i < d.real.size(); ++i) d.real.data()[i] = g(rng);
  return d;
}

DescriptorSet random_bits(int n, int bits, std::mt19937& rng) {
  DescriptorSet d = DescriptorSet::make_binary(n, bits);
  for (Eigen::Index i = 0; i < d.bits.size(); ++i) d.bits.data()[i] = static_cast<std::uint8_t>(rng());
  return d;
}

// Shuffled copy of `a` with Gaussian noise; perm[i] is the row of a's i-th descriptor.
DescriptorSet noisy_copy(const DescriptorSet& a, float sigma, std::mt19937& rng, std::vector<int>* perm) {
  perm->resize(a.size());
  for (int i = 0; i < a.size(); ++i) (*perm)[i] = i;
  std::shuffle(perm->begin(), perm->end(), rng);
  std::normal_distribution<float> g(0, sigma);
  DescriptorSet b = DescriptorSet::make_real(a.size(), a.width);
  for (int i = 0; i < a.size(); ++i)
    for (int k = 0; k < a.width; ++k) b.real((*perm)[i], k) = a.real(i, k) + g(rng);
  return b;
}

std::vector<int> brute_nearest(const DescriptorSet& a, const DescriptorSet& b) {
  std::vector<int> best(a.size(), -1);
  for (int i = 0; i < a.size(); ++i) {
    double d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < b.size(); ++j) {
      double s = 0;
      for (int k = 0; k < a.width; ++k) s += double(a.real(i, k) - b.real(j, k)) * (a.real(i, k) - b.real(j, k));
      if (s < d) {
        d = s;
        best[i] = j;
      }
    }
  }
  return best;
}

MatchParams with(MatchStrategy s) {
  MatchParams p;
  p.strategy = s;
  return p;
}

}  // namespace

TEST(Distance, L2AndHamming) {
  const std::vector<float> a{0, 0}, b{3, 4};
  EXPECT_DOUBLE_EQ(l2_distance(a, b), 5.0);
  const std::vector<std::uint8_t> x{0b1010}, y{0b0110};
  EXPECT_EQ(hamming_distance(x, y), 2);
  const std::vector<std::uint8_t> full{0xFF, 0xFF}, none{0x00, 0x00};
  EXPECT_EQ(hamming_distance(full, none), 16);
}

TEST(Distance, TypeMismatch) {
  std::mt19937 rng(1);
  const auto r = random_real(3, 8, rng);
  const auto r16 = random_real(3, 16, rng);
  const auto bits = random_bits(3, 64, rng);
  for (const DescriptorSet* other : {&r16, &bits}) {
    try {
      match(r, *other, MatchParams{});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::TypeMismatch);
    }
    try {
      descriptor_distance(r, 0, *other, 0);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::TypeMismatch);
    }
  }
}

TEST(Match, ApproxNNOnBinaryIsUnsupported) {
  std::mt19937 rng(2);
  const auto a = random_bits(4, 256, rng);
  try {
    match(a, a, with(MatchStrategy::ApproxNN));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedMetric);
  }
}

TEST(Match, EmptyInputsGiveNoMatches) {
  std::mt19937 rng(3);
  const auto a = random_real(5, 8, rng);
  const auto empty = DescriptorSet::make_real(0, 8);
  for (auto s : {MatchStrategy::BruteForce, MatchStrategy::RatioTest, MatchStrategy::ApproxNN}) {
    EXPECT_TRUE(match(a, empty, with(s)).empty());
    EXPECT_TRUE(match(empty, a, with(s)).empty());
  }
}

TEST(Match, RatioTestArithmetic) {
  const auto q = real_rows({{0, 0}});
  // d1 = 1, d2 = 2: kept at ratio 0.8 (1 < 1.6), dropped at ratio 0.5 (1 < 1.0 is false).
  const auto t = real_rows({{1, 0}, {0, 2}});
  MatchParams p = with(MatchStrategy::RatioTest);
  const auto kept = match(q, t, p);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].index_b, 0);
  EXPECT_DOUBLE_EQ(kept[0].distance, 1.0);
  p.ratio = 0.5;
  EXPECT_TRUE(match(q, t, p).empty());
}

TEST(Match, RatioTestSingleCandidateAccepted) {
  const auto q = real_rows({{0, 0}});
  const auto t = real_rows({{3, 4}});
  const auto m = match(q, t, with(MatchStrategy::RatioTest));
  ASSERT_EQ(m.size(), 1u);
  EXPECT_DOUBLE_EQ(m[0].distance, 5.0);
}

TEST(Match, BruteForceIsOptimal) {
  std::mt19937 rng(4);
  const auto a = random_real(60, 16, rng);
  const auto b = random_real(80, 16, rng);
  const auto m = match(a, b, MatchParams{});
  ASSERT_EQ(m.size(), 60u);
  for (const auto& am : m) {
    for (int j = 0; j < b.size(); ++j) EXPECT_LE(am.distance, descriptor_distance(a, am.index_a, b, j) + 1e-12);
    EXPECT_DOUBLE_EQ(am.distance, descriptor_distance(a, am.index_a, b, am.index_b));
  }
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_LT(m[i - 1].index_a, m[i].index_a);
}

TEST(Match, BinaryBruteForceIsOptimal) {
  std::mt19937 rng(5);
  const auto a = random_bits(40, 256, rng);
  const auto b = random_bits(50, 256, rng);
  for (const auto& am : match(a, b, MatchParams{}))
    for (int j = 0; j < b.size(); ++j) EXPECT_LE(am.distance, descriptor_distance(a, am.index_a, b, j));
}

TEST(Match, RatioTestIsSubsetOfBruteForce) {
  std::mt19937 rng(6);
  const auto a = random_real(100, 32, rng);
  std::vector<int> perm;
  const auto b = noisy_copy(a, 1.5f, rng, &perm);
  const auto all = match(a, b, MatchParams{});
  const auto ratio = match(a, b, with(MatchStrategy::RatioTest));
  EXPECT_LT(ratio.size(), all.size());
  EXPECT_GT(ratio.size(), 0u);
  for (const auto& r : ratio) {
    const auto it = std::find_if(all.begin(), all.end(), [&](const AttemptedMatch& m) { return m.index_a == r.index_a; });
    ASSERT_NE(it, all.end());
    EXPECT_EQ(it->index_b, r.index_b);
  }
}

TEST(Match, CrossCheckKeepsMutualPairs) {
  std::mt19937 rng(7);
  const auto a = random_real(50, 8, rng);
  const auto b = random_real(30, 8, rng);
  MatchParams p;
  p.cross_check = true;
  const auto m = match(a, b, p);
  const auto back = match(b, a, MatchParams{});
  EXPECT_LE(m.size(), 30u);
  for (const auto& am : m) EXPECT_EQ(back[am.index_b].index_b, am.index_a);
  EXPECT_EQ(p.label(), "BruteForce xcheck");
}

TEST(Match, ApproxNNAgreesWithBruteForce) {
  std::mt19937 rng(8);
  const auto a = random_real(500, 128, rng);
  std::vector<int> perm;
  const auto b = noisy_copy(a, 0.3f, rng, &perm);
  const auto truth = brute_nearest(a, b);
  const auto m = match(a, b, with(MatchStrategy::ApproxNN));
  ASSERT_EQ(m.size(), 500u);
  int agree = 0;
  for (const auto& am : m) agree += am.index_b == truth[am.index_a];
  EXPECT_GE(agree, 450);
}

TEST(Match, ApproxNNDeterministic) {
  std::mt19937 rng(9);
  const auto a = random_real(200, 64, rng);
  const auto b = random_real(200, 64, rng);
  const auto m1 = match(a, b, with(MatchStrategy::ApproxNN));
  const auto m2 = match(a, b, with(MatchStrategy::ApproxNN));
  ASSERT_EQ(m1.size(), m2.size());
  for (std::size_t i = 0; i < m1.size(); ++i) EXPECT_EQ(m1[i].index_b, m2[i].index_b);
}

TEST(Match, Labels) {
  EXPECT_EQ(with(MatchStrategy::RatioTest).label(), "RatioTest 0.8");
  EXPECT_EQ(with(MatchStrategy::ApproxNN).label(), "ApproxNN 4 256");
  EXPECT_EQ(match_strategy_from_string("RatioTest"), MatchStrategy::RatioTest);
}
