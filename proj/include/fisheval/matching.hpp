#pragma once

#include <span>
#include <string>
#include <vector>

#include "fisheval/keypoint.hpp"

namespace fisheval {

struct AttemptedMatch {
  int index_a = 0;
  int index_b = 0;
  double distance = 0.0;  // L2 for real descriptors, Hamming for binary ones
};

double l2_distance(std::span<const float> a, std::span<const float> b);
int hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Distance between row `ia` of `a` and row `ib` of `b`; TypeMismatch when
/// the sets differ in type or width.
double descriptor_distance(const DescriptorSet& a, int ia, const DescriptorSet& b, int ib);

enum class MatchStrategy { BruteForce, RatioTest, ApproxNN };

std::string to_string(MatchStrategy strategy);
MatchStrategy match_strategy_from_string(const std::string& name);

struct MatchParams {
  MatchStrategy strategy = MatchStrategy::BruteForce;
  /// RatioTest keeps the nearest neighbour iff d1 < ratio * d2.
  double ratio = 0.8;
  /// ApproxNN: randomized kd-trees searched best-bin-first until `checks`
  /// leaf points have been compared. More checks trade speed for recall.
  int trees = 4;
  int leaf_size = 8;
  int checks = 256;
  unsigned seed = 1;
  /// Keep only mutual nearest neighbours.
  bool cross_check = false;

  std::string label() const;
};

/// One attempted match per query descriptor of `a` at most, ordered by
/// index_a. Empty inputs yield no matches.
std::vector<AttemptedMatch> match(const DescriptorSet& a, const DescriptorSet& b, const MatchParams& params);

}  // namespace fisheval
