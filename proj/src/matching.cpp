#include "fisheval/matching.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>
#include <numeric>
#include <queue>
#include <random>

#include "fisheval/error.hpp"

namespace fisheval {

double l2_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

int hamming_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  int count = 0;
  std::size_t i = 0;
  for (; i + 8 <= a.size(); i += 8) {
    std::uint64_t x, y;
    std::memcpy(&x, a.data() + i, 8);
    std::memcpy(&y, b.data() + i, 8);
    count += std::popcount(x ^ y);
  }
  for (; i < a.size(); ++i) count += std::popcount(static_cast<unsigned>(a[i] ^ b[i]));
  return count;
}

namespace {

std::span<const float> real_row(const DescriptorSet& d, int i) {
  return {d.real.row(i).data(), static_cast<std::size_t>(d.width)};
}

std::span<const std::uint8_t> bit_row(const DescriptorSet& d, int i) {
  return {d.bits.row(i).data(), static_cast<std::size_t>(d.bits.cols())};
}

void check_compatible(const DescriptorSet& a, const DescriptorSet& b) {
  if (a.type != b.type || a.width != b.width) {
    throw Error(ErrorCode::TypeMismatch, "descriptor sets differ in type or width");
  }
}

struct Neighbours {
  int best = -1;
  double d1 = std::numeric_limits<double>::infinity();
  double d2 = std::numeric_limits<double>::infinity();

  void offer(int idx, double d) {
    if (d < d1) {
      d2 = d1;
      d1 = d;
      best = idx;
    } else if (d < d2) {
      d2 = d;
    }
  }
};

Neighbours exhaustive(const DescriptorSet& query, int qi, const DescriptorSet& train) {
  Neighbours nb;
  for (int j = 0; j < train.size(); ++j) nb.offer(j, descriptor_distance(query, qi, train, j));
  return nb;
}

// Randomized kd-forest over real descriptors.
class KdForest {
 public:
  KdForest(const DescriptorSet& data, const MatchParams& params) : data_(data), params_(params) {
    std::mt19937 rng(params.seed);
    std::vector<int> idx(static_cast<std::size_t>(data.size()));
    std::iota(idx.begin(), idx.end(), 0);
    for (int t = 0; t < std::max(1, params.trees); ++t) {
      roots_.push_back(build(idx, 0, static_cast<int>(idx.size()), rng));
    }
  }

  Neighbours query(std::span<const float> q) const {
    struct Branch {
      double bound;
      const Node* node;
      bool operator>(const Branch& o) const { return bound > o.bound; }
    };
    std::priority_queue<Branch, std::vector<Branch>, std::greater<>> heap;
    Neighbours nb;
    std::vector<char> seen(static_cast<std::size_t>(data_.size()), 0);
    int checked = 0;
    for (const auto& root : roots_) heap.push({0.0, root.get()});
    while (!heap.empty() && checked < params_.checks) {
      const Branch br = heap.top();
      heap.pop();
      if (br.bound >= nb.d2 * nb.d2 && nb.best >= 0 && checked > 0) continue;
      const Node* node = br.node;
      while (node->points.empty()) {
        const double diff = q[node->dim] - node->split;
        const Node* near = diff < 0 ? node->left.get() : node->right.get();
        const Node* far = diff < 0 ? node->right.get() : node->left.get();
        heap.push({br.bound + diff * diff, far});
        node = near;
      }
      for (int p : node->points) {
        if (seen[p]) continue;
        seen[p] = 1;
        ++checked;
        nb.offer(p, l2_distance(q, real_row(data_, p)));
      }
    }
    return nb;
  }

 private:
  struct Node {
    int dim = 0;
    float split = 0.0f;
    std::unique_ptr<Node> left;
    std::unique_ptr<Node> right;
    std::vector<int> points;  // non-empty only at leaves
  };

  std::unique_ptr<Node> build(std::vector<int>& idx, int begin, int end, std::mt19937& rng) {
    auto node = std::make_unique<Node>();
    const int count = end - begin;
    if (count <= std::max(1, params_.leaf_size)) {
      node->points.assign(idx.begin() + begin, idx.begin() + end);
      return node;
    }
    const int width = data_.width;
    std::vector<double> mean(width, 0.0), var(width, 0.0);
    for (int i = begin; i < end; ++i)
      for (int d = 0; d < width; ++d) mean[d] += data_.real(idx[i], d);
    for (auto& m : mean) m /= count;
    for (int i = begin; i < end; ++i)
      for (int d = 0; d < width; ++d) {
        const double v = data_.real(idx[i], d) - mean[d];
        var[d] += v * v;
      }
    std::vector<int> dims(width);
    std::iota(dims.begin(), dims.end(), 0);
    const int top = std::min(5, width);
    std::partial_sort(dims.begin(), dims.begin() + top, dims.end(),
                      [&](int a, int b) { return var[a] > var[b] || (var[a] == var[b] && a < b); });
    std::uniform_int_distribution<int> pick(0, top - 1);
    node->dim = dims[pick(rng)];
    node->split = static_cast<float>(mean[node->dim]);
    auto mid_it = std::partition(idx.begin() + begin, idx.begin() + end,
                                 [&](int p) { return data_.real(p, node->dim) < node->split; });
    int mid = static_cast<int>(mid_it - idx.begin());
    if (mid == begin || mid == end) mid = begin + count / 2;  // all equal along dim
    node->left = build(idx, begin, mid, rng);
    node->right = build(idx, mid, end, rng);
    return node;
  }

  const DescriptorSet& data_;
  MatchParams params_;
  std::vector<std::unique_ptr<Node>> roots_;
};

}  // namespace

double descriptor_distance(const DescriptorSet& a, int ia, const DescriptorSet& b, int ib) {
  check_compatible(a, b);
  if (a.type == DescriptorSet::Type::Real) return l2_distance(real_row(a, ia), real_row(b, ib));
  return hamming_distance(bit_row(a, ia), bit_row(b, ib));
}

std::string to_string(MatchStrategy strategy) {
  switch (strategy) {
    case MatchStrategy::BruteForce: return "BruteForce";
    case MatchStrategy::RatioTest: return "RatioTest";
    case MatchStrategy::ApproxNN: return "ApproxNN";
  }
  return "?";
}

MatchStrategy match_strategy_from_string(const std::string& name) {
  if (name == "BruteForce") return MatchStrategy::BruteForce;
  if (name == "RatioTest") return MatchStrategy::RatioTest;
  if (name == "ApproxNN") return MatchStrategy::ApproxNN;
  throw Error(ErrorCode::BadConfig, "unknown matcher '" + name + "'");
}

std::string MatchParams::label() const {
  char buf[64];
  if (strategy == MatchStrategy::RatioTest) {
    std::snprintf(buf, sizeof(buf), "RatioTest %g", ratio);
  } else if (strategy == MatchStrategy::ApproxNN) {
    std::snprintf(buf, sizeof(buf), "ApproxNN %d %d", trees, checks);
  } else {
    std::snprintf(buf, sizeof(buf), "BruteForce");
  }
  return cross_check ? std::string(buf) + " xcheck" : std::string(buf);
}

std::vector<AttemptedMatch> match(const DescriptorSet& a, const DescriptorSet& b, const MatchParams& params) {
  check_compatible(a, b);
  std::vector<AttemptedMatch> out;
  if (a.empty() || b.empty()) return out;
  if (params.strategy == MatchStrategy::ApproxNN && a.type != DescriptorSet::Type::Real) {
    throw Error(ErrorCode::UnsupportedMetric, "approximate nearest neighbour needs real descriptors");
  }

  std::vector<Neighbours> forward(static_cast<std::size_t>(a.size()));
  if (params.strategy == MatchStrategy::ApproxNN) {
    const KdForest forest(b, params);
    for (int i = 0; i < a.size(); ++i) forward[i] = forest.query(real_row(a, i));
  } else {
    for (int i = 0; i < a.size(); ++i) forward[i] = exhaustive(a, i, b);
  }

  std::vector<int> backward;
  if (params.cross_check) {
    backward.resize(static_cast<std::size_t>(b.size()));
    for (int j = 0; j < b.size(); ++j) backward[j] = exhaustive(b, j, a).best;
  }

  for (int i = 0; i < a.size(); ++i) {
    const Neighbours& nb = forward[i];
    if (nb.best < 0) continue;
    if (params.strategy == MatchStrategy::RatioTest && !(nb.d1 < params.ratio * nb.d2)) continue;
    if (params.cross_check && backward[nb.best] != i) continue;
    out.push_back({i, nb.best, nb.d1});
  }
  return out;
}

}  // namespace fisheval
