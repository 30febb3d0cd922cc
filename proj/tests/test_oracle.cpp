#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "fisheval/error.hpp"
#include "fisheval/oracle.hpp"
#include "fisheval/synth.hpp"

using namespace fisheval;

namespace {

BackProjection points_at(const std::vector<Eigen::Vector3d>& pts, const Eigen::Vector3d& center = Eigen::Vector3d::Zero()) {
  BackProjection bp;
  bp.camera_center = center;
  for (const auto& p : pts) bp.points.emplace_back(p);
  return bp;
}

// Maximum bipartite matching size by augmenting paths.
int maximum_matching(const std::vector<OracleMatch>& edges, int n_a, int n_b) {
  std::vector<std::vector<int>> adj(n_a);
  for (const auto& e : edges) adj[e.index_a].push_back(e.index_b);
  std::vector<int> match_b(n_b, -1);
  int size = 0;
  for (int a = 0; a < n_a; ++a) {
    std::vector<char> seen(n_b, 0);
    std::function<bool(int)> augment = [&](int u) {
      for (int v : adj[u]) {
        if (seen[v]) continue;
        seen[v] = 1;
        if (match_b[v] < 0 || augment(match_b[v])) {
          match_b[v] = u;
          return true;
        }
      }
      return false;
    };
    if (augment(a)) ++size;
  }
  return size;
}

// Two views of `n` world points, b perturbed by up to `jitter` meters.
std::pair<BackProjection, BackProjection> jittered_clouds(int n, double jitter, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Eigen::Vector3d> a, b;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d p(u(rng) * 0.3, u(rng) * 0.3, u(rng) * 0.3);
    a.push_back(p);
    b.push_back(p + jitter * Eigen::Vector3d(u(rng), u(rng), u(rng)) / std::sqrt(3.0));
  }
  return {points_at(a), points_at(b, Eigen::Vector3d(-2, 0, 0))};
}

StereoPair small_pair(int width = 160) {
  const Scene scene = make_urban_canyon(21, 2.0);
  const Rig rig = make_pfseq_rig(ProjectionKind::EquisolidAngle, width);
  RenderOptions opt;
  opt.width = opt.height = width;
  return render_pair(scene, rig, trajectory_pose(0, 0, 0, 2), MotionParams{}, opt);
}

}  // namespace

TEST(Separation, SphereAndAngular) {
  const Eigen::Vector3d ca(0, 0, 0), cb(0, 0, 10);
  const Eigen::Vector3d pa(10, 0, 0), pb(10, 1, 0);
  EXPECT_DOUBLE_EQ(separation(MatchCriterion::Kind::Sphere, pa, pb, ca, cb), 1.0);
  const double at_a = std::atan2(1.0, 10.0);
  const double at_b = std::acos((pa - cb).dot(pb - cb) / ((pa - cb).norm() * (pb - cb).norm()));
  EXPECT_NEAR(separation(MatchCriterion::Kind::Angular, pa, pb, ca, cb), std::max(at_a, at_b), 1e-12);
}

TEST(Oracle, StraddlesThreeCentimeters) {
  const auto a = points_at({{0, 0, 5}});
  const auto b = points_at({{0.03, 0, 5}});
  EXPECT_EQ(ground_truth_matches(a, b, MatchCriterion::sphere(0.03 + 1e-12)).matches.size(), 1u);
  EXPECT_EQ(ground_truth_matches(a, b, MatchCriterion::sphere(0.0299)).matches.size(), 0u);
  EXPECT_EQ(ground_truth_matches(a, b, MatchCriterion::sphere(0.02)).matches.size(), 0u);
  const auto b2 = points_at({{0.0, 0.0, 5.025}});
  EXPECT_EQ(ground_truth_matches(a, b2, MatchCriterion::sphere(0.03)).matches.size(), 1u);
}

TEST(Oracle, InvalidPointsNeverMatch) {
  auto a = points_at({{0, 0, 5}, {1, 1, 1}});
  a.points[1].reset();
  const auto b = points_at({{1, 1, 1}, {0, 0, 5}});
  const auto set = ground_truth_matches(a, b, MatchCriterion::sphere(0.05));
  ASSERT_EQ(set.matches.size(), 1u);
  EXPECT_EQ(set.matches[0].index_a, 0);
  EXPECT_EQ(set.matches[0].index_b, 1);
  EXPECT_EQ(set.n_det_a, 2);
  EXPECT_EQ(a.valid_count(), 1);
  try {
    candidate_pairs(a, b, MatchCriterion::sphere(0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
  }
}

TEST(Oracle, GreedyIsOneToOneWithinHalfOfMaximum) {
  for (unsigned seed = 1; seed <= 20; ++seed) {
    const auto [a, b] = jittered_clouds(150, 0.04, seed);
    const MatchCriterion c = MatchCriterion::sphere(0.05);
    const auto cands = candidate_pairs(a, b, c);
    const auto greedy = greedy_one_to_one(cands);
    std::vector<char> ua(150, 0), ub(150, 0);
    for (const auto& m : greedy) {
      EXPECT_FALSE(ua[m.index_a]++);
      EXPECT_FALSE(ub[m.index_b]++);
      EXPECT_LE(m.separation, 0.05);
    }
    for (std::size_t i = 1; i < greedy.size(); ++i) EXPECT_LE(greedy[i - 1].separation, greedy[i].separation);
    const int M = maximum_matching(cands, 150, 150);
    EXPECT_LE(static_cast<int>(greedy.size()), M);
    EXPECT_GE(2 * static_cast<int>(greedy.size()), M);
  }
}

TEST(Oracle, MatchCountsNestAcrossTolerances) {
  const auto [a, b] = jittered_clouds(200, 0.08, 3);
  int prev = 0;
  for (double tau : kDefaultTolerances) {
    const int n = static_cast<int>(ground_truth_matches(a, b, MatchCriterion::sphere(tau)).matches.size());
    EXPECT_GE(n, prev) << tau;
    prev = n;
  }
}

TEST(Oracle, IdentityViewsMatchEveryValidDetection) {
  const StereoPair pair = small_pair();
  DetectorParams det;
  const KeypointList kps = detect(pair.front.image, det);
  ASSERT_GT(kps.size(), 20u);
  const ViewGeometry g = ViewGeometry::of(pair.front);
  const auto bp = back_project_detections(kps, g);
  // Detections at identical pixels give identical points; one-to-one
  // pairing can only lose duplicates that share a pixel.
  const auto set = ground_truth_matches(kps, kps, g, g, MatchCriterion::sphere(0.005));
  EXPECT_LE(static_cast<int>(set.matches.size()), bp.valid_count());
  EXPECT_GE(static_cast<double>(set.matches.size()), 0.9 * bp.valid_count());
  for (const auto& m : set.matches) EXPECT_LT(m.separation, 1e-9);
}

TEST(Oracle, BackProjectionLookupAndPolarFrame) {
  const StereoPair pair = small_pair();
  ViewGeometry g = ViewGeometry::of(pair.front);
  Keypoint outside;
  outside.x = 0;
  outside.y = 0;
  Keypoint sky;
  Keypoint ground;
  bool found_sky = false, found_ground = false;
  for (int y = 0; y < 160 && !(found_sky && found_ground); ++y)
    for (int x = 0; x < 160; ++x) {
      if (!unproject_pixel(pair.front.model, Eigen::Vector2d(x, y))) continue;
      if (!found_sky && pair.front.sky(y, x)) { sky.x = x; sky.y = y; found_sky = true; }
      if (!found_ground && pair.front.distance.valid(y, x)) { ground.x = x; ground.y = y; found_ground = true; }
    }
  ASSERT_TRUE(found_sky && found_ground);
  const auto bp = back_project_detections({outside, sky, ground}, g);
  EXPECT_FALSE(bp.points[0]);
  EXPECT_FALSE(bp.points[1]);
  ASSERT_TRUE(bp.points[2]);
  const double d = pair.front.distance.values(static_cast<int>(ground.y), static_cast<int>(ground.x));
  EXPECT_NEAR((*bp.points[2] - g.pose.camera_center()).norm(), d, 1e-9);

  Keypoint polar_kp = ground;
  polar_kp.frame = ImageFrame::Polar;
  try {
    back_project_detections({polar_kp}, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ModelMismatch);
  }
  g.polar = polar_layout(pair.front.model);
  const Eigen::Vector2d pc = map_coords(PolarDirection::FisheyeToPolar, Eigen::Vector2d(ground.x, ground.y), *g.polar);
  polar_kp.x = pc.x();
  polar_kp.y = pc.y();
  const auto bpp = back_project_detections({polar_kp}, g);
  ASSERT_TRUE(bpp.points[0]);
  EXPECT_LT((*bpp.points[0] - *bp.points[2]).norm(), 1e-6);

  g.distance = nullptr;
  try {
    back_project_detections({ground}, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingDistanceMap);
  }
}

// Metrics ---------------------------------------------------------------------

namespace {

// 100 detections per view: the first `n_match` coincide, the rest are far apart.
std::pair<BackProjection, BackProjection> coincident(int n_match) {
  std::vector<Eigen::Vector3d> a, b;
  for (int i = 0; i < 100; ++i) {
    a.emplace_back(i, 0, 0);
    b.emplace_back(i, i < n_match ? 0.0 : 50.0, 0);
  }
  return {points_at(a), points_at(b)};
}

std::vector<AttemptedMatch> attempted_with(int n_right, int n_wrong) {
  std::vector<AttemptedMatch> out;
  for (int i = 0; i < n_right; ++i) out.push_back({i, i, 0.1});
  for (int i = 0; i < n_wrong; ++i) out.push_back({n_right + i, 99 - i, 0.2});
  return out;
}

}  // namespace

TEST(Metrics, RepeatabilityScoreAndDrop) {
  const auto [a, b] = coincident(34);
  const auto set = ground_truth_matches(a, b, MatchCriterion::sphere(0.02));
  const MetricRow r = metric_scores(set, attempted_with(27, 20), MatchCriterion::sphere(0.02), 100, 120);
  EXPECT_EQ(r.n_matches, 34);
  EXPECT_EQ(r.n_correct, 27);
  EXPECT_EQ(r.n_det_min, 100);
  EXPECT_DOUBLE_EQ(r.repeatability, 0.34);
  EXPECT_DOUBLE_EQ(r.matching_score, 0.27);
  EXPECT_NEAR(r.drop, 0.07, 1e-12);
  EXPECT_EQ(format_metric_row(r), "0.02,34,0.340000,27,0.270000,0.070000,100");

  const auto [c, d] = coincident(7);
  const auto set2 = ground_truth_matches(c, d, MatchCriterion::sphere(0.02));
  const MetricRow r2 = metric_scores(set2, attempted_with(6, 3), MatchCriterion::sphere(0.02), 100, 100);
  EXPECT_NEAR(r2.drop, 0.01, 1e-12);
}

TEST(Metrics, EmptyAttemptedGivesFullDrop) {
  const auto [a, b] = coincident(40);
  const auto set = ground_truth_matches(a, b, MatchCriterion::sphere(0.02));
  const MetricRow r = metric_scores(set, {}, MatchCriterion::sphere(0.02), 100, 100);
  EXPECT_EQ(r.n_correct, 0);
  EXPECT_EQ(r.matching_score, 0.0);
  EXPECT_DOUBLE_EQ(r.drop, r.repeatability);
}

TEST(Metrics, ZeroDetectionsRaise) {
  const auto [a, b] = coincident(1);
  const auto set = ground_truth_matches(a, b, MatchCriterion::sphere(0.02));
  try {
    metric_scores(set, {}, MatchCriterion::sphere(0.02), 0, 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroDetections);
  }
}

TEST(Metrics, DuplicateAttemptsCountOnce) {
  const auto [a, b] = coincident(10);
  const auto set = ground_truth_matches(a, b, MatchCriterion::sphere(0.02));
  std::vector<AttemptedMatch> att{{0, 0, 0.1}, {0, 0, 0.1}, {1, 1, 0.1}};
  EXPECT_EQ(metric_scores(set, att, MatchCriterion::sphere(0.02), 100, 100).n_correct, 2);
}

TEST(Metrics, SweepMatchesPerToleranceScoring) {
  for (unsigned seed : {1u, 2u, 3u}) {
    const auto [a, b] = jittered_clouds(120, 0.12, seed);
    std::mt19937 rng(seed);
    std::vector<AttemptedMatch> att;
    for (int i = 0; i < 120; ++i) att.push_back({i, (i + static_cast<int>(rng() % 3)) % 120, 0.0});
    const auto rows = sweep_metrics(a, b, att, MatchCriterion::Kind::Sphere, kDefaultTolerances, 120, 130);
    ASSERT_EQ(rows.size(), 12u);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const MatchCriterion c = MatchCriterion::sphere(kDefaultTolerances[k]);
      const auto set = ground_truth_matches(a, b, c);
      const MetricRow ref = metric_scores(set, att, c, 120, 130);
      EXPECT_EQ(rows[k].n_matches, ref.n_matches);
      EXPECT_EQ(rows[k].n_correct, ref.n_correct);
      EXPECT_LE(rows[k].n_correct, maximum_matching(candidate_pairs(a, b, c), 120, 120));
      if (k > 0) EXPECT_GE(rows[k].n_matches, rows[k - 1].n_matches);
    }
  }
  try {
    const auto [a, b] = jittered_clouds(5, 0.01, 1);
    sweep_metrics(a, b, {}, MatchCriterion::Kind::Sphere, {0.02, 0.01}, 5, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadConfig);
  }
}

// Pipeline --------------------------------------------------------------------

TEST(Pipeline, SetupString) {
  PipelineConfig c;
  EXPECT_EQ(c.setup_string(), "DoG 0.04 10.0 1.6 3 nopol");
  c.descriptor = DescriptorParams{};
  c.matcher = MatchParams{};
  c.polar = true;
  c.criterion = MatchCriterion::Kind::Angular;
  EXPECT_EQ(c.setup_string(), "DoG 0.04 10.0 1.6 3 pol GradHist BruteForce angular");
}

TEST(Pipeline, SweepOnRenderedPair) {
  const StereoPair pair = small_pair(200);
  PipelineConfig c;
  c.descriptor = DescriptorParams{};
  c.matcher = MatchParams{};
  const auto res = run_pipeline(c, pair);
  ASSERT_EQ(res.rows.size(), 12u);
  const int n_min = static_cast<int>(std::min(res.det_a.size(), res.det_b.size()));
  for (std::size_t k = 0; k < res.rows.size(); ++k) {
    const auto& r = res.rows[k];
    EXPECT_EQ(r.tolerance, kDefaultTolerances[k]);
    EXPECT_EQ(r.n_det_min, n_min);
    EXPECT_LE(r.n_matches, n_min);
    EXPECT_LE(r.n_correct, static_cast<int>(res.attempted.size()));
    EXPECT_NEAR(r.drop, r.repeatability - r.matching_score, 1e-12);
    if (k > 0) {
      EXPECT_GE(r.n_matches, res.rows[k - 1].n_matches);
      EXPECT_GE(r.n_correct, res.rows[k - 1].n_correct);
    }
  }
  EXPECT_GT(res.rows.back().n_matches, 0);
  for (const auto& m : res.attempted) {
    EXPECT_LT(m.index_a, static_cast<int>(res.det_a.size()));
    EXPECT_LT(m.index_b, static_cast<int>(res.det_b.size()));
  }
}

TEST(Pipeline, PolarDetectionsMapBackIntoCircle) {
  const StereoPair pair = small_pair(160);
  PipelineConfig c;
  c.polar = true;
  const auto res = run_pipeline(c, pair, {0.02, 0.05});
  ASSERT_FALSE(res.det_a.empty());
  EXPECT_EQ(res.det_a.front().frame, ImageFrame::Polar);
  for (const auto& p : res.fisheye_a)
    if (p.allFinite()) EXPECT_LE((p - pair.front.model.center).norm(), pair.front.model.circle_radius + 1e-6);
}

TEST(Pipeline, MatcherWithoutDescriptorIsBadConfig) {
  PipelineConfig c;
  c.matcher = MatchParams{};
  try {
    run_pipeline(c, small_pair(64));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadConfig);
  }
}

// Spreading -------------------------------------------------------------------

TEST(Spreading, Examples) {
  const auto m = FisheyeModeld::from_fov(ProjectionKind::Equidistant, 180.0, 100.0, {100, 100});
  EXPECT_EQ(spreading_score({}, m), 0.0);
  std::vector<Eigen::Vector2d> all;
  for (int ring = 0; ring < 4; ++ring)
    for (int s = 0; s < 8; ++s) {
      const double r = 100.0 * std::sqrt((ring + 0.5) / 4.0);
      const double phi = (s + 0.5) * 2 * std::numbers::pi / 8;
      const Eigen::Vector2d p = m.center + r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
      all.push_back(p);
      all.push_back(p);
    }
  EXPECT_DOUBLE_EQ(spreading_score(all, m), 1.0);
  EXPECT_DOUBLE_EQ(spreading_score({all[0], all[1]}, m), 1.0 / 32);
  EXPECT_DOUBLE_EQ(spreading_score({all[0]}, m), 0.0);
  EXPECT_DOUBLE_EQ(spreading_score({all[0], all[2]}, m, {}, 1), 2.0 / 32);
  // Points outside the circle are ignored.
  EXPECT_EQ(spreading_score({{0, 0}, {0, 0}}, m), 0.0);
}
