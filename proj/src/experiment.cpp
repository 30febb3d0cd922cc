#include "fisheval/experiment.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "fisheval/error.hpp"
#include "fisheval/geometry_io.hpp"

namespace fisheval {
namespace {

std::vector<std::string> tokens_of(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

bool parse_bool(const KeyValueFile& kv, const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  kv.fail(key, "expected true or false, got '" + v + "'");
}

std::vector<double> doubles_or(const KeyValueFile& kv, const std::string& key, double fallback) {
  return kv.has(key) ? kv.get_double_list(key) : std::vector<double>{fallback};
}

std::vector<int> ints_or(const KeyValueFile& kv, const std::string& key, int fallback) {
  std::vector<int> out;
  for (double v : doubles_or(kv, key, fallback)) {
    if (v != std::floor(v)) kv.fail(key, "expected integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<DetectorParams> expand_detectors(const KeyValueFile& kv) {
  const DetectorParams d;
  std::vector<DetectorParams> out;
  if (!kv.has("detector.algorithm")) return out;
  for (const auto& name : kv.get_list("detector.algorithm")) {
    DetectorParams base;
    try {
      base.algorithm = detector_algorithm_from_string(name);
    } catch (const Error& e) {
      kv.fail("detector.algorithm", e.what());
    }
    switch (base.algorithm) {
      case DetectorAlgorithm::DoG:
        for (double ct : doubles_or(kv, "detector.contrast_threshold", d.contrast_threshold))
          for (double et : doubles_or(kv, "detector.edge_threshold", d.edge_threshold))
            for (double s : doubles_or(kv, "detector.sigma", d.sigma))
              for (int l : ints_or(kv, "detector.n_octave_layers", d.n_octave_layers)) {
                DetectorParams p = base;
                p.contrast_threshold = ct, p.edge_threshold = et, p.sigma = s, p.n_octave_layers = l;
                out.push_back(p);
              }
        break;
      case DetectorAlgorithm::Harris:
        for (int b : ints_or(kv, "detector.block_size", d.block_size))
          for (double k : doubles_or(kv, "detector.harris_k", d.harris_k))
            for (double t : doubles_or(kv, "detector.harris_threshold", d.harris_threshold)) {
              DetectorParams p = base;
              p.block_size = b, p.harris_k = k, p.harris_threshold = t;
              out.push_back(p);
            }
        break;
      case DetectorAlgorithm::FastPyramid:
        for (double t : doubles_or(kv, "detector.fast_threshold", d.fast_threshold))
          for (int l : ints_or(kv, "detector.levels", d.levels))
            for (double f : doubles_or(kv, "detector.scale_factor", d.scale_factor)) {
              DetectorParams p = base;
              p.fast_threshold = t, p.levels = l, p.scale_factor = f;
              out.push_back(p);
            }
        break;
    }
  }
  for (const auto& p : out) {
    try {
      p.validate();
    } catch (const Error& e) {
      kv.fail("detector.algorithm", e.what());
    }
  }
  return out;
}

std::vector<DescriptorParams> expand_descriptors(const KeyValueFile& kv) {
  std::vector<DescriptorParams> out;
  if (!kv.has("descriptor.kind")) return out;
  for (const auto& name : kv.get_list("descriptor.kind")) {
    DescriptorParams base;
    try {
      base.kind = descriptor_kind_from_string(name);
    } catch (const Error& e) {
      kv.fail("descriptor.kind", e.what());
    }
    if (base.kind == DescriptorKind::GradHist) {
      out.push_back(base);
      continue;
    }
    for (double s : doubles_or(kv, "descriptor.pattern_scale", base.pattern_scale)) {
      if (!(s > 0)) kv.fail("descriptor.pattern_scale", "must be positive");
      DescriptorParams p = base;
      p.pattern_scale = s;
      out.push_back(p);
    }
  }
  return out;
}

std::vector<MatchParams> expand_matchers(const KeyValueFile& kv) {
  std::vector<MatchParams> out;
  if (!kv.has("matcher.strategy")) return out;
  std::vector<bool> xchecks;
  if (kv.has("matcher.cross_check")) {
    for (const auto& v : kv.get_list("matcher.cross_check")) xchecks.push_back(parse_bool(kv, "matcher.cross_check", v));
  } else {
    xchecks.push_back(false);
  }
  for (const auto& name : kv.get_list("matcher.strategy")) {
    MatchParams base;
    try {
      base.strategy = match_strategy_from_string(name);
    } catch (const Error& e) {
      kv.fail("matcher.strategy", e.what());
    }
    std::vector<MatchParams> variants;
    if (base.strategy == MatchStrategy::RatioTest) {
      for (double r : doubles_or(kv, "matcher.ratio", base.ratio)) {
        if (!(r > 0 && r <= 1)) kv.fail("matcher.ratio", "must be in (0, 1]");
        MatchParams p = base;
        p.ratio = r;
        variants.push_back(p);
      }
    } else if (base.strategy == MatchStrategy::ApproxNN) {
      for (int t : ints_or(kv, "matcher.trees", base.trees))
        for (int c : ints_or(kv, "matcher.checks", base.checks)) {
          if (t < 1 || c < 1) kv.fail("matcher.trees", "trees and checks must be positive");
          MatchParams p = base;
          p.trees = t, p.checks = c;
          variants.push_back(p);
        }
    } else {
      variants.push_back(base);
    }
    for (bool x : xchecks)
      for (auto p : variants) {
        p.cross_check = x;
        out.push_back(p);
      }
  }
  return out;
}

std::vector<std::vector<std::string>> filter_rows(const KeyValueFile& kv, const std::string& table) {
  std::vector<std::vector<std::string>> out;
  if (!kv.has_table(table)) return out;
  for (const auto& row : kv.table(table)) out.push_back(row.tokens);
  return out;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::MissingFile, "write failed for " + path.string());
}

}  // namespace

ExperimentConfig parse_experiment_config(const KeyValueFile& kv) {
  ExperimentConfig c;
  c.source = kv.source();
  c.seed = static_cast<std::uint64_t>(kv.get_int_or("seed", 1));
  c.out = kv.get_or("out", c.out.string());
  c.jobs = static_cast<int>(kv.get_int_or("jobs", 1));
  if (c.jobs < 1) kv.fail("jobs", "must be >= 1");
  c.dataset = kv.get_or("dataset", "synth");
  c.max_pairs = static_cast<int>(kv.get_int_or("max_pairs", -1));

  c.synth.seed = c.seed;
  c.synth.frames = static_cast<int>(kv.get_int_or("synth.frames", c.synth.frames));
  c.synth.width = static_cast<int>(kv.get_int_or("synth.width", c.synth.width));
  if (c.synth.frames < 1) kv.fail("synth.frames", "must be >= 1");
  if (c.synth.width < 32) kv.fail("synth.width", "must be >= 32");
  if (kv.has("synth.kind")) {
    try {
      c.synth.kind = projection_kind_from_string(kv.get("synth.kind"));
    } catch (const Error& e) {
      kv.fail("synth.kind", e.what());
    }
  }
  c.synth.texture_density = kv.get_double_or("synth.texture_density", c.synth.texture_density);
  c.synth.camera_height = kv.get_double_or("synth.camera_height", c.synth.camera_height);
  c.synth.step = kv.get_double_or("synth.step", c.synth.step);
  c.synth.yaw_step_deg = kv.get_double_or("synth.yaw_step_deg", c.synth.yaw_step_deg);
  c.synth.supersample = static_cast<int>(kv.get_int_or("synth.supersample", c.synth.supersample));
  c.synth.motion.exposure = kv.get_double_or("synth.exposure", 0.0);
  c.synth.motion.subsamples = static_cast<int>(kv.get_int_or("synth.subsamples", 1));
  c.synth.motion.linear_velocity.x() = kv.get_double_or("synth.speed", 0.0);
  c.synth.motion.angular_velocity.z() = kv.get_double_or("synth.yaw_rate", 0.0);

  if (kv.has("tolerances")) {
    c.tolerances = kv.get_double_list("tolerances");
    if (c.tolerances.empty()) kv.fail("tolerances", "empty list");
    if (!std::is_sorted(c.tolerances.begin(), c.tolerances.end()) || !(c.tolerances.front() > 0)) {
      kv.fail("tolerances", "must be positive and ascending");
    }
  }
  const std::string criterion = kv.get_or("criterion", "sphere");
  if (criterion == "sphere") c.criterion = MatchCriterion::Kind::Sphere;
  else if (criterion == "angular") c.criterion = MatchCriterion::Kind::Angular;
  else kv.fail("criterion", "expected sphere or angular");

  if (kv.has("polar")) {
    c.polar_modes.clear();
    for (const auto& v : kv.get_list("polar")) {
      if (v == "pol") c.polar_modes.push_back(true);
      else if (v == "nopol") c.polar_modes.push_back(false);
      else kv.fail("polar", "expected pol or nopol, got '" + v + "'");
    }
    if (c.polar_modes.empty()) kv.fail("polar", "empty list");
  }

  c.detectors = expand_detectors(kv);
  c.descriptors = expand_descriptors(kv);
  c.matchers = expand_matchers(kv);
  c.include = filter_rows(kv, "include");
  c.exclude = filter_rows(kv, "exclude");

  c.calib_runs = static_cast<int>(kv.get_int_or("calib.runs", c.calib_runs));
  c.calib_pair = static_cast<int>(kv.get_int_or("calib.pair", c.calib_pair));
  c.calib_max_iterations = static_cast<int>(kv.get_int_or("calib.max_iterations", c.calib_max_iterations));
  c.calib_threshold = kv.get_double_or("calib.threshold", c.calib_threshold);
  c.calib_grid_size = static_cast<int>(kv.get_int_or("calib.grid_size", c.calib_grid_size));
  c.calib_grid_span = kv.get_double_or("calib.grid_span", c.calib_grid_span);
  if (c.calib_runs < 2) kv.fail("calib.runs", "must be >= 2");
  if (c.calib_max_iterations < 1) kv.fail("calib.max_iterations", "must be >= 1");
  if (!(c.calib_threshold > 0)) kv.fail("calib.threshold", "must be positive");
  if (c.calib_grid_size < 1) kv.fail("calib.grid_size", "must be >= 1");
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(KeyValueFile::load(path));
}

bool setup_selected(const std::string& setup, const ExperimentConfig& config) {
  const auto have = tokens_of(setup);
  auto matches = [&](const std::vector<std::string>& row) {
    return std::all_of(row.begin(), row.end(),
                       [&](const std::string& t) { return std::find(have.begin(), have.end(), t) != have.end(); });
  };
  if (!config.include.empty() && std::none_of(config.include.begin(), config.include.end(), matches)) return false;
  return std::none_of(config.exclude.begin(), config.exclude.end(), matches);
}

std::vector<PipelineConfig> detector_setups(const ExperimentConfig& config) {
  if (config.detectors.empty()) throw Error(ErrorCode::BadConfig, config.source + ": detector grid is empty");
  std::vector<PipelineConfig> out;
  for (bool polar : config.polar_modes)
    for (const auto& d : config.detectors) {
      PipelineConfig p;
      p.detector = d;
      p.polar = polar;
      p.criterion = config.criterion;
      if (setup_selected(p.setup_string(), config)) out.push_back(p);
    }
  return out;
}

std::vector<PipelineConfig> pipeline_setups(const ExperimentConfig& config) {
  if (config.detectors.empty()) throw Error(ErrorCode::BadConfig, config.source + ": detector grid is empty");
  if (config.descriptors.empty()) throw Error(ErrorCode::BadConfig, config.source + ": descriptor grid is empty");
  if (config.matchers.empty()) throw Error(ErrorCode::BadConfig, config.source + ": matcher grid is empty");
  std::vector<PipelineConfig> out;
  for (bool polar : config.polar_modes)
    for (const auto& d : config.detectors)
      for (const auto& desc : config.descriptors)
        for (const auto& m : config.matchers) {
          if (desc.kind == DescriptorKind::RotBinary && m.strategy == MatchStrategy::ApproxNN) continue;
          PipelineConfig p;
          p.detector = d;
          p.descriptor = desc;
          p.matcher = m;
          p.polar = polar;
          p.criterion = config.criterion;
          if (setup_selected(p.setup_string(), config)) out.push_back(p);
        }
  return out;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& task) {
  if (n <= 0) return;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, n);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<StereoPair> load_pairs(const ExperimentConfig& config) {
  std::vector<StereoPair> pairs;
  if (config.dataset == "synth") {
    SynthSpec spec = config.synth;
    spec.seed = config.seed;
    pairs = generate_sequence(spec).sequence.frames;
  } else {
    std::filesystem::path path = config.dataset;
    if (path.is_relative()) {
      if (const char* root = std::getenv(kDataRootEnv); root != nullptr && *root != '\0') path = root / path;
    }
    if (std::filesystem::is_directory(path)) path /= "manifest.txt";
    pairs = load_sequence(path).frames;
  }
  if (config.max_pairs >= 0 && static_cast<int>(pairs.size()) > config.max_pairs) pairs.resize(config.max_pairs);
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "dataset has no stereo pairs");
  return pairs;
}

int run_eval_detector(const ExperimentConfig& config) {
  const auto setups = detector_setups(config);
  const auto pairs = load_pairs(config);
  const int n_tasks = static_cast<int>(pairs.size() * setups.size());
  std::vector<std::vector<MetricRow>> results(static_cast<std::size_t>(n_tasks));
  parallel_for(n_tasks, config.jobs, [&](int t) {
    const auto& pair = pairs[t / setups.size()];
    results[t] = sweep(setups[t % setups.size()], pair, config.tolerances);
  });
  std::ostringstream csv;
  csv << kDetectorCsvHeader << '\n';
  int rows = 0;
  for (int t = 0; t < n_tasks; ++t) {
    const std::string prefix = pairs[t / setups.size()].id + "," + setups[t % setups.size()].setup_string() + ",";
    for (const auto& r : results[t]) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%g,%d,%.6f,%d", r.tolerance, r.n_matches, r.repeatability, r.n_det_min);
      csv << prefix << buf << '\n';
      ++rows;
    }
  }
  write_text(config.out / "detector.csv", csv.str());
  return rows;
}

int run_eval_pipeline(const ExperimentConfig& config) {
  const auto setups = pipeline_setups(config);
  const auto pairs = load_pairs(config);
  const int n_tasks = static_cast<int>(pairs.size() * setups.size());
  std::vector<std::vector<MetricRow>> results(static_cast<std::size_t>(n_tasks));
  parallel_for(n_tasks, config.jobs, [&](int t) {
    results[t] = sweep(setups[t % setups.size()], pairs[t / setups.size()], config.tolerances);
  });
  std::ostringstream csv;
  csv << "pair,setup," << kMetricCsvHeader << '\n';
  int rows = 0;
  for (int t = 0; t < n_tasks; ++t) {
    const std::string prefix = pairs[t / setups.size()].id + "," + setups[t % setups.size()].setup_string() + ",";
    for (const auto& r : results[t]) {
      csv << prefix << format_metric_row(r) << '\n';
      ++rows;
    }
  }
  write_text(config.out / "pipeline.csv", csv.str());
  return rows;
}

std::vector<CalibEstimate> calibration_runs(const std::vector<PixelMatch>& matches, const CalibConfig& base,
                                            int runs, std::uint64_t master_seed, int jobs) {
  std::vector<CalibEstimate> out(static_cast<std::size_t>(std::max(runs, 0)));
  parallel_for(runs, jobs, [&](int i) {
    CalibConfig c = base;
    c.seed = mix(master_seed ^ mix(static_cast<std::uint64_t>(i)));
    out[i] = ransac_calibrate(matches, c);
  });
  return out;
}

int run_calib_stability(const ExperimentConfig& config) {
  const auto setups = pipeline_setups(config);
  const auto pairs = load_pairs(config);
  if (config.calib_pair < 0 || config.calib_pair >= static_cast<int>(pairs.size())) {
    throw Error(ErrorCode::BadConfig, config.source + ": calib.pair out of range");
  }
  const StereoPair& pair = pairs[config.calib_pair];
  const FisheyeModeld& model = pair.front.model;
  // Equisolid parameter that maps the image-circle edge to half the field of view.
  const double a_nominal = std::sin(deg_to_rad(model.fov_deg) / 4.0) / model.circle_radius;

  std::ostringstream csv;
  csv << kStabilityCsvHeader << '\n';
  int rows = 0;
  for (const auto& setup : setups) {
    const PipelineResult res = run_pipeline(setup, pair, config.tolerances);
    std::vector<PixelMatch> matches;
    for (const auto& m : res.attempted) {
      const auto& pa = res.fisheye_a[m.index_a];
      const auto& pb = res.fisheye_b[m.index_b];
      if (pa.allFinite() && pb.allFinite()) matches.push_back({pa, pb});
    }
    const std::string name = pair.id + " " + setup.setup_string();
    CalibConfig base;
    base.a_grid = make_a_grid(a_nominal, config.calib_grid_size, config.calib_grid_span);
    base.center_a = pair.front.model.center;
    base.center_b = pair.rear.model.center;
    base.max_iterations = config.calib_max_iterations;
    base.inlier_threshold = config.calib_threshold;
    const std::uint64_t seed = config.seed ^ fnv1a64(name);
    std::vector<CalibEstimate> runs;
    try {
      runs = calibration_runs(matches, base, config.calib_runs, seed, config.jobs);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TooFewMatches && e.code() != ErrorCode::NoModel) throw;
      csv << name << ",0" << std::string(21, ',') << '\n';  // no model for this setup
      ++rows;
      continue;
    }
    const int n_det_min = static_cast<int>(std::min(res.det_a.size(), res.det_b.size()));
    const auto stats =
        stability_stats(runs, n_det_min, static_cast<int>(res.attempted.size()), model.circle_radius);
    csv << format_stability_row(name, stats) << '\n';
    ++rows;
  }
  write_text(config.out / "stability.csv", csv.str());
  return rows;
}

void run_synth_gen(const ExperimentConfig& config) {
  SynthSpec spec = config.synth;
  spec.seed = config.seed;
  const SynthSequence synth = generate_sequence(spec);
  write_sequence(config.out / "sequence", synth.sequence, synth.records, spec.camera_height, kPfseqRearShiftDeg,
                 kPfseqBaseline);
}

SyntheticMatches make_synthetic_matches(const SyntheticMatchSpec& spec) {
  if (spec.n_matches < 1 || !(spec.inlier_ratio >= 0 && spec.inlier_ratio <= 1)) {
    throw Error(ErrorCode::BadConfig, "synthetic matches need n >= 1 and an inlier ratio in [0, 1]");
  }
  SyntheticMatches out;
  const Rig rig = make_pfseq_rig(ProjectionKind::EquisolidAngle, spec.width);
  out.model = rig.front;
  out.rear_offset = rig.rear_offset;
  out.a_true = 1.0 / (2.0 * out.model.focal);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n_in = static_cast<int>(std::lround(spec.n_matches * spec.inlier_ratio));
  const double noise = deg_to_rad(spec.noise_deg);

  auto perturb = [&](const Eigen::Vector3d& dir) -> Eigen::Vector3d {
    if (noise == 0.0) return dir;
    const Eigen::Vector3d axis = dir.unitOrthogonal();
    const double spin = 2.0 * std::numbers::pi * unit(rng);
    const Eigen::Vector3d tilt_axis = Eigen::AngleAxisd(spin, dir) * axis;
    return Eigen::AngleAxisd(noise, tilt_axis) * dir;
  };
  auto random_in_disc = [&]() -> Eigen::Vector2d {
    const double r = out.model.circle_radius * std::sqrt(unit(rng)) * 0.999;
    const double phi = 2.0 * std::numbers::pi * unit(rng);
    return out.model.center + r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
  };

  while (static_cast<int>(out.matches.size()) < n_in) {
    // Uniform direction over the front hemisphere up to 80 degrees off-axis.
    const double cos_max = std::cos(deg_to_rad(80.0));
    const double z = cos_max + (1.0 - cos_max) * unit(rng);
    const double phi = 2.0 * std::numbers::pi * unit(rng);
    const double s = std::sqrt(1.0 - z * z);
    const Eigen::Vector3d dir(s * std::cos(phi), s * std::sin(phi), z);
    const double depth = spec.min_depth + (spec.max_depth - spec.min_depth) * unit(rng);
    const Eigen::Vector3d point = depth * dir;
    const Eigen::Vector3d in_rear = out.rear_offset.apply_inverse(point);
    const auto pa = project_ray(out.model, Rayd::from_direction(perturb(dir)));
    const auto pb = project_ray(out.model, Rayd::from_direction(perturb(in_rear.normalized())));
    if (!pa || !pb) continue;
    if ((*pa - out.model.center).norm() >= out.model.circle_radius ||
        (*pb - out.model.center).norm() >= out.model.circle_radius) {
      continue;
    }
    out.matches.push_back({*pa, *pb});
    out.is_inlier.push_back(1);
  }
  while (static_cast<int>(out.matches.size()) < spec.n_matches) {
    const Eigen::Vector2d pa = random_in_disc();
    const Eigen::Vector2d pb = random_in_disc();
    out.matches.push_back({pa, pb});
    out.is_inlier.push_back(0);
  }
  std::vector<int> order(out.matches.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);
  SyntheticMatches shuffled = out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    shuffled.matches[i] = out.matches[order[i]];
    shuffled.is_inlier[i] = out.is_inlier[order[i]];
  }
  return shuffled;
}

}  // namespace fisheval
