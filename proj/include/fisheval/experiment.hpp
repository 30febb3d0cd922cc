#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fisheval/calib.hpp"
#include "fisheval/keyvalue.hpp"
#include "fisheval/oracle.hpp"
#include "fisheval/synth.hpp"

namespace fisheval {

/// Batch experiment description. Grids expand as Cartesian products; rows of
/// the optional [include] / [exclude] tables filter setups by label tokens.
struct ExperimentConfig {
  std::string source = "<defaults>";
  std::uint64_t seed = 1;
  std::filesystem::path out = "fisheval-out";
  int jobs = 1;

  /// "synth" or a manifest path (relative paths resolve against
  /// FISHEVAL_DATA_ROOT when it is set).
  std::string dataset = "synth";
  SynthSpec synth;
  int max_pairs = -1;

  std::vector<double> tolerances = kDefaultTolerances;
  MatchCriterion::Kind criterion = MatchCriterion::Kind::Sphere;

  std::vector<DetectorParams> detectors;
  std::vector<DescriptorParams> descriptors;
  std::vector<MatchParams> matchers;
  std::vector<bool> polar_modes{false};
  std::vector<std::vector<std::string>> include;
  std::vector<std::vector<std::string>> exclude;

  int calib_runs = 1000;
  int calib_pair = 0;
  int calib_max_iterations = 50000;
  double calib_threshold = 0.005;
  int calib_grid_size = 61;
  double calib_grid_span = 0.2;
};

inline constexpr const char* kDataRootEnv = "FISHEVAL_DATA_ROOT";

ExperimentConfig parse_experiment_config(const KeyValueFile& kv);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Detector-only setups (no descriptor / matcher), filtered.
std::vector<PipelineConfig> detector_setups(const ExperimentConfig& config);
/// Detector x descriptor x matcher x polar setups, filtered. BadConfig when
/// the descriptor or matcher grid is empty.
std::vector<PipelineConfig> pipeline_setups(const ExperimentConfig& config);

bool setup_selected(const std::string& setup, const ExperimentConfig& config);

/// Runs `task(i)` for i in [0, n) on up to `jobs` threads. The first
/// exception (lowest index) is rethrown after all workers stop.
void parallel_for(int n, int jobs, const std::function<void(int)>& task);

std::vector<StereoPair> load_pairs(const ExperimentConfig& config);

inline constexpr const char* kDetectorCsvHeader = "pair,setup,tolerance_m,n_matches,repeatability,n_det_min";

/// Writes <out>/detector.csv; returns the number of data rows.
int run_eval_detector(const ExperimentConfig& config);
/// Writes <out>/pipeline.csv; returns the number of data rows.
int run_eval_pipeline(const ExperimentConfig& config);
/// Writes <out>/stability.csv; returns the number of data rows.
int run_calib_stability(const ExperimentConfig& config);
/// Writes the synthetic sequence into <out>/sequence.
void run_synth_gen(const ExperimentConfig& config);

struct SyntheticMatchSpec {
  int n_matches = 200;
  double inlier_ratio = 0.35;
  double noise_deg = 0.0;
  int width = 600;
  std::uint64_t seed = 1;
  double min_depth = 3.0;
  double max_depth = 30.0;
};

struct SyntheticMatches {
  std::vector<PixelMatch> matches;
  std::vector<char> is_inlier;
  FisheyeModeld model;  // equisolid, shared by both cameras
  Posed rear_offset;    // rear camera in the front frame
  double a_true = 0.0;
};

/// Equisolid rig correspondences: inliers are projections of random scene
/// points (optionally perturbed), outliers are independent uniform pixels
/// of both discs. Order is shuffled.
SyntheticMatches make_synthetic_matches(const SyntheticMatchSpec& spec);

/// Seeded stability runs on a fixed match set.
std::vector<CalibEstimate> calibration_runs(const std::vector<PixelMatch>& matches, const CalibConfig& base,
                                            int runs, std::uint64_t master_seed, int jobs = 1);

/// CSV metric-vs-tolerance plots, one series per setup averaged over pairs.
/// Returns the written SVG paths.
std::vector<std::filesystem::path> run_report(const std::filesystem::path& out_dir);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
std::string render_svg_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<PlotSeries>& series);

}  // namespace fisheval
