#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hierlid/estimators.hpp"
#include "hierlid/gnls.hpp"
#include "hierlid/segmenter.hpp"
#include "hierlid/simulate.hpp"
#include "hierlid/varsel.hpp"

namespace hierlid::pipeline {

enum class Mode {
  Ingest,
  Segment,
  Select,
  FitTrain,
  PredictTarget,
  Estimate,
  ReferenceHmb,
  Simulate,
  Mc,
  Report,
};

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode mode);

/// Per-regression-level settings: either an explicit predictor list (with
/// transforms) or annealing-based selection over all candidate columns.
struct LevelConfig {
  std::vector<std::string> predictors;       // empty = all columns or selection
  std::vector<gnls::Transform> transforms;   // parallel to predictors
  std::optional<varsel::AnnealConfig> selection;
  gnls::VarFnKind varfn = gnls::VarFnKind::ConstantPlusPower;
};

struct PipelineConfig {
  Mode mode = Mode::Estimate;
  std::filesystem::path base_dir;  // config location; relative paths resolve here

  // Input files (empty = not provided).
  std::filesystem::path trees, plots, plot_metrics;
  std::filesystem::path subcells_train, segments_train;
  std::filesystem::path segments_target, subcells_target;
  std::filesystem::path photons, pixels;
  std::filesystem::path allometry;

  LevelConfig proxy;  // defaults to constant_plus_power
  LevelConfig i2;     // defaults to homoscedastic
  segmenter::FilterThresholds filters;
  segmenter::BuildOptions segment_build;
  bool strict_radii = false;
  Eigen::Index dense_cov_cap = 20000;

  std::filesystem::path output_dir = "out";
  std::uint64_t rng_seed = 1;

  // simulate / mc settings
  std::optional<simulate::SyntheticWorldConfig> world;
  std::size_t mc_replicates = 1000;
  simulate::ResampleMode mc_mode = simulate::ResampleMode::TracksOnly;
  int mc_threads = 0;

  std::string raw_json;  // config file body, for the manifest hash
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig config_from_json_string(const std::string& text,
                                       const std::filesystem::path& base_dir);

struct PipelineResult {
  std::filesystem::path run_dir;
  std::optional<estimators::EstimateReport> report;
  std::vector<std::string> warnings;
};

/// Execute the configured mode, writing artifacts into output_dir. Stages
/// run in dependency order (ingest, allometry, fits, prediction, estimate);
/// module errors are rethrown with the failing stage named. Reruns with an
/// identical config and inputs write byte-identical numeric outputs.
PipelineResult run_pipeline(const PipelineConfig& config);

/// FNV-1a hash of a byte string, hex encoded (manifest config hash).
std::string fnv1a_hex(const std::string& bytes);

/// Exit code for the CLI: 0 ok, 2 validation, 3 numerical, 4 I/O.
int exit_code_for(const Error& e);

}  // namespace hierlid::pipeline
