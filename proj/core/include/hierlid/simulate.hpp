#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hierlid/allometry.hpp"
#include "hierlid/gnls.hpp"
#include "hierlid/rng.hpp"
#include "hierlid/types.hpp"

namespace hierlid::simulate {

/// Spatial AGBD field on a 15 m pixel grid. The field is a Gaussian random
/// field synthesized spectrally, exponentiated, affinely scaled to the
/// target mean/sd and clipped at zero.
struct FieldConfig {
  Eigen::Index grid_rows = 60;
  Eigen::Index grid_cols = 60;
  double mean_agbd = 65.0;          // Mg/ha
  double sd_agbd = 40.0;            // marginal sd
  double correlation_range = 3.0;   // pixels
};

/// Tree-list generation. Tree count per plot is Poisson with expectation
/// field_value * 1000 * area / mean_tree_agb, which makes the expected plot
/// AGBD equal the field value; the Poisson scatter is the proxy-level
/// residual. When exact_response is set, plot responses equal the field
/// value exactly (a noiseless chain for validation runs).
struct TreeGenConfig {
  std::size_t n_plots = 120;
  double plot_area_ha = 0.0254469;  // 9 m radius
  double dbh_log_mean = 2.7;        // log cm
  double dbh_log_sd = 0.35;
  double height_curve_a = 1.6;      // h = 1.3 + a * d^b * exp(noise)
  double height_curve_b = 0.8;
  double height_noise_sd = 0.08;    // log scale
  double share_pine = 0.6;
  double share_spruce = 0.25;       // deciduous share is the remainder
  bool exact_response = false;
};

/// One synthetic metric: value = offset + scale * truth^power + noise.
/// Monotone in the truth; the noiseless entries keep the squared-linear
/// model exactly well specified.
struct PredictorSpec {
  std::string name;
  double scale = 1.0;
  double offset = 0.0;
  double power = 0.5;
  double noise_sd = 0.0;
};

struct TrackConfig {
  std::size_t n_tracks = 8;        // target tracks, drawn with replacement
  std::size_t n_train_tracks = 6;  // fixed training tracks
};

struct SyntheticWorldConfig {
  FieldConfig field;
  TreeGenConfig trees;
  allometry::AllometricModelSpec allometry;  // acts as the true model
  std::vector<PredictorSpec> proxy_predictors;
  std::vector<PredictorSpec> i2_predictors;
  TrackConfig tracks;
  std::uint64_t rng_seed = 1;
};

/// Plausible boreal-forest defaults with four predictors per level.
SyntheticWorldConfig default_world_config();

void validate_config(const SyntheticWorldConfig& config);

/// world.json round-trip.
SyntheticWorldConfig config_from_json_string(const std::string& text);
SyntheticWorldConfig load_config_json(const std::filesystem::path& path);
std::string config_json_string(const SyntheticWorldConfig& config);

/// A generated world: ground truth plus every table the pipeline ingests.
struct World {
  SyntheticWorldConfig config;
  Eigen::MatrixXd field;            // true AGBD per pixel
  double true_mean_agbd = 0.0;      // raster mean
  double frame_mean_agbd = 0.0;     // mean over track-coverable rows
  double mean_tree_agb = 0.0;       // kg, under the true allometry
  Eigen::Index segments_per_track = 0;

  std::vector<data::TreeRecord> trees;
  std::vector<data::FieldPlot> plots;
  std::vector<Eigen::Index> plot_rows, plot_cols;  // pixel placement
  data::PredictorTable plot_predictors;

  std::vector<Eigen::Index> train_columns;
  data::SubcellTable train_subcells;
  data::SegmentTable train_segments;
  Eigen::VectorXd train_segment_truth;

  std::vector<Eigen::Index> target_columns;  // base target sample
  data::SegmentTable target_segments;
  data::SubcellTable target_subcells;
  Eigen::VectorXd target_segment_truth;

  data::PredictorTable pixel_predictors;  // proxy metrics per pixel
  std::vector<std::string> pixel_ids;

  /// True AGBD of each segment in a given column (mean of its 6 pixels).
  Eigen::VectorXd column_segment_truth(Eigen::Index column) const;
};

World generate_world(const SyntheticWorldConfig& config);

/// Write the world as the pipeline's input files plus truth.json and a
/// ready-to-run pipeline_config.json.
void write_world(const World& world, const std::filesystem::path& dir);

/// One redraw of every stochastic input on the training side: allometric
/// parameters from their covariance, tree lists, predictor noise, and both
/// model refits. Used by the full-chain Monte Carlo and by end-to-end
/// validation oracles.
struct ChainRealization {
  allometry::AllometricModelSpec spec;
  std::vector<data::TreeRecord> trees;
  allometry::PlotAGBDResult plot_result;
  data::PredictorTable plot_predictors;
  gnls::ModelFit proxy_fit;
  data::SubcellTable train_subcells;
  data::SegmentTable train_segments;
  Eigen::VectorXd proxy_segment_response;
  gnls::ModelFit i2_fit;
};

ChainRealization draw_chain_realization(const World& world, CounterRng& rng);

/// A fresh draw of target tracks (columns with replacement) with fresh
/// predictor noise.
struct TargetDraw {
  std::vector<Eigen::Index> columns;
  data::SegmentTable segments;
  Eigen::VectorXd truth;
};

TargetDraw draw_target_tracks(const World& world, CounterRng& rng);

enum class ResampleMode { TracksOnly, FullChain };

ResampleMode resample_mode_from_string(const std::string& s);
std::string resample_mode_to_string(ResampleMode mode);

struct ReplicateRow {
  double mu = 0.0;
  double var_design = 0.0;
  double var_model = 0.0;
  double var_total = 0.0;
  bool covered = false;
};

struct MonteCarloResult {
  std::size_t replicates = 0;
  ResampleMode mode = ResampleMode::TracksOnly;
  double true_mean = 0.0;
  double mean_mu = 0.0;
  double empirical_var_mu = 0.0;
  double mean_var_design = 0.0;
  double mean_var_model = 0.0;
  double mean_var_total = 0.0;
  double coverage = 0.0;  // 95% normal-theory CIs containing true_mean
  std::vector<ReplicateRow> rows;
};

/// Monte Carlo over the sampling design. TracksOnly holds the fitted models
/// fixed and redraws track placement (validates the design variance);
/// FullChain additionally redraws allometric parameters, tree lists and
/// predictor noise, refits both models and rebuilds the covariance chain
/// per replicate (validates the total variance and CI coverage; TracksOnly
/// rows carry var_model = 0). Replicate streams are derived as
/// seed xor replicate index, results are aggregated in replicate order, so
/// output is identical for any thread count.
MonteCarloResult run_sampling_mc(const World& world, std::size_t replicates,
                                 ResampleMode mode, int threads = 0);

/// mc_result.json body (includes the per-replicate table).
std::string mc_result_json(const MonteCarloResult& result);

}  // namespace hierlid::simulate
