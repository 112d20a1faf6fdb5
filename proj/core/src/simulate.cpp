#include "hierlid/simulate.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "hierlid/csv.hpp"
#include "hierlid/error.hpp"
#include "hierlid/estimators.hpp"
#include "hierlid/grf.hpp"
#include "hierlid/linalg.hpp"
#include "hierlid/propagation.hpp"

namespace hierlid::simulate {

namespace {

using nlohmann::json;

// Stream tags for the world generator's sub-purposes.
enum StreamTag : std::uint64_t {
  kFieldStream = 1,
  kPlotStream = 2,
  kTreeStream = 3,
  kTreeMeanStream = 4,
  kTrainStream = 5,
  kTargetStream = 6,
  kPixelStream = 7,
};

struct DrawnTree {
  double dbh = 0.0;
  double height = 0.0;
  data::Species species = data::Species::Pine;
};

DrawnTree draw_tree(const TreeGenConfig& cfg, CounterRng& rng) {
  DrawnTree t;
  t.dbh = std::clamp(std::exp(rng.normal(cfg.dbh_log_mean, cfg.dbh_log_sd)), 5.0, 200.0);
  const double curve = 1.3 + cfg.height_curve_a * std::pow(t.dbh, cfg.height_curve_b);
  t.height = std::clamp(curve * std::exp(rng.normal(0.0, cfg.height_noise_sd)),
                        1.3 + 1e-3, 60.0);
  const double u = rng.uniform();
  if (u < cfg.share_pine)
    t.species = data::Species::Pine;
  else if (u < cfg.share_pine + cfg.share_spruce)
    t.species = data::Species::Spruce;
  else
    t.species = data::Species::Deciduous;
  return t;
}

double mean_tree_agb(const SyntheticWorldConfig& config, CounterRng rng) {
  constexpr int kDraws = 20000;
  double sum = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const DrawnTree t = draw_tree(config.trees, rng);
    data::TreeRecord rec;
    rec.dbh = t.dbh;
    rec.height = t.height;
    rec.species = t.species;
    sum += allometry::eval_combined_agb(config.allometry, rec);
  }
  return sum / kDraws;
}

std::vector<data::TreeRecord> draw_plot_trees(const World& world, CounterRng& rng) {
  const auto& cfg = world.config.trees;
  std::vector<data::TreeRecord> trees;
  for (std::size_t i = 0; i < world.plots.size(); ++i) {
    const double truth = world.field(world.plot_rows[i], world.plot_cols[i]);
    const double lambda =
        truth * 1000.0 * cfg.plot_area_ha / world.mean_tree_agb;
    const std::uint64_t count = rng.poisson(lambda);
    for (std::uint64_t k = 0; k < count; ++k) {
      const DrawnTree t = draw_tree(cfg, rng);
      data::TreeRecord rec;
      rec.tree_id = world.plots[i].plot_id + "_T" + std::to_string(k);
      rec.plot_id = world.plots[i].plot_id;
      rec.dbh = t.dbh;
      rec.height = t.height;
      rec.species = t.species;
      trees.push_back(std::move(rec));
    }
  }
  return trees;
}

data::PredictorTable make_predictors(const std::vector<PredictorSpec>& specs,
                                     const Eigen::VectorXd& truths, CounterRng& rng) {
  data::PredictorTable table;
  for (const auto& s : specs) table.names.push_back(s.name);
  table.values.resize(truths.size(), static_cast<Eigen::Index>(specs.size()));
  for (Eigen::Index i = 0; i < truths.size(); ++i) {
    for (std::size_t j = 0; j < specs.size(); ++j) {
      const auto& s = specs[j];
      double v = s.offset + s.scale * std::pow(std::max(0.0, truths[i]), s.power);
      if (s.noise_sd > 0.0) v += s.noise_sd * rng.normal();
      table.values(i, static_cast<Eigen::Index>(j)) = v;
    }
  }
  return table;
}

// Segment tables for a set of track columns. Subcell generation is optional
// (only the base world needs it for diagnostics).
struct TrackTables {
  data::SegmentTable segments;
  data::SubcellTable subcells;
  Eigen::VectorXd segment_truth;
};

TrackTables build_tracks(const World& world, const std::vector<Eigen::Index>& columns,
                         const std::string& prefix, bool with_subcells,
                         CounterRng& rng) {
  const auto& cfg = world.config;
  const Eigen::Index n_seg_per_track = world.segments_per_track;
  const Eigen::Index n_segments =
      static_cast<Eigen::Index>(columns.size()) * n_seg_per_track;

  TrackTables out;
  out.segment_truth.resize(n_segments);

  std::vector<double> seg_truths;
  std::vector<double> pixel_truths;
  Eigen::Index seg_i = 0;
  for (std::size_t t = 0; t < columns.size(); ++t) {
    const std::string track_id = prefix + std::to_string(t);
    for (Eigen::Index j = 0; j < n_seg_per_track; ++j, ++seg_i) {
      const std::string seg_id = track_id + "_s" + std::to_string(j);
      out.segments.ids.push_back(seg_id);
      out.segments.track_ids.push_back(track_id);
      out.segments.quality.push_back({500.0, 1.0, true});
      double sum = 0.0;
      for (Eigen::Index k = 0; k < 6; ++k) {
        const double v = world.field(6 * j + k, columns[t]);
        sum += v;
        if (with_subcells) {
          out.subcells.ids.push_back(seg_id + "_c" + std::to_string(k));
          out.subcells.segment_ids.push_back(seg_id);
          pixel_truths.push_back(v);
        }
      }
      out.segment_truth[seg_i] = sum / 6.0;
      seg_truths.push_back(out.segment_truth[seg_i]);
    }
  }

  const Eigen::Map<const Eigen::VectorXd> seg_truth_vec(seg_truths.data(),
                                                        static_cast<Eigen::Index>(seg_truths.size()));
  out.segments.predictors = make_predictors(cfg.i2_predictors, seg_truth_vec, rng);
  if (with_subcells) {
    const Eigen::Map<const Eigen::VectorXd> pix_vec(pixel_truths.data(),
                                                    static_cast<Eigen::Index>(pixel_truths.size()));
    out.subcells.predictors = make_predictors(cfg.proxy_predictors, pix_vec, rng);
  }
  return out;
}

Eigen::VectorXd average_to_segments(const Eigen::VectorXd& subcell_values) {
  const Eigen::Index n_seg = subcell_values.size() / 6;
  Eigen::VectorXd out(n_seg);
  for (Eigen::Index j = 0; j < n_seg; ++j) out[j] = subcell_values.segment(6 * j, 6).mean();
  return out;
}

std::vector<std::string> predictor_names(const std::vector<PredictorSpec>& specs) {
  std::vector<std::string> names;
  for (const auto& s : specs) names.push_back(s.name);
  return names;
}

std::vector<gnls::Transform> identity_transforms(std::size_t n) {
  return std::vector<gnls::Transform>(n, gnls::Transform::Identity);
}

}  // namespace

SyntheticWorldConfig default_world_config() {
  SyntheticWorldConfig config;

  auto species = [](double a0, double a1, double a2) {
    allometry::SpeciesModel m;
    m.params.resize(3);
    m.params << a0, a1, a2;
    m.cov = Eigen::MatrixXd::Zero(3, 3);
    // Parameter sd about 1.5% of magnitude, mirroring tight published fits.
    for (int i = 0; i < 3; ++i) {
      const double sd = 0.015 * std::max(0.2, std::abs(m.params[i]));
      m.cov(i, i) = sd * sd;
    }
    return m;
  };
  config.allometry.pine = species(-2.5, 1.9, 0.7);
  config.allometry.spruce = species(-2.3, 1.8, 0.75);
  config.allometry.deciduous = species(-2.6, 1.95, 0.65);

  config.proxy_predictors = {
      {"als_p50", 1.0, 0.0, 0.5, 0.0},
      {"als_mean", 0.8, 2.0, 1.0, 0.5},
      {"als_cover", -0.5, 10.0, 0.75, 0.5},
      {"s2_nir", 0.3, 5.0, 0.25, 0.5},
  };
  config.i2_predictors = {
      {"i2_p50", 1.0, 0.0, 0.5, 0.0},
      {"i2_mean", 0.6, 1.0, 0.75, 0.4},
      {"i2_cover", 1.2, -2.0, 0.25, 0.4},
      {"i2_qav", 0.5, 3.0, 1.0, 0.4},
  };
  return config;
}

void validate_config(const SyntheticWorldConfig& config) {
  const auto& f = config.field;
  if (f.grid_rows < 6 || f.grid_cols < 1)
    throw Error(ErrorKind::ConfigError, "grid must be at least 6 rows by 1 column");
  if (!(f.mean_agbd >= 0.0) || !(f.sd_agbd >= 0.0) || !(f.correlation_range >= 0.0))
    throw Error(ErrorKind::ConfigError, "field parameters must be non-negative");

  const auto& t = config.trees;
  if (t.n_plots < 1) throw Error(ErrorKind::ConfigError, "need at least one plot");
  if (!(t.plot_area_ha > 0.0)) throw Error(ErrorKind::ConfigError, "plot area must be positive");
  if (t.share_pine < 0.0 || t.share_spruce < 0.0 ||
      t.share_pine + t.share_spruce > 1.0 + 1e-12)
    throw Error(ErrorKind::ConfigError, "species shares must be a sub-probability");
  if (!(t.height_noise_sd >= 0.0) || !(t.dbh_log_sd >= 0.0))
    throw Error(ErrorKind::ConfigError, "noise parameters must be non-negative");

  if (config.proxy_predictors.empty() || config.i2_predictors.empty())
    throw Error(ErrorKind::ConfigError, "need at least one predictor per level");
  for (const auto& list : {config.proxy_predictors, config.i2_predictors})
    for (const auto& s : list) {
      if (s.name.empty()) throw Error(ErrorKind::ConfigError, "predictor without a name");
      if (!(s.noise_sd >= 0.0))
        throw Error(ErrorKind::ConfigError, "predictor noise must be non-negative");
      if (!(s.power > 0.0))
        throw Error(ErrorKind::ConfigError, "predictor power must be positive");
    }

  const auto& k = config.tracks;
  if (k.n_tracks < 1 || k.n_train_tracks < 1)
    throw Error(ErrorKind::ConfigError, "need at least one track per side");
  if (static_cast<Eigen::Index>(k.n_train_tracks) > f.grid_cols)
    throw Error(ErrorKind::ConfigError,
                "grid has fewer columns than requested training tracks");

  allometry::validate_spec(config.allometry);
}

Eigen::VectorXd World::column_segment_truth(Eigen::Index column) const {
  Eigen::VectorXd out(segments_per_track);
  for (Eigen::Index j = 0; j < segments_per_track; ++j)
    out[j] = field.block(6 * j, column, 6, 1).mean();
  return out;
}

World generate_world(const SyntheticWorldConfig& config) {
  validate_config(config);

  World world;
  world.config = config;
  const CounterRng root(config.rng_seed);

  // AGBD field: standardized Gaussian field, exponentiated, affinely scaled
  // to the target moments, clipped at zero.
  const Eigen::Index rows = config.field.grid_rows;
  const Eigen::Index cols = config.field.grid_cols;
  if (config.field.sd_agbd == 0.0 || config.field.mean_agbd == 0.0) {
    world.field = Eigen::MatrixXd::Constant(rows, cols, config.field.mean_agbd);
  } else {
    CounterRng field_rng = root.fork(kFieldStream);
    const Eigen::MatrixXd gauss = grf::gaussian_random_field(
        rows, cols, config.field.correlation_range, field_rng);
    const double cv = config.field.sd_agbd / config.field.mean_agbd;
    const double log_sd = std::sqrt(std::log1p(cv * cv));
    Eigen::MatrixXd shaped = (log_sd * gauss).array().exp();
    const double m = shaped.mean();
    const double sd = std::sqrt((shaped.array() - m).square().mean());
    const double scale = sd > 0.0 ? config.field.sd_agbd / sd : 0.0;
    world.field =
        ((shaped.array() - m) * scale + config.field.mean_agbd).cwiseMax(0.0);
  }
  world.true_mean_agbd = world.field.mean();
  world.segments_per_track = rows / 6;
  const Eigen::Index covered = 6 * world.segments_per_track;
  world.frame_mean_agbd = world.field.topRows(covered).mean();

  world.mean_tree_agb = mean_tree_agb(config, root.fork(kTreeMeanStream));
  if (!(world.mean_tree_agb > 0.0))
    throw Error(ErrorKind::ConfigError, "mean tree AGB is not positive");

  // Plot placement and predictors.
  CounterRng plot_rng = root.fork(kPlotStream);
  world.plots.reserve(config.trees.n_plots);
  Eigen::VectorXd plot_truth(static_cast<Eigen::Index>(config.trees.n_plots));
  for (std::size_t i = 0; i < config.trees.n_plots; ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(plot_rng.below(rows));
    const Eigen::Index c = static_cast<Eigen::Index>(plot_rng.below(cols));
    world.plot_rows.push_back(r);
    world.plot_cols.push_back(c);
    data::FieldPlot p;
    p.plot_id = "P" + std::to_string(i);
    p.area_ha = config.trees.plot_area_ha;
    p.x = 15.0 * static_cast<double>(c) + 7.5;
    p.y = 15.0 * static_cast<double>(r) + 7.5;
    world.plots.push_back(std::move(p));
    plot_truth[static_cast<Eigen::Index>(i)] = world.field(r, c);
  }
  world.plot_predictors = make_predictors(config.proxy_predictors, plot_truth, plot_rng);

  CounterRng tree_rng = root.fork(kTreeStream);
  world.trees = draw_plot_trees(world, tree_rng);

  // Training tracks on distinct columns.
  CounterRng train_rng = root.fork(kTrainStream);
  std::vector<Eigen::Index> all_cols(static_cast<std::size_t>(cols));
  for (std::size_t i = 0; i < all_cols.size(); ++i)
    all_cols[i] = static_cast<Eigen::Index>(i);
  for (std::size_t i = 0; i < config.tracks.n_train_tracks; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(train_rng.below(all_cols.size() - i));
    std::swap(all_cols[i], all_cols[j]);
  }
  world.train_columns.assign(all_cols.begin(),
                             all_cols.begin() + static_cast<long>(config.tracks.n_train_tracks));
  TrackTables train = build_tracks(world, world.train_columns, "tr", true, train_rng);
  world.train_subcells = std::move(train.subcells);
  world.train_segments = std::move(train.segments);
  world.train_segment_truth = std::move(train.segment_truth);

  // Base target sample: columns drawn with replacement.
  CounterRng target_rng = root.fork(kTargetStream);
  for (std::size_t i = 0; i < config.tracks.n_tracks; ++i)
    world.target_columns.push_back(static_cast<Eigen::Index>(target_rng.below(cols)));
  TrackTables target = build_tracks(world, world.target_columns, "t", true, target_rng);
  world.target_segments = std::move(target.segments);
  world.target_subcells = std::move(target.subcells);
  world.target_segment_truth = std::move(target.segment_truth);

  // Wall-to-wall pixel predictors (row-major).
  CounterRng pixel_rng = root.fork(kPixelStream);
  Eigen::VectorXd pixel_truth(rows * cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      pixel_truth[r * cols + c] = world.field(r, c);
      world.pixel_ids.push_back("px_r" + std::to_string(r) + "_c" + std::to_string(c));
    }
  world.pixel_predictors = make_predictors(config.proxy_predictors, pixel_truth, pixel_rng);

  return world;
}

ChainRealization draw_chain_realization(const World& world, CounterRng& rng) {
  const auto& config = world.config;
  ChainRealization real;

  // Parameter estimate for this replicate: alpha_hat ~ N(alpha, C_alpha).
  const Eigen::MatrixXd chol = linalg::psd_cholesky(config.allometry.stacked_cov());
  Eigen::VectorXd z(chol.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  real.spec = config.allometry.with_params(config.allometry.stacked_params() + chol * z);

  real.trees = config.trees.exact_response ? world.trees : draw_plot_trees(world, rng);
  real.plot_result = allometry::plot_agbd(real.spec, real.trees, world.plots);
  if (config.trees.exact_response) {
    for (std::size_t i = 0; i < world.plots.size(); ++i)
      real.plot_result.agbd.values[static_cast<Eigen::Index>(i)] =
          world.field(world.plot_rows[i], world.plot_cols[i]);
  }

  // Fresh predictor noise at every training level.
  Eigen::VectorXd plot_truth(static_cast<Eigen::Index>(world.plots.size()));
  for (std::size_t i = 0; i < world.plots.size(); ++i)
    plot_truth[static_cast<Eigen::Index>(i)] =
        world.field(world.plot_rows[i], world.plot_cols[i]);
  real.plot_predictors = make_predictors(config.proxy_predictors, plot_truth, rng);

  TrackTables train = build_tracks(world, world.train_columns, "tr", true, rng);
  real.train_subcells = std::move(train.subcells);
  real.train_segments = std::move(train.segments);

  const auto proxy_names = predictor_names(config.proxy_predictors);
  real.proxy_fit = gnls::fit_gnls(real.plot_predictors, real.plot_result.agbd.values,
                                  proxy_names, identity_transforms(proxy_names.size()),
                                  gnls::VarFnKind::ConstantPlusPower);

  const Eigen::VectorXd subcell_pred =
      gnls::predict(real.proxy_fit.model, real.train_subcells.predictors);
  real.proxy_segment_response = average_to_segments(subcell_pred);

  const auto i2_names = predictor_names(config.i2_predictors);
  real.i2_fit = gnls::fit_gnls(real.train_segments.predictors,
                               real.proxy_segment_response, i2_names,
                               identity_transforms(i2_names.size()),
                               gnls::VarFnKind::Homoscedastic);
  return real;
}

TargetDraw draw_target_tracks(const World& world, CounterRng& rng) {
  TargetDraw draw;
  for (std::size_t i = 0; i < world.config.tracks.n_tracks; ++i)
    draw.columns.push_back(
        static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(world.field.cols()))));
  TrackTables tables = build_tracks(world, draw.columns, "t", false, rng);
  draw.segments = std::move(tables.segments);
  draw.truth = std::move(tables.segment_truth);
  return draw;
}

ResampleMode resample_mode_from_string(const std::string& s) {
  if (s == "tracks_only") return ResampleMode::TracksOnly;
  if (s == "full_chain") return ResampleMode::FullChain;
  throw Error(ErrorKind::ConfigError, "unknown resample mode '" + s + "'");
}

std::string resample_mode_to_string(ResampleMode mode) {
  return mode == ResampleMode::TracksOnly ? "tracks_only" : "full_chain";
}

namespace {

// Fixed models for tracks-only resampling: the world's own base tables.
ChainRealization base_realization(const World& world) {
  const auto& config = world.config;
  ChainRealization real;
  real.spec = config.allometry;
  real.trees = world.trees;
  real.plot_result = allometry::plot_agbd(real.spec, real.trees, world.plots);
  if (config.trees.exact_response) {
    for (std::size_t i = 0; i < world.plots.size(); ++i)
      real.plot_result.agbd.values[static_cast<Eigen::Index>(i)] =
          world.field(world.plot_rows[i], world.plot_cols[i]);
  }
  real.plot_predictors = world.plot_predictors;
  real.train_subcells = world.train_subcells;
  real.train_segments = world.train_segments;

  const auto proxy_names = predictor_names(config.proxy_predictors);
  real.proxy_fit = gnls::fit_gnls(real.plot_predictors, real.plot_result.agbd.values,
                                  proxy_names, identity_transforms(proxy_names.size()),
                                  gnls::VarFnKind::ConstantPlusPower);
  const Eigen::VectorXd subcell_pred =
      gnls::predict(real.proxy_fit.model, real.train_subcells.predictors);
  real.proxy_segment_response = average_to_segments(subcell_pred);

  const auto i2_names = predictor_names(config.i2_predictors);
  real.i2_fit = gnls::fit_gnls(real.train_segments.predictors,
                               real.proxy_segment_response, i2_names,
                               identity_transforms(i2_names.size()),
                               gnls::VarFnKind::Homoscedastic);
  return real;
}

double model_variance_of(const World& world, const ChainRealization& real,
                         const data::PredictorTable& target_predictors) {
  const propagation::AveragingMatrix averaging = propagation::build_averaging(
      real.train_subcells, real.train_segments.ids);
  const propagation::ChainInputs inputs{real.plot_result,
                                        real.proxy_fit,
                                        real.plot_predictors,
                                        real.train_subcells.predictors,
                                        averaging,
                                        real.i2_fit,
                                        real.train_segments.predictors,
                                        target_predictors};
  const propagation::CovChain chain = propagation::build_chain(inputs);
  return estimators::model_variance(chain.c_i2.quad_form_total(),
                                    target_predictors.rows());
}

}  // namespace

MonteCarloResult run_sampling_mc(const World& world, std::size_t replicates,
                                 ResampleMode mode, int threads) {
  if (replicates < 2)
    throw Error(ErrorKind::PreconditionFailed, "need at least 2 replicates");

  MonteCarloResult result;
  result.replicates = replicates;
  result.mode = mode;
  result.true_mean = world.frame_mean_agbd;
  result.rows.resize(replicates);

  // In tracks-only mode the fitted models are shared by all replicates.
  const ChainRealization base =
      mode == ResampleMode::TracksOnly ? base_realization(world) : ChainRealization{};

  const std::uint64_t seed = world.config.rng_seed;
  auto replicate = [&](std::size_t r) {
    CounterRng rng = CounterRng::stream(seed, static_cast<std::uint64_t>(r));
    ReplicateRow row;
    if (mode == ResampleMode::TracksOnly) {
      const TargetDraw draw = draw_target_tracks(world, rng);
      const Eigen::VectorXd pred =
          gnls::predict(base.i2_fit.model, draw.segments.predictors);
      const auto tracks = estimators::aggregate_tracks(draw.segments.track_ids, pred);
      row.mu = estimators::hybrid_mean(tracks);
      row.var_design = estimators::design_variance(tracks);
      row.var_model = 0.0;
    } else {
      const ChainRealization real = draw_chain_realization(world, rng);
      const TargetDraw draw = draw_target_tracks(world, rng);
      const Eigen::VectorXd pred =
          gnls::predict(real.i2_fit.model, draw.segments.predictors);
      const auto tracks = estimators::aggregate_tracks(draw.segments.track_ids, pred);
      row.mu = estimators::hybrid_mean(tracks);
      row.var_design = estimators::design_variance(tracks);
      row.var_model = model_variance_of(world, real, draw.segments.predictors);
    }
    row.var_total = row.var_design + row.var_model;
    const double half = 1.96 * std::sqrt(row.var_total);
    row.covered = std::abs(row.mu - result.true_mean) <= half;
    result.rows[r] = row;
  };

  int n_threads = threads > 0 ? threads
                              : static_cast<int>(std::thread::hardware_concurrency());
  if (n_threads < 1) n_threads = 1;
  n_threads = std::min<int>(n_threads, static_cast<int>(replicates));
  if (n_threads == 1) {
    for (std::size_t r = 0; r < replicates; ++r) replicate(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t r = next.fetch_add(1);
          if (r >= replicates) return;
          replicate(r);
        }
      });
    for (auto& t : pool) t.join();
  }

  // Replicate-ordered reduction keeps results independent of scheduling.
  double mean_mu = 0.0;
  for (const auto& row : result.rows) mean_mu += row.mu;
  mean_mu /= static_cast<double>(replicates);
  double ss = 0.0, comp = 0.0;
  double sum_vd = 0.0, sum_vm = 0.0, sum_vt = 0.0;
  std::size_t covered = 0;
  for (const auto& row : result.rows) {
    const double d = row.mu - mean_mu;
    // Kahan-compensated accumulation of the squared deviations.
    const double term = d * d - comp;
    const double t = ss + term;
    comp = (t - ss) - term;
    ss = t;
    sum_vd += row.var_design;
    sum_vm += row.var_model;
    sum_vt += row.var_total;
    if (row.covered) ++covered;
  }
  result.mean_mu = mean_mu;
  result.empirical_var_mu = ss / static_cast<double>(replicates - 1);
  result.mean_var_design = sum_vd / static_cast<double>(replicates);
  result.mean_var_model = sum_vm / static_cast<double>(replicates);
  result.mean_var_total = sum_vt / static_cast<double>(replicates);
  result.coverage = static_cast<double>(covered) / static_cast<double>(replicates);
  return result;
}

// ---- JSON ----------------------------------------------------------------

namespace {

json predictor_to_json(const PredictorSpec& s) {
  return {{"name", s.name},
          {"scale", s.scale},
          {"offset", s.offset},
          {"power", s.power},
          {"noise_sd", s.noise_sd}};
}

PredictorSpec predictor_from_json(const json& j) {
  PredictorSpec s;
  s.name = j.at("name").get<std::string>();
  s.scale = j.value("scale", 1.0);
  s.offset = j.value("offset", 0.0);
  s.power = j.value("power", 0.5);
  s.noise_sd = j.value("noise_sd", 0.0);
  return s;
}

}  // namespace

std::string config_json_string(const SyntheticWorldConfig& config) {
  json j;
  j["field"] = {{"grid_rows", config.field.grid_rows},
                {"grid_cols", config.field.grid_cols},
                {"mean_agbd", config.field.mean_agbd},
                {"sd_agbd", config.field.sd_agbd},
                {"correlation_range", config.field.correlation_range}};
  j["trees"] = {{"n_plots", config.trees.n_plots},
                {"plot_area_ha", config.trees.plot_area_ha},
                {"dbh_log_mean", config.trees.dbh_log_mean},
                {"dbh_log_sd", config.trees.dbh_log_sd},
                {"height_curve_a", config.trees.height_curve_a},
                {"height_curve_b", config.trees.height_curve_b},
                {"height_noise_sd", config.trees.height_noise_sd},
                {"share_pine", config.trees.share_pine},
                {"share_spruce", config.trees.share_spruce},
                {"exact_response", config.trees.exact_response}};
  j["allometry"] = json::parse(allometry::spec_json_string(config.allometry));
  json proxy = json::array();
  for (const auto& s : config.proxy_predictors) proxy.push_back(predictor_to_json(s));
  j["proxy_predictors"] = std::move(proxy);
  json i2 = json::array();
  for (const auto& s : config.i2_predictors) i2.push_back(predictor_to_json(s));
  j["i2_predictors"] = std::move(i2);
  j["tracks"] = {{"n_tracks", config.tracks.n_tracks},
                 {"n_train_tracks", config.tracks.n_train_tracks}};
  j["rng_seed"] = config.rng_seed;
  return j.dump(2) + "\n";
}

SyntheticWorldConfig config_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("invalid world JSON: ") + e.what());
  }
  SyntheticWorldConfig config = default_world_config();
  try {
    if (j.contains("field")) {
      const auto& f = j["field"];
      config.field.grid_rows = f.value("grid_rows", config.field.grid_rows);
      config.field.grid_cols = f.value("grid_cols", config.field.grid_cols);
      config.field.mean_agbd = f.value("mean_agbd", config.field.mean_agbd);
      config.field.sd_agbd = f.value("sd_agbd", config.field.sd_agbd);
      config.field.correlation_range =
          f.value("correlation_range", config.field.correlation_range);
    }
    if (j.contains("trees")) {
      const auto& t = j["trees"];
      config.trees.n_plots = t.value("n_plots", config.trees.n_plots);
      config.trees.plot_area_ha = t.value("plot_area_ha", config.trees.plot_area_ha);
      config.trees.dbh_log_mean = t.value("dbh_log_mean", config.trees.dbh_log_mean);
      config.trees.dbh_log_sd = t.value("dbh_log_sd", config.trees.dbh_log_sd);
      config.trees.height_curve_a = t.value("height_curve_a", config.trees.height_curve_a);
      config.trees.height_curve_b = t.value("height_curve_b", config.trees.height_curve_b);
      config.trees.height_noise_sd =
          t.value("height_noise_sd", config.trees.height_noise_sd);
      config.trees.share_pine = t.value("share_pine", config.trees.share_pine);
      config.trees.share_spruce = t.value("share_spruce", config.trees.share_spruce);
      config.trees.exact_response = t.value("exact_response", config.trees.exact_response);
    }
    if (j.contains("allometry"))
      config.allometry = allometry::spec_from_json_string(j["allometry"].dump());
    if (j.contains("proxy_predictors")) {
      config.proxy_predictors.clear();
      for (const auto& s : j["proxy_predictors"])
        config.proxy_predictors.push_back(predictor_from_json(s));
    }
    if (j.contains("i2_predictors")) {
      config.i2_predictors.clear();
      for (const auto& s : j["i2_predictors"])
        config.i2_predictors.push_back(predictor_from_json(s));
    }
    if (j.contains("tracks")) {
      const auto& t = j["tracks"];
      config.tracks.n_tracks = t.value("n_tracks", config.tracks.n_tracks);
      config.tracks.n_train_tracks =
          t.value("n_train_tracks", config.tracks.n_train_tracks);
    }
    config.rng_seed = j.value("rng_seed", config.rng_seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("invalid world JSON: ") + e.what());
  }
  validate_config(config);
  return config;
}

SyntheticWorldConfig load_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json_string(buf.str());
}

std::string mc_result_json(const MonteCarloResult& result) {
  json j;
  j["replicates"] = result.replicates;
  j["mode"] = resample_mode_to_string(result.mode);
  j["true_mean"] = result.true_mean;
  j["mean_mu"] = result.mean_mu;
  j["empirical_var_mu"] = result.empirical_var_mu;
  j["mean_var_design"] = result.mean_var_design;
  j["mean_var_model"] = result.mean_var_model;
  j["mean_var_total"] = result.mean_var_total;
  j["coverage"] = result.coverage;
  json rows = json::array();
  for (const auto& row : result.rows)
    rows.push_back({{"mu", row.mu},
                    {"var_design", row.var_design},
                    {"var_model", row.var_model},
                    {"var_total", row.var_total},
                    {"covered", row.covered}});
  j["replicate_table"] = std::move(rows);
  return j.dump(2) + "\n";
}

// ---- World files -----------------------------------------------------------

namespace {

csv::Table trees_table(const std::vector<data::TreeRecord>& trees) {
  csv::Table t;
  t.header = {"tree_id", "plot_id", "dbh_cm", "height_m", "species"};
  for (const auto& tree : trees)
    t.rows.push_back({tree.tree_id, tree.plot_id, csv::format_double(tree.dbh),
                      csv::format_double(tree.height),
                      data::species_to_string(tree.species)});
  return t;
}

csv::Table plots_table(const std::vector<data::FieldPlot>& plots) {
  csv::Table t;
  t.header = {"plot_id", "area_ha", "x", "y"};
  for (const auto& p : plots)
    t.rows.push_back({p.plot_id, csv::format_double(p.area_ha), csv::format_double(p.x),
                      csv::format_double(p.y)});
  return t;
}

csv::Table keyed_table(const std::string& id_column, const std::vector<std::string>& ids,
                       const data::PredictorTable& preds) {
  csv::Table t;
  t.header.push_back(id_column);
  for (const auto& name : preds.names) t.header.push_back(name);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<std::string> row{ids[i]};
    for (Eigen::Index j = 0; j < preds.values.cols(); ++j)
      row.push_back(csv::format_double(preds.values(static_cast<Eigen::Index>(i), j)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

void write_world(const World& world, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + dir.string() + "'");

  csv::write_table(trees_table(world.trees), dir / "trees.csv");
  csv::write_table(plots_table(world.plots), dir / "plots.csv");
  std::vector<std::string> plot_ids;
  for (const auto& p : world.plots) plot_ids.push_back(p.plot_id);
  csv::write_table(keyed_table("plot_id", plot_ids, world.plot_predictors),
                   dir / "plot_metrics.csv");
  csv::write_table(csv::to_table(world.train_subcells), dir / "subcells_train.csv");
  csv::write_table(csv::to_table(world.train_segments), dir / "segments_train.csv");
  csv::write_table(csv::to_table(world.target_segments), dir / "segments_target.csv");
  csv::write_table(csv::to_table(world.target_subcells), dir / "subcells_target.csv");
  csv::write_table(keyed_table("pixel_id", world.pixel_ids, world.pixel_predictors),
                   dir / "pixels.csv");
  allometry::save_spec_json(world.config.allometry, dir / "allometry.json");

  {
    csv::Table raster;
    raster.header = {"row", "col", "agbd_true"};
    for (Eigen::Index r = 0; r < world.field.rows(); ++r)
      for (Eigen::Index c = 0; c < world.field.cols(); ++c)
        raster.rows.push_back({std::to_string(r), std::to_string(c),
                               csv::format_double(world.field(r, c))});
    csv::write_table(raster, dir / "raster.csv");
  }

  {
    json truth;
    truth["true_mean_agbd"] = world.true_mean_agbd;
    truth["frame_mean_agbd"] = world.frame_mean_agbd;
    truth["grid"] = {{"rows", world.field.rows()}, {"cols", world.field.cols()}};
    truth["segments_per_track"] = world.segments_per_track;
    truth["mean_tree_agb"] = world.mean_tree_agb;
    truth["rng_seed"] = world.config.rng_seed;
    std::ofstream out(dir / "truth.json");
    if (!out) throw Error(ErrorKind::IoError, "cannot write truth.json");
    out << truth.dump(2) << '\n';
  }

  {
    std::ofstream out(dir / "world.json");
    if (!out) throw Error(ErrorKind::IoError, "cannot write world.json");
    out << config_json_string(world.config);
  }

  {
    // Ready-to-run estimate configuration; paths resolve against this file.
    json cfg;
    cfg["mode"] = "estimate";
    cfg["inputs"] = {{"trees", "trees.csv"},
                     {"plots", "plots.csv"},
                     {"plot_metrics", "plot_metrics.csv"},
                     {"subcells_train", "subcells_train.csv"},
                     {"segments_train", "segments_train.csv"},
                     {"segments_target", "segments_target.csv"},
                     {"subcells_target", "subcells_target.csv"},
                     {"pixels", "pixels.csv"}};
    cfg["allometry"] = "allometry.json";
    cfg["output_dir"] = "out";
    cfg["rng_seed"] = world.config.rng_seed;
    cfg["proxy"] = {{"varfn", "constant_plus_power"}};
    cfg["i2"] = {{"varfn", "homoscedastic"}};
    std::ofstream out(dir / "pipeline_config.json");
    if (!out) throw Error(ErrorKind::IoError, "cannot write pipeline_config.json");
    out << cfg.dump(2) << '\n';
  }
}

}  // namespace hierlid::simulate
