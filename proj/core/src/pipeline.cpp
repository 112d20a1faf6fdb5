#include "hierlid/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "hierlid/csv.hpp"
#include "hierlid/error.hpp"
#include "hierlid/propagation.hpp"
#include "hierlid/version.hpp"

namespace hierlid::pipeline {

namespace {

using nlohmann::json;

namespace fs = std::filesystem;

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error::with_context(e, std::string("stage '") + name + "'");
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

void require_input(const PipelineConfig& config, const fs::path& p, const char* what) {
  if (p.empty())
    throw Error(ErrorKind::ConfigError,
                std::string("stage 'ingest': config does not provide ") + what);
  if (!fs::exists(resolve(config.base_dir, p)))
    throw Error(ErrorKind::IoError, std::string("stage 'ingest': missing ") + what +
                                        " file '" + p.string() + "'");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path.string() + "'");
  out << body;
}

// ---- Loaded inputs -------------------------------------------------------

struct Ingested {
  std::vector<data::TreeRecord> trees;
  std::vector<data::FieldPlot> plots;
  data::LinkReport link;
  csv::KeyedPredictors plot_metrics;
  data::SubcellTable subcells_train;
  data::SegmentTable segments_train;
  data::SegmentTable segments_target;
  std::optional<data::SubcellTable> subcells_target;
  std::optional<csv::KeyedPredictors> pixels;
  std::vector<std::string> warnings;
};

Ingested ingest_training(const PipelineConfig& config, bool need_train_segments,
                         bool need_target, bool need_pixels) {
  return stage("ingest", [&] {
    require_input(config, config.trees, "trees");
    require_input(config, config.plots, "plots");
    require_input(config, config.plot_metrics, "plot_metrics");
    require_input(config, config.allometry, "allometry");
    if (need_train_segments) {
      require_input(config, config.subcells_train, "subcells_train");
      require_input(config, config.segments_train, "segments_train");
    }
    if (need_target) require_input(config, config.segments_target, "segments_target");
    if (need_pixels) require_input(config, config.pixels, "pixels");

    Ingested in;
    data::LoadOptions opts;
    opts.strict_radii = config.strict_radii;
    data::ValidationWarnings warn;
    in.trees = csv::load_trees(resolve(config.base_dir, config.trees));
    in.plots = csv::load_plots(resolve(config.base_dir, config.plots), opts, &warn);
    in.warnings = warn.messages;
    in.link = data::validate_linkage(in.trees, in.plots);
    in.plot_metrics =
        csv::load_keyed_predictors(resolve(config.base_dir, config.plot_metrics), "plot_id");
    if (need_train_segments) {
      in.subcells_train = csv::load_subcells(resolve(config.base_dir, config.subcells_train));
      in.segments_train = csv::load_segments(resolve(config.base_dir, config.segments_train));
    }
    if (need_target) {
      in.segments_target = csv::load_segments(resolve(config.base_dir, config.segments_target));
      if (!config.subcells_target.empty())
        in.subcells_target =
            csv::load_subcells(resolve(config.base_dir, config.subcells_target));
    }
    if (need_pixels)
      in.pixels = csv::load_keyed_predictors(resolve(config.base_dir, config.pixels), "pixel_id");
    return in;
  });
}

data::PredictorTable align_plot_metrics(const csv::KeyedPredictors& metrics,
                                        const std::vector<data::FieldPlot>& plots) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < metrics.ids.size(); ++i) row_of.emplace(metrics.ids[i], i);
  std::vector<std::size_t> order;
  order.reserve(plots.size());
  for (const auto& p : plots) {
    const auto it = row_of.find(p.plot_id);
    if (it == row_of.end())
      throw Error(ErrorKind::InvariantViolation,
                  "plot '" + p.plot_id + "' has no row in plot_metrics");
    order.push_back(it->second);
  }
  return metrics.predictors.take_rows(order);
}

struct ResolvedLevel {
  std::vector<std::string> predictors;
  std::vector<gnls::Transform> transforms;
  std::optional<varsel::SelectionResult> selection;
};

ResolvedLevel resolve_level(const LevelConfig& level, const data::PredictorTable& X,
                            const Eigen::VectorXd& y) {
  ResolvedLevel out;
  if (level.selection) {
    out.selection = varsel::select_variables(X, y, *level.selection);
    out.predictors = out.selection->chosen;
    out.transforms.assign(out.predictors.size(), gnls::Transform::Identity);
  } else if (!level.predictors.empty()) {
    out.predictors = level.predictors;
    out.transforms = level.transforms;
    if (out.transforms.empty())
      out.transforms.assign(out.predictors.size(), gnls::Transform::Identity);
  } else {
    out.predictors = X.names;
    out.transforms.assign(out.predictors.size(), gnls::Transform::Identity);
  }
  return out;
}

struct TrainArtifacts {
  allometry::AllometricModelSpec spec;
  allometry::PlotAGBDResult plot_result;
  data::PredictorTable plot_predictors;
  gnls::ModelFit proxy_fit;
  std::optional<varsel::SelectionResult> proxy_selection;
  data::SubcellTable subcells_train;   // segments passing the quality filter
  data::SegmentTable segments_train;   // filtered
  propagation::AveragingMatrix averaging;
  Eigen::VectorXd proxy_response;
  gnls::ModelFit i2_fit;
  std::optional<varsel::SelectionResult> i2_selection;
};

TrainArtifacts run_training(const PipelineConfig& config, const Ingested& in,
                            const fs::path& out_dir) {
  TrainArtifacts art;

  stage("allometry", [&] {
    art.spec = allometry::load_spec_json(resolve(config.base_dir, config.allometry));
    art.plot_result = allometry::plot_agbd(art.spec, in.trees, in.plots);

    csv::Table table;
    table.header = {"plot_id", "agbd_mg_ha", "se_mg_ha"};
    for (std::size_t i = 0; i < in.plots.size(); ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      table.rows.push_back({in.plots[i].plot_id,
                            csv::format_double(art.plot_result.agbd.values[idx]),
                            csv::format_double(std::sqrt(art.plot_result.cov(idx, idx)))});
    }
    csv::write_table(table, out_dir / "allometry_plots.csv");
    return 0;
  });

  stage("fit_proxy", [&] {
    art.plot_predictors = align_plot_metrics(in.plot_metrics, in.plots);
    const ResolvedLevel level =
        resolve_level(config.proxy, art.plot_predictors, art.plot_result.agbd.values);
    art.proxy_selection = level.selection;
    art.proxy_fit =
        gnls::fit_gnls(art.plot_predictors, art.plot_result.agbd.values,
                       level.predictors, level.transforms, config.proxy.varfn);
    gnls::save_model_json(art.proxy_fit, out_dir / "proxy_model.json");
    if (art.proxy_selection && config.proxy.selection)
      write_file(out_dir / "selection_proxy.json",
                 varsel::selection_json(*art.proxy_selection, *config.proxy.selection));
    return 0;
  });

  stage("fit_i2", [&] {
    const data::SegmentTable filtered =
        segmenter::quality_filter(in.segments_train, config.filters);
    if (filtered.size() == 0)
      throw Error(ErrorKind::EmptyInput, "no training segments pass the quality filter");

    // Keep only subcells of retained segments.
    std::unordered_map<std::string, bool> retained;
    for (const auto& id : filtered.ids) retained.emplace(id, true);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < in.subcells_train.size(); ++i)
      if (retained.count(in.subcells_train.segment_ids[i])) keep.push_back(i);
    data::SubcellTable subcells;
    subcells.predictors = in.subcells_train.predictors.take_rows(keep);
    for (std::size_t i : keep) {
      subcells.ids.push_back(in.subcells_train.ids[i]);
      subcells.segment_ids.push_back(in.subcells_train.segment_ids[i]);
    }

    art.segments_train = filtered;
    art.subcells_train = std::move(subcells);
    art.averaging = propagation::build_averaging(art.subcells_train, art.segments_train.ids);

    const Eigen::VectorXd subcell_pred =
        gnls::predict(art.proxy_fit.model, art.subcells_train.predictors);
    art.proxy_response = art.averaging.m.transpose() * subcell_pred;

    const ResolvedLevel level =
        resolve_level(config.i2, art.segments_train.predictors, art.proxy_response);
    art.i2_selection = level.selection;
    art.i2_fit = gnls::fit_gnls(art.segments_train.predictors, art.proxy_response,
                                level.predictors, level.transforms, config.i2.varfn);
    gnls::save_model_json(art.i2_fit, out_dir / "i2_model.json");
    if (art.i2_selection && config.i2.selection)
      write_file(out_dir / "selection_i2.json",
                 varsel::selection_json(*art.i2_selection, *config.i2.selection));
    return 0;
  });

  return art;
}

void write_manifest(const PipelineConfig& config, const fs::path& out_dir,
                    const std::vector<std::string>& outputs) {
  json m;
  m["version"] = kVersion;
  m["mode"] = mode_to_string(config.mode);
  m["rng_seed"] = config.rng_seed;
  m["config_hash"] = fnv1a_hex(config.raw_json);
  m["inputs"] = {{"trees", config.trees.string()},
                 {"plots", config.plots.string()},
                 {"plot_metrics", config.plot_metrics.string()},
                 {"subcells_train", config.subcells_train.string()},
                 {"segments_train", config.segments_train.string()},
                 {"segments_target", config.segments_target.string()},
                 {"subcells_target", config.subcells_target.string()},
                 {"photons", config.photons.string()},
                 {"pixels", config.pixels.string()},
                 {"allometry", config.allometry.string()}};
  m["outputs"] = outputs;
  write_file(out_dir / "manifest.json", m.dump(2) + "\n");
}

PipelineResult run_estimate(const PipelineConfig& config, bool with_predict,
                            bool with_estimate) {
  const fs::path out_dir = resolve(config.base_dir, config.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + out_dir.string() + "'");

  Ingested in = ingest_training(config, true, with_predict, false);
  TrainArtifacts art = run_training(config, in, out_dir);

  PipelineResult result;
  result.run_dir = out_dir;
  result.warnings = in.warnings;

  std::vector<std::string> outputs = {"allometry_plots.csv", "proxy_model.json",
                                      "i2_model.json"};

  data::SegmentTable target;
  Eigen::VectorXd predictions;
  if (with_predict) {
    stage("predict", [&] {
      target = segmenter::quality_filter(in.segments_target, config.filters);
      if (target.size() == 0)
        throw Error(ErrorKind::EmptyInput, "no target segments pass the quality filter");
      predictions = gnls::predict(art.i2_fit.model, target.predictors);

      csv::Table table;
      table.header = {"segment_id", "track_id", "agbd_pred"};
      for (std::size_t i = 0; i < target.size(); ++i)
        table.rows.push_back({target.ids[i], target.track_ids[i],
                              csv::format_double(predictions[static_cast<Eigen::Index>(i)])});
      csv::write_table(table, out_dir / "predictions.csv");
      return 0;
    });
    outputs.push_back("predictions.csv");
  }

  if (with_estimate) {
    stage("estimate", [&] {
      propagation::ChainOptions chain_opts;
      chain_opts.dense_cap = config.dense_cov_cap;
      const propagation::ChainInputs inputs{art.plot_result,
                                            art.proxy_fit,
                                            art.plot_predictors,
                                            art.subcells_train.predictors,
                                            art.averaging,
                                            art.i2_fit,
                                            art.segments_train.predictors,
                                            target.predictors};
      const propagation::CovChain chain = propagation::build_chain(inputs, {}, chain_opts);
      const auto tracks = estimators::aggregate_tracks(target.track_ids, predictions);
      estimators::EstimateReport report = estimators::hybrid_estimate(tracks, chain);
      report.decomposition = estimators::decompose(tracks, inputs, chain_opts);

      if (in.subcells_target) {
        // Diagnostics against the proxy model's own predictions at the
        // target segments (RMSD and MD, satellite minus proxy).
        std::unordered_map<std::string, bool> retained;
        for (const auto& id : target.ids) retained.emplace(id, true);
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < in.subcells_target->size(); ++i)
          if (retained.count(in.subcells_target->segment_ids[i])) keep.push_back(i);
        data::SubcellTable cells;
        cells.predictors = in.subcells_target->predictors.take_rows(keep);
        for (std::size_t i : keep) {
          cells.ids.push_back(in.subcells_target->ids[i]);
          cells.segment_ids.push_back(in.subcells_target->segment_ids[i]);
        }
        const propagation::AveragingMatrix m_target =
            propagation::build_averaging(cells, target.ids);
        const Eigen::VectorXd proxy_at_target =
            m_target.m.transpose() * gnls::predict(art.proxy_fit.model, cells.predictors);
        report.diagnostics = estimators::rmsd_md(predictions, proxy_at_target);
      }

      if (chain.jitter_used)
        result.warnings.push_back("information matrix was jittered during the chain build");

      write_file(out_dir / "chain_report.json", propagation::chain_report_json(chain));
      write_file(out_dir / "report.json", estimators::report_json(report));
      write_file(out_dir / "report.txt", estimators::render_report_text(report));
      result.report = report;
      return 0;
    });
    outputs.insert(outputs.end(), {"chain_report.json", "report.json", "report.txt"});
  }

  write_manifest(config, out_dir, outputs);
  return result;
}

PipelineResult run_reference(const PipelineConfig& config) {
  const fs::path out_dir = resolve(config.base_dir, config.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + out_dir.string() + "'");

  Ingested in = ingest_training(config, false, false, true);
  TrainArtifacts art;

  PipelineResult result;
  result.run_dir = out_dir;
  result.warnings = in.warnings;

  stage("allometry", [&] {
    art.spec = allometry::load_spec_json(resolve(config.base_dir, config.allometry));
    art.plot_result = allometry::plot_agbd(art.spec, in.trees, in.plots);
    return 0;
  });

  stage("reference", [&] {
    art.plot_predictors = align_plot_metrics(in.plot_metrics, in.plots);
    const ResolvedLevel level =
        resolve_level(config.proxy, art.plot_predictors, art.plot_result.agbd.values);
    const gnls::ModelFit ref_fit =
        gnls::fit_gnls(art.plot_predictors, art.plot_result.agbd.values,
                       level.predictors, level.transforms, config.proxy.varfn);
    gnls::save_model_json(ref_fit, out_dir / "reference_model.json");

    // Parameter covariance with the allometric response covariance folded in.
    const Eigen::MatrixXd jac = gnls::mean_jacobian(ref_fit.model, art.plot_predictors);
    Eigen::VectorXd var(ref_fit.fitted.size());
    for (Eigen::Index i = 0; i < var.size(); ++i)
      var[i] = std::max(1e-300, ref_fit.varfn.variance_at(ref_fit.fitted[i]));
    bool jitter = false;
    const Eigen::MatrixXd c_delta = propagation::param_cov_total_factor(
        jac, var, art.plot_result.cov_factor, &jitter);

    estimators::EstimateReport report =
        estimators::hmb_reference(ref_fit, in.pixels->predictors, c_delta);
    if (jitter)
      result.warnings.push_back("information matrix was jittered in the reference fit");

    write_file(out_dir / "report.json", estimators::report_json(report));
    write_file(out_dir / "report.txt",
               estimators::render_report_text(report, "Reference HMB"));
    result.report = report;
    return 0;
  });

  write_manifest(config, out_dir, {"reference_model.json", "report.json", "report.txt"});
  return result;
}

PipelineResult run_ingest_only(const PipelineConfig& config) {
  const fs::path out_dir = resolve(config.base_dir, config.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + out_dir.string() + "'");

  PipelineResult result;
  result.run_dir = out_dir;

  stage("ingest", [&] {
    require_input(config, config.trees, "trees");
    require_input(config, config.plots, "plots");
    data::LoadOptions opts;
    opts.strict_radii = config.strict_radii;
    data::ValidationWarnings warn;
    const auto trees = csv::load_trees(resolve(config.base_dir, config.trees));
    const auto plots = csv::load_plots(resolve(config.base_dir, config.plots), opts, &warn);
    result.warnings = warn.messages;
    const data::LinkReport link = data::link_report(trees, plots);

    json report;
    report["n_trees"] = link.n_trees;
    report["n_plots"] = link.n_plots;
    report["orphan_tree_ids"] = link.orphan_tree_ids;
    report["empty_plot_ids"] = link.empty_plot_ids;
    write_file(out_dir / "ingest_report.json", report.dump(2) + "\n");

    if (!link.orphan_tree_ids.empty())
      throw Error(ErrorKind::OrphanTree,
                  "tree '" + link.orphan_tree_ids.front() + "' references a missing plot");
    return 0;
  });
  return result;
}

PipelineResult run_segment(const PipelineConfig& config) {
  const fs::path out_dir = resolve(config.base_dir, config.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + out_dir.string() + "'");

  PipelineResult result;
  result.run_dir = out_dir;

  stage("segment", [&] {
    require_input(config, config.photons, "photons");
    auto photons = segmenter::load_photons(resolve(config.base_dir, config.photons));
    const segmenter::BuildResult built =
        segmenter::build_segments(std::move(photons), config.segment_build);
    const data::SegmentTable filtered =
        segmenter::quality_filter(built.segments, config.filters);

    // Keep only subcells of segments that survive the quality filter.
    std::unordered_map<std::string, bool> retained;
    for (const auto& id : filtered.ids) retained.emplace(id, true);
    data::SubcellTable cells;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < built.subcells.size(); ++i)
      if (retained.count(built.subcells.segment_ids[i])) keep.push_back(i);
    cells.predictors = built.subcells.predictors.take_rows(keep);
    for (std::size_t i : keep) {
      cells.ids.push_back(built.subcells.ids[i]);
      cells.segment_ids.push_back(built.subcells.segment_ids[i]);
    }

    csv::write_table(csv::to_table(filtered), out_dir / "segments.csv");
    csv::write_table(csv::to_table(cells), out_dir / "subcells.csv");
    result.warnings.push_back("segments built: " + std::to_string(built.segments.size()) +
                              ", retained after filter: " + std::to_string(filtered.size()));
    return 0;
  });
  return result;
}

PipelineResult run_simulate(const PipelineConfig& config) {
  if (!config.world)
    throw Error(ErrorKind::ConfigError, "stage 'simulate': no world configuration");
  const fs::path out_dir = resolve(config.base_dir, config.output_dir);

  PipelineResult result;
  result.run_dir = out_dir;
  stage("simulate", [&] {
    const simulate::World world = simulate::generate_world(*config.world);
    simulate::write_world(world, out_dir);
    return 0;
  });
  return result;
}

PipelineResult run_mc(const PipelineConfig& config) {
  if (!config.world)
    throw Error(ErrorKind::ConfigError, "stage 'mc': no world configuration");
  const fs::path out_dir = resolve(config.base_dir, config.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + out_dir.string() + "'");

  PipelineResult result;
  result.run_dir = out_dir;
  stage("mc", [&] {
    const simulate::World world = simulate::generate_world(*config.world);
    const simulate::MonteCarloResult mc = simulate::run_sampling_mc(
        world, config.mc_replicates, config.mc_mode, config.mc_threads);
    write_file(out_dir / "mc_result.json", simulate::mc_result_json(mc));
    return 0;
  });
  return result;
}

PipelineResult run_report(const PipelineConfig& config) {
  const fs::path out_dir = resolve(config.base_dir, config.output_dir);
  PipelineResult result;
  result.run_dir = out_dir;
  stage("report", [&] {
    const estimators::EstimateReport report =
        estimators::report_from_json(read_file(out_dir / "report.json"));
    write_file(out_dir / "report.txt", estimators::render_report_text(report));
    result.report = report;
    return 0;
  });
  return result;
}

}  // namespace

Mode mode_from_string(const std::string& s) {
  if (s == "ingest") return Mode::Ingest;
  if (s == "segment") return Mode::Segment;
  if (s == "select") return Mode::Select;
  if (s == "fit_train" || s == "fit") return Mode::FitTrain;
  if (s == "predict_target" || s == "predict") return Mode::PredictTarget;
  if (s == "estimate") return Mode::Estimate;
  if (s == "reference_hmb" || s == "reference") return Mode::ReferenceHmb;
  if (s == "simulate") return Mode::Simulate;
  if (s == "mc") return Mode::Mc;
  if (s == "report") return Mode::Report;
  throw Error(ErrorKind::ConfigError, "unknown mode '" + s + "'");
}

std::string mode_to_string(Mode mode) {
  switch (mode) {
    case Mode::Ingest: return "ingest";
    case Mode::Segment: return "segment";
    case Mode::Select: return "select";
    case Mode::FitTrain: return "fit_train";
    case Mode::PredictTarget: return "predict_target";
    case Mode::Estimate: return "estimate";
    case Mode::ReferenceHmb: return "reference_hmb";
    case Mode::Simulate: return "simulate";
    case Mode::Mc: return "mc";
    case Mode::Report: return "report";
  }
  return "estimate";
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

int exit_code_for(const Error& e) {
  if (e.kind() == ErrorKind::IoError) return 4;
  if (is_numerical(e.kind())) return 3;
  return 2;
}

namespace {

LevelConfig level_from_json(const json& j, gnls::VarFnKind default_kind) {
  LevelConfig level;
  level.varfn = default_kind;
  if (j.contains("varfn"))
    level.varfn = gnls::varfn_kind_from_string(j["varfn"].get<std::string>());
  if (j.contains("predictors")) {
    for (const auto& p : j["predictors"]) {
      if (p.is_string()) {
        level.predictors.push_back(p.get<std::string>());
        level.transforms.push_back(gnls::Transform::Identity);
      } else {
        level.predictors.push_back(p.at("name").get<std::string>());
        level.transforms.push_back(
            gnls::transform_from_string(p.value("transform", "identity")));
      }
    }
  }
  if (j.contains("select")) {
    const auto& s = j["select"];
    varsel::AnnealConfig anneal;
    anneal.subset_size = s.value("subset_size", anneal.subset_size);
    anneal.initial_temperature = s.value("initial_temperature", anneal.initial_temperature);
    anneal.cooling_rate = s.value("cooling_rate", anneal.cooling_rate);
    anneal.iterations_per_temperature =
        s.value("iterations_per_temperature", anneal.iterations_per_temperature);
    anneal.min_temperature = s.value("min_temperature", anneal.min_temperature);
    anneal.rng_seed = s.value("seed", anneal.rng_seed);
    level.selection = anneal;
  }
  return level;
}

}  // namespace

PipelineConfig config_from_json_string(const std::string& text,
                                       const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("invalid config JSON: ") + e.what());
  }

  PipelineConfig config;
  config.base_dir = base_dir;
  config.raw_json = text;
  try {
    config.mode = mode_from_string(j.value("mode", std::string("estimate")));
    if (j.contains("inputs")) {
      const auto& in = j["inputs"];
      config.trees = in.value("trees", std::string());
      config.plots = in.value("plots", std::string());
      config.plot_metrics = in.value("plot_metrics", std::string());
      config.subcells_train = in.value("subcells_train", std::string());
      config.segments_train = in.value("segments_train", std::string());
      config.segments_target = in.value("segments_target", std::string());
      config.subcells_target = in.value("subcells_target", std::string());
      config.photons = in.value("photons", std::string());
      config.pixels = in.value("pixels", std::string());
    }
    config.allometry = j.value("allometry", std::string());
    if (j.contains("proxy"))
      config.proxy = level_from_json(j["proxy"], gnls::VarFnKind::ConstantPlusPower);
    else
      config.proxy.varfn = gnls::VarFnKind::ConstantPlusPower;
    if (j.contains("i2"))
      config.i2 = level_from_json(j["i2"], gnls::VarFnKind::Homoscedastic);
    else
      config.i2.varfn = gnls::VarFnKind::Homoscedastic;
    if (j.contains("filters")) {
      config.filters.min_photons = j["filters"].value("min_photons", 100.0);
      config.filters.min_conf = j["filters"].value("min_conf", 0.6);
    }
    if (j.contains("segment_build")) {
      const auto& b = j["segment_build"];
      config.segment_build.segment_length_m =
          b.value("segment_length_m", config.segment_build.segment_length_m);
      config.segment_build.subcell_length_m =
          b.value("subcell_length_m", config.segment_build.subcell_length_m);
      config.segment_build.cover_threshold_m =
          b.value("cover_threshold_m", config.segment_build.cover_threshold_m);
    }
    config.strict_radii = j.value("strict_radii", false);
    config.dense_cov_cap = j.value("dense_cov_cap", config.dense_cov_cap);
    config.output_dir = j.value("output_dir", std::string("out"));
    config.rng_seed = j.value("rng_seed", config.rng_seed);

    if (j.contains("world")) {
      if (j["world"].is_string()) {
        config.world = simulate::load_config_json(resolve(base_dir, j["world"].get<std::string>()));
      } else {
        config.world = simulate::config_from_json_string(j["world"].dump());
      }
    }
    if (j.contains("mc")) {
      const auto& mc = j["mc"];
      config.mc_replicates = mc.value("replicates", config.mc_replicates);
      if (mc.contains("mode"))
        config.mc_mode = simulate::resample_mode_from_string(mc["mode"].get<std::string>());
      config.mc_threads = mc.value("threads", 0);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("invalid config JSON: ") + e.what());
  }
  return config;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  fs::path base = path.parent_path();
  if (base.empty()) base = ".";
  // A world configuration given directly is accepted for simulate/mc runs.
  json probe;
  try {
    probe = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("invalid config JSON: ") + e.what());
  }
  if (!probe.contains("mode") && probe.contains("field")) {
    PipelineConfig config;
    config.base_dir = base;
    config.raw_json = text;
    config.mode = Mode::Simulate;
    config.world = simulate::config_from_json_string(text);
    return config;
  }
  return config_from_json_string(text, base);
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  switch (config.mode) {
    case Mode::Ingest: return run_ingest_only(config);
    case Mode::Segment: return run_segment(config);
    case Mode::Select: {
      if (!config.proxy.selection && !config.i2.selection)
        throw Error(ErrorKind::ConfigError,
                    "stage 'select': no level has selection configured");
      return run_estimate(config, false, false);
    }
    case Mode::FitTrain: return run_estimate(config, false, false);
    case Mode::PredictTarget: return run_estimate(config, true, false);
    case Mode::Estimate: return run_estimate(config, true, true);
    case Mode::ReferenceHmb: return run_reference(config);
    case Mode::Simulate: return run_simulate(config);
    case Mode::Mc: return run_mc(config);
    case Mode::Report: return run_report(config);
  }
  throw Error(ErrorKind::ConfigError, "unhandled mode");
}

}  // namespace hierlid::pipeline
