// hierlid: hierarchical hybrid AGBD estimation from strip-sampled lidar.
//
// Every subcommand is driven by a JSON configuration file; subcommand flags
// override the matching config fields. Exit codes: 0 success, 2 validation
// error, 3 numerical failure, 4 I/O error.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hierlid/error.hpp"
#include "hierlid/pipeline.hpp"
#include "hierlid/version.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string mode;
  std::string output_dir;

  // segment overrides
  double min_photons = -1.0;
  double min_conf = -1.0;
  double segment_length = -1.0;
  double subcell_length = -1.0;

  // select overrides
  std::string level = "proxy";
  long subset_size = -1;
  long long seed = -1;
  double cooling = -1.0;
  long iterations = -1;

  // mc overrides
  long long replicates = -1;
  std::string mc_mode;
  long threads = -1;
};

hierlid::pipeline::PipelineConfig build_config(const CliOptions& opts) {
  using hierlid::pipeline::Mode;
  hierlid::pipeline::PipelineConfig config =
      hierlid::pipeline::load_pipeline_config(opts.config_path);
  config.mode = hierlid::pipeline::mode_from_string(opts.mode);

  if (!opts.output_dir.empty()) config.output_dir = opts.output_dir;
  if (opts.min_photons >= 0.0) config.filters.min_photons = opts.min_photons;
  if (opts.min_conf >= 0.0) config.filters.min_conf = opts.min_conf;
  if (opts.segment_length > 0.0)
    config.segment_build.segment_length_m = opts.segment_length;
  if (opts.subcell_length > 0.0)
    config.segment_build.subcell_length_m = opts.subcell_length;

  if (config.mode == Mode::Select) {
    hierlid::pipeline::LevelConfig& level =
        opts.level == "i2" ? config.i2 : config.proxy;
    if (!level.selection) level.selection = hierlid::varsel::AnnealConfig{};
    if (opts.subset_size > 0)
      level.selection->subset_size = static_cast<std::size_t>(opts.subset_size);
    if (opts.seed >= 0)
      level.selection->rng_seed = static_cast<std::uint64_t>(opts.seed);
    if (opts.cooling > 0.0) level.selection->cooling_rate = opts.cooling;
    if (opts.iterations > 0)
      level.selection->iterations_per_temperature = static_cast<int>(opts.iterations);
  }

  if (opts.replicates > 0)
    config.mc_replicates = static_cast<std::size_t>(opts.replicates);
  if (!opts.mc_mode.empty())
    config.mc_mode = hierlid::simulate::resample_mode_from_string(opts.mc_mode);
  if (opts.threads > 0) config.mc_threads = static_cast<int>(opts.threads);
  if (opts.seed >= 0 && config.mode != Mode::Select)
    config.rng_seed = static_cast<std::uint64_t>(opts.seed);
  return config;
}

int run(const CliOptions& opts) {
  try {
    const auto config = build_config(opts);
    const auto result = hierlid::pipeline::run_pipeline(config);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    if (result.report) {
      std::cout << hierlid::estimators::format_estimate(result.report->mu,
                                                        result.report->se_total)
                << "\n";
    }
    std::cout << "artifacts: " << result.run_dir.string() << "\n";
    return 0;
  } catch (const hierlid::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hierlid::pipeline::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical hybrid AGBD estimation from strip-sampled lidar"};
  app.set_version_flag("--version", hierlid::kVersion);
  app.require_subcommand(1);

  CliOptions opts;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config_path, "JSON configuration file")
        ->required();
    cmd->add_option("--out", opts.output_dir, "output directory override");
  };

  add_common(app.add_subcommand("ingest", "load and validate the input tables"));

  CLI::App* segment =
      app.add_subcommand("segment", "build 90 m segments and 15 m subcells from photons");
  add_common(segment);
  segment->add_option("--min-photons", opts.min_photons, "quality filter photon count");
  segment->add_option("--min-conf", opts.min_conf, "quality filter confidence fraction");
  segment->add_option("--segment-length", opts.segment_length, "segment length [m]");
  segment->add_option("--subcell-length", opts.subcell_length, "subcell length [m]");

  CLI::App* select = app.add_subcommand("select", "simulated-annealing variable selection");
  add_common(select);
  select->add_option("--level", opts.level, "proxy or i2")
      ->check(CLI::IsMember({"proxy", "i2"}));
  select->add_option("--subset-size", opts.subset_size, "number of predictors to keep");
  select->add_option("--seed", opts.seed, "annealing seed");
  select->add_option("--cooling", opts.cooling, "geometric cooling rate");
  select->add_option("--iters", opts.iterations, "iterations per temperature");

  add_common(app.add_subcommand("fit", "fit the allometry, proxy and satellite models"));
  add_common(app.add_subcommand("predict", "predict AGBD on the target segments"));
  add_common(app.add_subcommand("estimate", "hierarchical hybrid estimate and report"));
  add_common(app.add_subcommand("reference", "hierarchical model-based reference estimate"));
  add_common(app.add_subcommand("simulate", "generate a synthetic world"));

  CLI::App* mc = app.add_subcommand("mc", "Monte Carlo validation runs");
  add_common(mc);
  mc->add_option("--replicates", opts.replicates, "number of replicates");
  mc->add_option("--mc-mode", opts.mc_mode, "tracks_only or full_chain")
      ->check(CLI::IsMember({"tracks_only", "full_chain"}));
  mc->add_option("--threads", opts.threads, "worker threads (0 = hardware)");

  add_common(app.add_subcommand("report", "re-render report.txt from report.json"));

  CLI11_PARSE(app, argc, argv);

  opts.mode = app.get_subcommands().front()->get_name();
  return run(opts);
}
