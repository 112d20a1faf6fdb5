#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hierlid/csv.hpp"
#include "hierlid/error.hpp"
#include "hierlid/gnls.hpp"
#include "hierlid/pipeline.hpp"
#include "hierlid/simulate.hpp"

using namespace hierlid;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("hierlid_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_world_fixture(const std::string& name, std::uint64_t seed) {
  auto config = simulate::default_world_config();
  config.field.grid_rows = 36;
  config.field.grid_cols = 36;
  config.trees.n_plots = 60;
  config.tracks.n_tracks = 6;
  config.tracks.n_train_tracks = 5;
  config.rng_seed = seed;
  const auto world = simulate::generate_world(config);
  const fs::path dir = fresh_dir(name);
  simulate::write_world(world, dir);
  return dir;
}

}  // namespace

TEST_CASE("end-to-end smoke: simulate then estimate renders the report") {
  const fs::path dir = write_world_fixture("smoke", 42);
  auto config = pipeline::load_pipeline_config(dir / "pipeline_config.json");
  REQUIRE(config.mode == pipeline::Mode::Estimate);
  const auto result = pipeline::run_pipeline(config);
  REQUIRE(result.report.has_value());
  CHECK(result.report->mu > 0.0);
  CHECK(result.report->var_total ==
        doctest::Approx(result.report->var_design + result.report->var_model));
  REQUIRE(result.report->decomposition.size() == 4);
  for (std::size_t i = 0; i + 1 < 4; ++i)
    CHECK(result.report->decomposition[i].se >=
          result.report->decomposition[i + 1].se - 1e-12);

  for (const char* artifact :
       {"allometry_plots.csv", "proxy_model.json", "i2_model.json", "predictions.csv",
        "chain_report.json", "report.json", "report.txt", "manifest.json"})
    CHECK(fs::exists(result.run_dir / artifact));

  const std::string text = slurp(result.run_dir / "report.txt");
  CHECK(text.find("Mean AGBD estimate") != std::string::npos);
  CHECK(text.find("Design, I2, proxy AGBD, allometry") != std::string::npos);
  CHECK(text.find("Sample design only") != std::string::npos);
  // Diagnostics come from the bundled target subcells.
  CHECK(text.find("RMSD") != std::string::npos);
}

TEST_CASE("missing segments file fails in the ingest stage before any computation") {
  const fs::path dir = write_world_fixture("missing", 43);
  fs::remove(dir / "segments_target.csv");
  auto config = pipeline::load_pipeline_config(dir / "pipeline_config.json");
  try {
    pipeline::run_pipeline(config);
    FAIL("expected a stage-named error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IoError);
    CHECK(std::string(e.what()).find("stage 'ingest'") != std::string::npos);
    CHECK(std::string(e.what()).find("segments_target") != std::string::npos);
  }
  // Nothing was produced.
  CHECK_FALSE(fs::exists(dir / "out" / "report.json"));
}

TEST_CASE("identical seeds give byte-identical report.json") {
  const fs::path dir_a = write_world_fixture("determinism_a", 77);
  const fs::path dir_b = write_world_fixture("determinism_b", 77);
  auto config_a = pipeline::load_pipeline_config(dir_a / "pipeline_config.json");
  auto config_b = pipeline::load_pipeline_config(dir_b / "pipeline_config.json");
  pipeline::run_pipeline(config_a);
  pipeline::run_pipeline(config_b);
  CHECK(slurp(dir_a / "out" / "report.json") == slurp(dir_b / "out" / "report.json"));
  CHECK(slurp(dir_a / "out" / "chain_report.json") ==
        slurp(dir_b / "out" / "chain_report.json"));
}

TEST_CASE("bundled published-model fixtures reproduce the arithmetic examples") {
  const fs::path models = fs::path(HIERLID_DATA_DIR) / "paper_models.json";
  REQUIRE(fs::exists(models));

  std::ifstream in(models);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  // The file holds three fits keyed proxy/i2/reference in model.json format.
  auto extract = [&](const std::string& key) {
    const auto pos = text.find("\"" + key + "\"");
    REQUIRE(pos != std::string::npos);
    const auto open = text.find('{', pos);
    int depth = 0;
    std::size_t end = open;
    for (std::size_t i = open; i < text.size(); ++i) {
      if (text[i] == '{') ++depth;
      if (text[i] == '}') --depth;
      if (depth == 0) {
        end = i;
        break;
      }
    }
    return gnls::model_from_json_string(text.substr(open, end - open + 1));
  };

  const gnls::ModelFit proxy = extract("proxy");
  data::PredictorTable x;
  x.names = {"avg_f", "avg_l", "NIR", "SWIR1"};
  x.values.resize(1, 4);
  x.values << 10.0, 10.0, 0.0, 0.0;
  CHECK(std::abs(gnls::predict(proxy.model, x)[0] - 266.3424) < 1e-10);
  CHECK(std::abs(proxy.varfn.variance_at(0.0) - 0.61 * 0.61 * 6.23 * 6.23) < 1e-10);

  const gnls::ModelFit i2 = extract("i2");
  data::PredictorTable y;
  y.names = {"std", "n_c", "p40", "p80"};
  y.values = Eigen::MatrixXd::Zero(1, 4);
  CHECK(std::abs(gnls::predict(i2.model, y)[0] - 3.61) < 1e-10);
  CHECK(i2.varfn.variance_at(123.0) == doctest::Approx(433.0));

  const gnls::ModelFit ref = extract("reference");
  data::PredictorTable z;
  z.names = {"b10_f", "p99_l", "b40_l", "NIR"};
  z.values = Eigen::MatrixXd::Zero(1, 4);
  CHECK(std::abs(gnls::predict(ref.model, z)[0] - 9.77 * 9.77) < 1e-10);
}

TEST_CASE("reference mode produces an HMB report from pixels") {
  const fs::path dir = write_world_fixture("reference", 91);
  auto config = pipeline::load_pipeline_config(dir / "pipeline_config.json");
  config.mode = pipeline::Mode::ReferenceHmb;
  config.output_dir = "out_ref";
  const auto result = pipeline::run_pipeline(config);
  REQUIRE(result.report.has_value());
  CHECK(result.report->mu > 0.0);
  CHECK(result.report->var_design == 0.0);
  CHECK(result.report->var_model > 0.0);
  CHECK(fs::exists(result.run_dir / "report.txt"));
  const std::string text = slurp(result.run_dir / "report.txt");
  CHECK(text.find("Reference HMB") != std::string::npos);
}

TEST_CASE("report mode re-renders report.txt from report.json") {
  const fs::path dir = write_world_fixture("rerender", 55);
  auto config = pipeline::load_pipeline_config(dir / "pipeline_config.json");
  pipeline::run_pipeline(config);
  const std::string original = slurp(dir / "out" / "report.txt");
  fs::remove(dir / "out" / "report.txt");

  config.mode = pipeline::Mode::Report;
  pipeline::run_pipeline(config);
  CHECK(slurp(dir / "out" / "report.txt") == original);
}

TEST_CASE("exit codes: validation 2, io 4 through the installed binary") {
  const fs::path dir = fresh_dir("cli_codes");

  // Missing config file -> 4.
  {
    const std::string cmd = std::string(HIERLID_TOOL_PATH) + " estimate --config " +
                            (dir / "nope.json").string() + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 4);
  }

  // Invalid tree data -> 2.
  {
    std::ofstream(dir / "trees.csv") << "tree_id,plot_id,dbh_cm,height_m,species\n"
                                        "t1,P1,3,12,pine\n";
    std::ofstream(dir / "plots.csv") << "plot_id,area_ha,x,y\nP1,0.02,0,0\n";
    std::ofstream(dir / "config.json")
        << "{\"mode\":\"ingest\",\"inputs\":{\"trees\":\"trees.csv\","
           "\"plots\":\"plots.csv\"},\"output_dir\":\"out\"}\n";
    const std::string cmd = std::string(HIERLID_TOOL_PATH) + " ingest --config " +
                            (dir / "config.json").string() + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 2);
  }

  // Valid ingest -> 0.
  {
    std::ofstream(dir / "trees.csv") << "tree_id,plot_id,dbh_cm,height_m,species\n"
                                        "t1,P1,15,12,pine\n";
    const std::string cmd = std::string(HIERLID_TOOL_PATH) + " ingest --config " +
                            (dir / "config.json").string() + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(fs::exists(dir / "out" / "ingest_report.json"));
  }
}

TEST_CASE("segment subcommand builds and filters from photons") {
  const fs::path dir = fresh_dir("cli_segment");
  {
    std::ofstream photons(dir / "photons.csv");
    photons << "track_id,along_m,height_m,cls,high_confidence\n";
    for (int i = 0; i < 400; ++i)
      photons << "tr1," << 0.44 * i << "," << 5.0 + (i % 7) << ",canopy,true\n";
  }
  std::ofstream(dir / "config.json")
      << "{\"mode\":\"segment\",\"inputs\":{\"photons\":\"photons.csv\"},"
         "\"output_dir\":\"seg_out\"}\n";
  const std::string cmd = std::string(HIERLID_TOOL_PATH) + " segment --config " +
                          (dir / "config.json").string() + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WEXITSTATUS(status) == 0);
  const auto segments = csv::load_segments(dir / "seg_out" / "segments.csv");
  CHECK(segments.size() == 2);  // 400 photons over ~176 m
  const auto subcells = csv::load_subcells(dir / "seg_out" / "subcells.csv");
  CHECK(subcells.size() == 12);
}
