#include <doctest.h>

#include <cmath>

#include "hierlid/error.hpp"
#include "hierlid/estimators.hpp"
#include "hierlid/rng.hpp"
#include "support/oracles.hpp"

using namespace hierlid;
using estimators::TrackAggregate;

namespace {

TrackAggregate track(const std::string& id, double sum, std::size_t n) {
  return TrackAggregate{id, sum, n};
}

}  // namespace

TEST_CASE("hybrid mean is the ratio of totals") {
  CHECK(estimators::hybrid_mean({track("a", 10, 1), track("b", 20, 2)}) ==
        doctest::Approx(10.0));
  CHECK(estimators::hybrid_mean({track("a", 12, 4)}) == doctest::Approx(3.0));
  CHECK(estimators::hybrid_mean({track("a", 5, 1), track("b", 5, 1)}) ==
        doctest::Approx(5.0));
}

TEST_CASE("empty track list is rejected") {
  CHECK_THROWS_AS(estimators::hybrid_mean({}), Error);
}

TEST_CASE("design variance hand case: sums 10 and 20 on single-segment tracks") {
  const double v = estimators::design_variance({track("a", 10, 1), track("b", 20, 1)});
  CHECK(v == doctest::Approx(25.0));
}

TEST_CASE("identical per-segment means give zero design variance") {
  const double v = estimators::design_variance({track("a", 10, 2), track("b", 15, 3)});
  CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("one track is insufficient for the design variance") {
  try {
    estimators::design_variance({track("a", 10, 2)});
    FAIL("expected InsufficientClusters");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientClusters);
  }
}

TEST_CASE("design variance equals the independently coded ratio-variance formula") {
  CounterRng rng(97);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(10);
    std::vector<TrackAggregate> tracks;
    std::vector<double> sums, sizes;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t m = 1 + rng.below(12);
      const double s = rng.uniform(0.0, 50.0) * static_cast<double>(m);
      tracks.push_back(track("t" + std::to_string(i), s, m));
      sums.push_back(s);
      sizes.push_back(static_cast<double>(m));
    }
    const double lib = estimators::design_variance(tracks);
    const double oracle = oracles::ratio_cluster_variance(sums, sizes);
    CHECK(lib == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("design variance is unbiased under with-replacement track sampling") {
  // Finite population of 40 possible tracks with equal sizes; resample 6
  // tracks with replacement and compare mean estimated variance with the
  // empirical variance of the mean. 20000 replicates keep the check tight.
  CounterRng rng(101);
  const std::size_t pop = 40, picks = 6, reps = 20000;
  std::vector<double> pop_means(pop);
  for (auto& m : pop_means) m = rng.uniform(20.0, 110.0);

  double sum_mu = 0.0, sum_mu2 = 0.0, sum_v = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    std::vector<TrackAggregate> tracks;
    for (std::size_t i = 0; i < picks; ++i) {
      const double mean = pop_means[rng.below(pop)];
      tracks.push_back(track("t" + std::to_string(i), mean * 5.0, 5));
    }
    const double mu = estimators::hybrid_mean(tracks);
    sum_mu += mu;
    sum_mu2 += mu * mu;
    sum_v += estimators::design_variance(tracks);
  }
  const double n = static_cast<double>(reps);
  const double var_mu = (sum_mu2 - sum_mu * sum_mu / n) / (n - 1.0);
  const double mean_v = sum_v / n;
  CHECK(mean_v / var_mu == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("model variance arithmetic") {
  CHECK(estimators::model_variance(0.0, 5) == doctest::Approx(0.0));
  CHECK(estimators::model_variance(100.0, 10) == doctest::Approx(1.0));
  CHECK_THROWS_AS(estimators::model_variance(1.0, 0), Error);
}

TEST_CASE("hybrid estimate adds the variance parts exactly") {
  const std::vector<TrackAggregate> tracks = {track("a", 120, 3), track("b", 80, 2),
                                              track("c", 140, 3)};
  const auto report = estimators::hybrid_estimate(tracks, 32.0);
  CHECK(report.n_tot == 8);
  CHECK(report.var_total == report.var_design + report.var_model);
  CHECK(report.se_total == doctest::Approx(std::sqrt(report.var_total)));
  CHECK(report.rel_se == doctest::Approx(report.se_total / report.mu));
  CHECK(report.var_model == doctest::Approx(0.5));
}

TEST_CASE("zeroed chain reduces to the design-only estimate") {
  const std::vector<TrackAggregate> tracks = {track("a", 120, 3), track("b", 80, 2)};
  const auto report = estimators::hybrid_estimate(tracks, 0.0);
  CHECK(report.var_model == 0.0);
  CHECK(report.var_total == doctest::Approx(report.var_design));
}

TEST_CASE("report format fixture") {
  CHECK(estimators::format_estimate(65.7, 1.91) == "65.7 ± 1.91 Mg/ha, 2.9%");
  CHECK(estimators::format_estimate(63.9, 0.64) == "63.9 ± 0.64 Mg/ha, 1.0%");
}

TEST_CASE("decomposition fixture renders the published sequence monotone") {
  estimators::EstimateReport report;
  report.mu = 65.7;
  report.var_design = 1.61 * 1.61;
  report.var_total = 1.91 * 1.91;
  report.var_model = report.var_total - report.var_design;
  report.se_total = 1.91;
  report.rel_se = 1.91 / 65.7;
  report.n_track = 74;
  report.n_tot = 5760;
  report.decomposition = {{"Design, I2, proxy AGBD, allometry", 1.91},
                          {"Design, I2, proxy AGBD", 1.87},
                          {"Design, I2 model", 1.81},
                          {"Sample design only", 1.61}};
  for (std::size_t i = 0; i + 1 < report.decomposition.size(); ++i)
    CHECK(report.decomposition[i].se >= report.decomposition[i + 1].se);

  const std::string text = estimators::render_report_text(report);
  CHECK(text.find("Design, I2, proxy AGBD, allometry") != std::string::npos);
  CHECK(text.find("Sample design only") != std::string::npos);
  CHECK(text.find("1.91") != std::string::npos);
  CHECK(text.find("1.61") != std::string::npos);

  // se sqrt(1.61^2 + (1.91^2 - 1.61^2)) = 1.91 reproduces the total.
  CHECK(std::sqrt(report.var_design + report.var_model) == doctest::Approx(1.91));
}

TEST_CASE("report JSON round-trips") {
  estimators::EstimateReport report;
  report.mu = 42.25;
  report.var_design = 2.5;
  report.var_model = 1.25;
  report.var_total = 3.75;
  report.se_total = std::sqrt(3.75);
  report.rel_se = report.se_total / report.mu;
  report.ci_low = report.mu - 1.96 * report.se_total;
  report.ci_high = report.mu + 1.96 * report.se_total;
  report.n_track = 7;
  report.n_tot = 70;
  report.decomposition = {{"full", 1.9}, {"design", 1.5}};
  report.diagnostics = estimators::Diagnostics{3.3, -1.1};

  const std::string text = estimators::report_json(report);
  const auto loaded = estimators::report_from_json(text);
  CHECK(loaded.mu == report.mu);
  CHECK(loaded.var_total == report.var_total);
  CHECK(loaded.n_tot == report.n_tot);
  REQUIRE(loaded.decomposition.size() == 2);
  CHECK(loaded.decomposition[1].se == 1.5);
  REQUIRE(loaded.diagnostics.has_value());
  CHECK(loaded.diagnostics->rmsd == 3.3);
  CHECK(estimators::report_json(loaded) == text);
}

TEST_CASE("hmb reference: constant predictors equal the single-pixel variance") {
  data::PredictorTable pixels;
  pixels.names = {"a", "b"};
  pixels.values = Eigen::MatrixXd::Constant(50, 2, 3.0);

  gnls::ModelFit fit;
  fit.model.coefficients.resize(3);
  fit.model.coefficients << 2.0, 0.5, 0.25;
  fit.model.predictors = {"a", "b"};
  fit.model.transforms = {gnls::Transform::Identity, gnls::Transform::Identity};
  fit.fitted = gnls::predict(fit.model, pixels);
  fit.varfn.sigma = 1.0;

  Eigen::MatrixXd c_delta(3, 3);
  c_delta << 0.02, 0.0, 0.0, 0.0, 0.01, 0.0, 0.0, 0.0, 0.005;
  const auto report = estimators::hmb_reference(fit, pixels, c_delta);

  const Eigen::MatrixXd jac = gnls::mean_jacobian(fit.model, pixels);
  const double single = jac.row(0) * c_delta * jac.row(0).transpose();
  CHECK(report.var_model == doctest::Approx(single));
  CHECK(report.mu == doctest::Approx(fit.fitted[0]));

  const auto zero = estimators::hmb_reference(fit, pixels, Eigen::MatrixXd::Zero(3, 3));
  CHECK(zero.var_model == doctest::Approx(0.0));

  data::PredictorTable empty;
  empty.names = {"a", "b"};
  empty.values = Eigen::MatrixXd(0, 2);
  CHECK_THROWS_AS(estimators::hmb_reference(fit, empty, c_delta), Error);
}

TEST_CASE("rmsd and md fixtures") {
  Eigen::VectorXd a(2), b(2);
  a << 10, 20;
  b << 10, 20;
  auto d = estimators::rmsd_md(a, b);
  CHECK(d.rmsd == doctest::Approx(0.0));
  CHECK(d.md == doctest::Approx(0.0));

  b << 13, 17;
  d = estimators::rmsd_md(a, b);
  CHECK(d.rmsd == doctest::Approx(3.0));
  CHECK(d.md == doctest::Approx(0.0));

  // Constant offset of -3.3 (satellite below proxy).
  Eigen::VectorXd proxy(4), sat(4);
  proxy << 50, 60, 70, 80;
  sat = proxy.array() - 3.3;
  d = estimators::rmsd_md(sat, proxy);
  CHECK(d.md == doctest::Approx(-3.3));
  CHECK(d.rmsd == doctest::Approx(3.3));

  Eigen::VectorXd short_vec(1);
  short_vec << 1.0;
  CHECK_THROWS_AS(estimators::rmsd_md(a, short_vec), Error);
}

TEST_CASE("mean is invariant to track relabeling and AGBD scaling behaves") {
  CounterRng rng(103);
  std::vector<TrackAggregate> tracks;
  for (int i = 0; i < 6; ++i)
    tracks.push_back(track("t" + std::to_string(i), rng.uniform(50.0, 400.0),
                           1 + rng.below(6)));
  const double mu = estimators::hybrid_mean(tracks);
  const double vd = estimators::design_variance(tracks);

  auto relabeled = tracks;
  std::swap(relabeled[0], relabeled[3]);
  for (auto& t : relabeled) t.track_id = "x_" + t.track_id;
  CHECK(estimators::hybrid_mean(relabeled) == doctest::Approx(mu));
  CHECK(estimators::design_variance(relabeled) == doctest::Approx(vd));

  auto scaled = tracks;
  for (auto& t : scaled) t.agbd_sum *= 3.0;
  const auto base_report = estimators::hybrid_estimate(tracks, 8.0);
  const auto scaled_report = estimators::hybrid_estimate(scaled, 9.0 * 8.0);
  CHECK(scaled_report.mu == doctest::Approx(3.0 * base_report.mu));
  CHECK(scaled_report.var_design == doctest::Approx(9.0 * base_report.var_design));
  CHECK(scaled_report.var_model == doctest::Approx(9.0 * base_report.var_model));
  CHECK(scaled_report.rel_se == doctest::Approx(base_report.rel_se));
}
