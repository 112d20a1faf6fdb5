#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hierlid/csv.hpp"
#include "hierlid/error.hpp"
#include "hierlid/gnls.hpp"
#include "hierlid/linalg.hpp"
#include "hierlid/rng.hpp"
#include "support/oracles.hpp"

using namespace hierlid;
using gnls::QuadraticModel;
using gnls::Transform;
using gnls::VarFnKind;

namespace {

data::PredictorTable table(const std::vector<std::string>& names,
                           const Eigen::MatrixXd& values) {
  data::PredictorTable t;
  t.names = names;
  t.values = values;
  return t;
}

QuadraticModel proxy_paper_model() {
  QuadraticModel m;
  m.coefficients.resize(5);
  m.coefficients << 8.52, 0.44, 0.34, -0.0013, -0.0012;
  m.predictors = {"avg_f", "avg_l", "NIR", "SWIR1"};
  m.transforms = std::vector<Transform>(4, Transform::Identity);
  return m;
}

QuadraticModel i2_paper_model() {
  QuadraticModel m;
  m.coefficients.resize(5);
  m.coefficients << 1.90, 1.37, 0.12, 0.25, -0.61;
  m.predictors = {"std", "n_c", "p40", "p80"};
  m.transforms = {Transform::Identity, Transform::Sqrt, Transform::Sqrt,
                  Transform::Sqrt};
  return m;
}

}  // namespace

TEST_CASE("published proxy coefficients reproduce the hand-computed value") {
  Eigen::MatrixXd x(1, 4);
  x << 10.0, 10.0, 0.0, 0.0;
  const auto pred =
      gnls::predict(proxy_paper_model(), table({"avg_f", "avg_l", "NIR", "SWIR1"}, x));
  // (8.52 + 4.4 + 3.4)^2 = 16.32^2
  CHECK(std::abs(pred[0] - 266.3424) < 1e-10);
}

TEST_CASE("published satellite coefficients at the origin give the squared intercept") {
  Eigen::MatrixXd y(1, 4);
  y << 0.0, 0.0, 0.0, 0.0;
  const auto pred =
      gnls::predict(i2_paper_model(), table({"std", "n_c", "p40", "p80"}, y));
  CHECK(std::abs(pred[0] - 3.61) < 1e-10);
}

TEST_CASE("all-zero coefficients predict zero everywhere") {
  QuadraticModel m;
  m.coefficients = Eigen::VectorXd::Zero(3);
  m.predictors = {"a", "b"};
  m.transforms = {Transform::Identity, Transform::Identity};
  Eigen::MatrixXd x(2, 2);
  x << 1.0, 2.0, -3.0, 4.0;
  const auto pred = gnls::predict(m, table({"a", "b"}, x));
  CHECK(pred[0] == 0.0);
  CHECK(pred[1] == 0.0);
}

TEST_CASE("variance function fixture: sigma 0.61, c 6.23, p 0.69 at yhat 0") {
  gnls::VarianceFunction v;
  v.kind = VarFnKind::ConstantPlusPower;
  v.sigma = 0.61;
  v.c = 6.23;
  v.p = 0.69;
  CHECK(std::abs(v.variance_at(0.0) - 0.61 * 0.61 * 6.23 * 6.23) < 1e-10);
}

TEST_CASE("column mismatch is reported") {
  Eigen::MatrixXd x(1, 1);
  x << 1.0;
  CHECK_THROWS_AS(gnls::predict(proxy_paper_model(), table({"bogus"}, x)), Error);
}

TEST_CASE("jacobian row vanishes where the linear predictor is zero") {
  QuadraticModel m;
  m.coefficients.resize(2);
  m.coefficients << -2.0, 1.0;
  m.predictors = {"a"};
  m.transforms = {Transform::Identity};
  Eigen::MatrixXd x(2, 1);
  x << 2.0, 5.0;  // first row: -2 + 2 = 0
  const auto jac = gnls::mean_jacobian(m, table({"a"}, x));
  CHECK(jac.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(jac(1, 0) != 0.0);
}

TEST_CASE("intercept column of the jacobian is twice the linear predictor") {
  CounterRng rng(3);
  QuadraticModel m;
  m.coefficients.resize(3);
  m.coefficients << 1.5, 0.4, -0.2;
  m.predictors = {"a", "b"};
  m.transforms = {Transform::Identity, Transform::Identity};
  Eigen::MatrixXd x(6, 2);
  for (Eigen::Index i = 0; i < 6; ++i) {
    x(i, 0) = rng.uniform(0.0, 10.0);
    x(i, 1) = rng.uniform(0.0, 10.0);
  }
  const auto t = table({"a", "b"}, x);
  const auto jac = gnls::mean_jacobian(m, t);
  const auto lin = gnls::linear_predictor(m, t);
  for (Eigen::Index i = 0; i < 6; ++i)
    CHECK(jac(i, 0) == doctest::Approx(2.0 * lin[i]));
}

TEST_CASE("mean jacobian matches central finite differences") {
  CounterRng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 4;
    Eigen::MatrixXd x(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = rng.uniform(0.1, 20.0);
      x(i, 1) = rng.uniform(0.1, 20.0);
    }
    QuadraticModel m;
    m.coefficients.resize(3);
    m.coefficients << rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0),
        rng.uniform(-1.0, 1.0);
    m.predictors = {"a", "b"};
    m.transforms = {Transform::Identity,
                    trial % 2 == 0 ? Transform::Sqrt : Transform::Identity};
    const auto t = table({"a", "b"}, x);
    const auto jac = gnls::mean_jacobian(m, t);

    for (Eigen::Index i = 0; i < n; ++i) {
      const auto f = [&](const Eigen::VectorXd& beta) {
        QuadraticModel trial_model = m;
        trial_model.coefficients = beta;
        return gnls::predict(trial_model, t)[i];
      };
      const Eigen::VectorXd fd = oracles::central_difference(f, m.coefficients);
      for (Eigen::Index j = 0; j < 3; ++j)
        CHECK(std::abs(jac(i, j) - fd[j]) <= 1e-6 * std::max(1.0, std::abs(fd[j])));
    }
  }
}

TEST_CASE("noiseless data is recovered to 1e-8 after canonicalization") {
  CounterRng rng(29);
  const Eigen::Index n = 60;
  Eigen::MatrixXd x(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = rng.uniform(0.0, 10.0);
  Eigen::VectorXd beta(4);
  beta << 2.0, 0.5, -0.3, 0.8;

  QuadraticModel truth;
  truth.coefficients = beta;
  truth.predictors = {"a", "b", "c"};
  truth.transforms = std::vector<Transform>(3, Transform::Identity);
  const auto t = table({"a", "b", "c"}, x);
  Eigen::VectorXd y = gnls::predict(truth, t);

  const auto fit = gnls::fit_gnls(t, y, truth.predictors, truth.transforms,
                                  VarFnKind::Homoscedastic);
  CHECK(fit.converged);
  CHECK((fit.model.coefficients - beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("negative responses violate the precondition") {
  Eigen::MatrixXd x(4, 1);
  x << 1, 2, 3, 4;
  Eigen::VectorXd y(4);
  y << 1.0, 2.0, -0.5, 3.0;
  CHECK_THROWS_AS(gnls::fit_gnls(table({"a"}, x), y, {"a"}, {Transform::Identity},
                                 VarFnKind::Homoscedastic),
                  Error);
}

TEST_CASE("constant responses give the defined intercept-only fit") {
  Eigen::MatrixXd x(5, 1);
  x << 1, 2, 3, 4, 5;
  Eigen::VectorXd y = Eigen::VectorXd::Constant(5, 9.0);
  const auto fit = gnls::fit_gnls(table({"a"}, x), y, {"a"}, {Transform::Identity},
                                  VarFnKind::Homoscedastic);
  CHECK(fit.converged);
  CHECK(fit.model.coefficients[0] == doctest::Approx(3.0));
  CHECK(fit.model.coefficients[1] == 0.0);
}

TEST_CASE("homoscedastic sigma^2 equals the residual mean square") {
  CounterRng rng(31);
  const Eigen::Index n = 200;
  Eigen::MatrixXd x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(0.0, 10.0);
    x(i, 1) = rng.uniform(0.0, 10.0);
  }
  QuadraticModel truth;
  truth.coefficients.resize(3);
  truth.coefficients << 3.0, 0.6, 0.2;
  truth.predictors = {"a", "b"};
  truth.transforms = std::vector<Transform>(2, Transform::Identity);
  const auto t = table({"a", "b"}, x);
  Eigen::VectorXd y = gnls::predict(truth, t);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = std::max(0.0, y[i] + 3.0 * rng.normal());

  const auto fit = gnls::fit_gnls(t, y, truth.predictors, truth.transforms,
                                  VarFnKind::Homoscedastic);
  const double rms = fit.residuals.squaredNorm() / static_cast<double>(n);
  CHECK(std::abs(fit.varfn.sigma * fit.varfn.sigma - rms) < 1e-10);
}

TEST_CASE("sign symmetry: the canonical fit has a non-negative mean linear predictor") {
  CounterRng rng(37);
  const Eigen::Index n = 80;
  Eigen::MatrixXd x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(0.0, 8.0);
    x(i, 1) = rng.uniform(0.0, 8.0);
  }
  QuadraticModel truth;
  truth.coefficients.resize(3);
  truth.coefficients << -1.0, -0.4, -0.3;  // negative orientation
  truth.predictors = {"a", "b"};
  truth.transforms = std::vector<Transform>(2, Transform::Identity);
  const auto t = table({"a", "b"}, x);
  const Eigen::VectorXd y = gnls::predict(truth, t);

  const auto fit = gnls::fit_gnls(t, y, truth.predictors, truth.transforms,
                                  VarFnKind::Homoscedastic);
  CHECK(gnls::linear_predictor(fit.model, t).mean() >= 0.0);
  // f(beta, x) = f(-beta, x): the canonical fit still reproduces y.
  CHECK((gnls::predict(fit.model, t) - y).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("reweighting fixed point: converged weights reproduce the coefficients") {
  CounterRng rng(41);
  const Eigen::Index n = 300;
  Eigen::MatrixXd x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(1.0, 12.0);
    x(i, 1) = rng.uniform(0.0, 6.0);
  }
  QuadraticModel truth;
  truth.coefficients.resize(3);
  truth.coefficients << 2.0, 0.8, 0.3;
  truth.predictors = {"a", "b"};
  truth.transforms = std::vector<Transform>(2, Transform::Identity);
  const auto t = table({"a", "b"}, x);
  Eigen::VectorXd y = gnls::predict(truth, t);
  for (Eigen::Index i = 0; i < n; ++i)
    y[i] = std::max(0.0, y[i] + 0.4 * (5.0 + std::pow(y[i], 0.5)) * rng.normal());

  const auto fit = gnls::fit_gnls(t, y, truth.predictors, truth.transforms,
                                  VarFnKind::ConstantPlusPower);
  REQUIRE(fit.converged);

  Eigen::VectorXd weights(n);
  for (Eigen::Index i = 0; i < n; ++i)
    weights[i] = 1.0 / fit.varfn.variance_at(fit.fitted[i]);
  const Eigen::VectorXd refit = gnls::refit_beta_fixed_weights(
      fit.model, t, y, weights, fit.model.coefficients);
  CHECK((refit - fit.model.coefficients).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("variance function parameters are recovered on synthetic data") {
  // n = 1000, true sigma 0.5, c 5, p 0.7; tolerance 20% relative.
  CounterRng rng(12345);
  const Eigen::Index n = 1000;
  Eigen::MatrixXd x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(2.0, 12.0);
    x(i, 1) = rng.uniform(0.0, 8.0);
  }
  QuadraticModel truth;
  truth.coefficients.resize(3);
  truth.coefficients << 3.0, 0.7, 0.4;
  truth.predictors = {"a", "b"};
  truth.transforms = std::vector<Transform>(2, Transform::Identity);
  const auto t = table({"a", "b"}, x);
  const Eigen::VectorXd mean = gnls::predict(truth, t);

  const double sigma = 0.5, c = 5.0, p = 0.7;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sd = sigma * (c + std::pow(mean[i], p));
    y[i] = std::max(0.0, mean[i] + sd * rng.normal());
  }

  const auto fit = gnls::fit_gnls(t, y, truth.predictors, truth.transforms,
                                  VarFnKind::ConstantPlusPower);
  CHECK(fit.varfn.sigma == doctest::Approx(sigma).epsilon(0.20));
  CHECK(fit.varfn.c == doctest::Approx(c).epsilon(0.20));
  CHECK(fit.varfn.p == doctest::Approx(p).epsilon(0.20));
}

TEST_CASE("rank-deficient designs raise SingularNormalEquations") {
  Eigen::MatrixXd x(6, 2);
  for (Eigen::Index i = 0; i < 6; ++i) {
    x(i, 0) = static_cast<double>(i);
    x(i, 1) = 2.0 * static_cast<double>(i);  // collinear
  }
  Eigen::VectorXd y(6);
  y << 1, 2, 3, 4, 5, 6;
  try {
    gnls::fit_gnls(table({"a", "b"}, x), y, {"a", "b"},
                   {Transform::Identity, Transform::Identity},
                   VarFnKind::Homoscedastic);
    FAIL("expected SingularNormalEquations");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularNormalEquations);
  }
}

TEST_CASE("naive covariance is symmetric PSD") {
  CounterRng rng(53);
  const Eigen::Index n = 50;
  Eigen::MatrixXd x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(1.0, 9.0);
    x(i, 1) = rng.uniform(1.0, 9.0);
  }
  QuadraticModel truth;
  truth.coefficients.resize(3);
  truth.coefficients << 2.0, 0.5, 0.25;
  truth.predictors = {"a", "b"};
  truth.transforms = std::vector<Transform>(2, Transform::Identity);
  const auto t = table({"a", "b"}, x);
  Eigen::VectorXd y = gnls::predict(truth, t);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = std::max(0.0, y[i] + 2.0 * rng.normal());
  const auto fit = gnls::fit_gnls(t, y, truth.predictors, truth.transforms,
                                  VarFnKind::Homoscedastic);
  CHECK(linalg::is_symmetric_psd(fit.naive_cov));
}

TEST_CASE("model.json round-trips bit-stable") {
  CounterRng rng(61);
  const Eigen::Index n = 40;
  Eigen::MatrixXd x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(1.0, 9.0);
    x(i, 1) = rng.uniform(1.0, 9.0);
  }
  QuadraticModel truth;
  truth.coefficients.resize(3);
  truth.coefficients << 1.0, 0.3, 0.7;
  truth.predictors = {"a", "b"};
  truth.transforms = {Transform::Identity, Transform::Sqrt};
  const auto t = table({"a", "b"}, x);
  Eigen::VectorXd y = gnls::predict(truth, t);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = std::max(0.0, y[i] + 0.5 * rng.normal());
  const auto fit = gnls::fit_gnls(t, y, truth.predictors, truth.transforms,
                                  VarFnKind::ConstantPlusPower);

  const std::string once = gnls::model_json_string(fit);
  const auto loaded = gnls::model_from_json_string(once);
  const std::string twice = gnls::model_json_string(loaded);
  CHECK(once == twice);
  CHECK((loaded.model.coefficients - fit.model.coefficients).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.varfn.sigma == fit.varfn.sigma);
}
