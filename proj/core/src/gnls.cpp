#include "hierlid/gnls.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "hierlid/error.hpp"
#include "hierlid/linalg.hpp"

namespace hierlid::gnls {

namespace {

using nlohmann::json;

constexpr double kVarianceFloor = 1e-300;
constexpr double kSigmaFloor = 1e-150;

}  // namespace

Transform transform_from_string(const std::string& s) {
  if (s == "identity") return Transform::Identity;
  if (s == "sqrt") return Transform::Sqrt;
  throw Error(ErrorKind::ConfigError, "unknown transform '" + s + "'");
}

std::string transform_to_string(Transform t) {
  return t == Transform::Sqrt ? "sqrt" : "identity";
}

VarFnKind varfn_kind_from_string(const std::string& s) {
  if (s == "constant_plus_power") return VarFnKind::ConstantPlusPower;
  if (s == "homoscedastic") return VarFnKind::Homoscedastic;
  throw Error(ErrorKind::ConfigError, "unknown variance function kind '" + s + "'");
}

std::string varfn_kind_to_string(VarFnKind k) {
  return k == VarFnKind::ConstantPlusPower ? "constant_plus_power" : "homoscedastic";
}

double VarianceFunction::variance_at(double yhat) const {
  if (kind == VarFnKind::Homoscedastic) return sigma * sigma;
  const double scale = c + std::pow(std::max(0.0, yhat), p);
  return sigma * sigma * scale * scale;
}

void validate_varfn(const VarianceFunction& v) {
  if (!(v.sigma > 0.0))
    throw Error(ErrorKind::InvariantViolation, "variance function sigma must be > 0");
  if (v.kind == VarFnKind::ConstantPlusPower && v.c < 0.0)
    throw Error(ErrorKind::InvariantViolation, "variance function c must be >= 0");
}

void validate_model(const QuadraticModel& model) {
  if (model.coefficients.size() != model.k() + 1)
    throw Error(ErrorKind::InvariantViolation,
                "coefficient count must equal predictor count + 1");
  if (model.transforms.size() != model.predictors.size())
    throw Error(ErrorKind::InvariantViolation,
                "one transform per predictor is required");
}

Eigen::MatrixXd design_matrix(const QuadraticModel& model, const data::PredictorTable& X) {
  validate_model(model);
  const Eigen::Index n = X.values.rows();
  Eigen::MatrixXd design(n, model.k() + 1);
  design.col(0).setOnes();
  for (Eigen::Index j = 0; j < model.k(); ++j) {
    const Eigen::Index col = X.column(model.predictors[static_cast<std::size_t>(j)]);
    if (model.transforms[static_cast<std::size_t>(j)] == Transform::Sqrt) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double v = X.values(i, col);
        if (v < 0.0)
          throw Error(ErrorKind::InvariantViolation, static_cast<std::size_t>(i),
                      "sqrt transform applied to negative '" +
                          model.predictors[static_cast<std::size_t>(j)] + "'");
        design(i, j + 1) = std::sqrt(v);
      }
    } else {
      design.col(j + 1) = X.values.col(col);
    }
  }
  return design;
}

Eigen::VectorXd linear_predictor(const QuadraticModel& model,
                                 const data::PredictorTable& X) {
  return design_matrix(model, X) * model.coefficients;
}

Eigen::VectorXd predict(const QuadraticModel& model, const data::PredictorTable& X) {
  return linear_predictor(model, X).array().square();
}

Eigen::MatrixXd mean_jacobian(const QuadraticModel& model, const data::PredictorTable& X) {
  const Eigen::MatrixXd design = design_matrix(model, X);
  const Eigen::VectorXd lin = design * model.coefficients;
  return 2.0 * lin.asDiagonal() * design;
}

namespace {

// ---- Nelder-Mead on a small fixed-dimension box ------------------------

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
};

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, const Eigen::VectorXd& steps,
                             int max_iter, double tol) {
  const Eigen::Index dim = start.size();
  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> values;
  simplex.push_back(start);
  values.push_back(f(start));
  for (Eigen::Index i = 0; i < dim; ++i) {
    Eigen::VectorXd v = start;
    v[i] += steps[i];
    simplex.push_back(v);
    values.push_back(f(v));
  }

  auto order = [&] {
    std::vector<std::size_t> idx(simplex.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<Eigen::VectorXd> s2;
    std::vector<double> v2;
    for (std::size_t i : idx) {
      s2.push_back(simplex[i]);
      v2.push_back(values[i]);
    }
    simplex.swap(s2);
    values.swap(v2);
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    order();
    if (std::abs(values.back() - values.front()) <=
        tol * (std::abs(values.front()) + tol))
      break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i + 1 < simplex.size(); ++i) centroid += simplex[i];
    centroid /= static_cast<double>(dim);

    const Eigen::VectorXd& worst = simplex.back();
    Eigen::VectorXd reflected = centroid + (centroid - worst);
    double f_ref = f(reflected);
    if (f_ref < values.front()) {
      Eigen::VectorXd expanded = centroid + 2.0 * (centroid - worst);
      const double f_exp = f(expanded);
      if (f_exp < f_ref) {
        simplex.back() = expanded;
        values.back() = f_exp;
      } else {
        simplex.back() = reflected;
        values.back() = f_ref;
      }
      continue;
    }
    if (f_ref < values[values.size() - 2]) {
      simplex.back() = reflected;
      values.back() = f_ref;
      continue;
    }
    Eigen::VectorXd contracted = centroid + 0.5 * (worst - centroid);
    const double f_con = f(contracted);
    if (f_con < values.back()) {
      simplex.back() = contracted;
      values.back() = f_con;
      continue;
    }
    for (std::size_t i = 1; i < simplex.size(); ++i) {
      simplex[i] = simplex.front() + 0.5 * (simplex[i] - simplex.front());
      values[i] = f(simplex[i]);
    }
  }
  order();
  return NelderMeadResult{simplex.front(), values.front()};
}

// ---- GNLS internals -----------------------------------------------------

Eigen::VectorXd variances_at(const VarianceFunction& varfn, const Eigen::VectorXd& fitted) {
  Eigen::VectorXd out(fitted.size());
  for (Eigen::Index i = 0; i < fitted.size(); ++i)
    out[i] = std::max(kVarianceFloor, varfn.variance_at(fitted[i]));
  return out;
}

double weighted_sse(const Eigen::VectorXd& y, const Eigen::VectorXd& lin,
                    const Eigen::VectorXd& weights) {
  return (weights.array() * (y.array() - lin.array().square()).square()).sum();
}

struct GaussNewtonResult {
  Eigen::VectorXd beta;
  double step_norm = 0.0;
  int iterations = 0;
  bool jitter_used = false;
};

GaussNewtonResult gauss_newton(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& weights, Eigen::VectorXd beta,
                               const FitOptions& opts) {
  GaussNewtonResult result;
  double sse = weighted_sse(y, design * beta, weights);
  double step_norm = 0.0;
  for (int iter = 0; iter < opts.max_inner; ++iter) {
    const Eigen::VectorXd lin = design * beta;
    const Eigen::VectorXd resid = y - lin.array().square().matrix();
    // J = 2 diag(lin) Z; fold the 2 into both sides of the normal equations.
    const Eigen::MatrixXd jac = 2.0 * lin.asDiagonal() * design;
    const Eigen::MatrixXd jtw = jac.transpose() * weights.asDiagonal();
    linalg::SymSolveReport report;
    Eigen::VectorXd delta = linalg::sym_solve(jtw * jac, jtw * resid, &report);
    result.jitter_used = result.jitter_used || report.jitter_used;

    // Step halving on weighted SSE increase.
    double scale = 1.0;
    Eigen::VectorXd candidate = beta + delta;
    double candidate_sse = weighted_sse(y, design * candidate, weights);
    for (int h = 0; h < opts.max_halvings && candidate_sse > sse; ++h) {
      scale *= 0.5;
      candidate = beta + scale * delta;
      candidate_sse = weighted_sse(y, design * candidate, weights);
    }
    if (candidate_sse > sse) break;  // no acceptable step

    step_norm = (scale * delta).cwiseAbs().maxCoeff();
    beta = candidate;
    sse = candidate_sse;
    result.iterations = iter + 1;
    if (step_norm <= 1e-12 * std::max(1.0, beta.cwiseAbs().maxCoeff())) break;
  }
  result.beta = beta;
  result.step_norm = step_norm;
  return result;
}

void canonicalize(Eigen::VectorXd& beta, const Eigen::MatrixXd& design) {
  if ((design * beta).mean() < 0.0) beta = -beta;
}

VarianceFunction estimate_varfn(VarFnKind kind, const Eigen::VectorXd& fitted,
                                const Eigen::VectorXd& resid) {
  VarianceFunction varfn;
  varfn.kind = kind;
  const double n = static_cast<double>(resid.size());
  const double rms = std::sqrt(resid.squaredNorm() / n);
  if (kind == VarFnKind::Homoscedastic) {
    varfn.sigma = std::max(rms, kSigmaFloor);
    varfn.c = 0.0;
    varfn.p = 0.0;
    return varfn;
  }

  // Gaussian pseudo-likelihood over (log sigma, log c, p), p in [0, 2].
  auto nll = [&](const Eigen::VectorXd& params) {
    const double p = params[2];
    if (p < 0.0 || p > 2.0) return std::numeric_limits<double>::infinity();
    VarianceFunction trial;
    trial.kind = VarFnKind::ConstantPlusPower;
    trial.sigma = std::exp(params[0]);
    trial.c = std::exp(params[1]);
    trial.p = p;
    double total = 0.0;
    for (Eigen::Index i = 0; i < resid.size(); ++i) {
      const double var = std::max(kVarianceFloor, trial.variance_at(fitted[i]));
      total += std::log(var) + resid[i] * resid[i] / var;
    }
    return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
  };

  Eigen::VectorXd start(3);
  start << std::log(std::max(rms, kSigmaFloor)), 0.0, 0.5;
  Eigen::VectorXd steps(3);
  steps << 0.4, 0.8, 0.3;
  const NelderMeadResult best = nelder_mead(nll, start, steps, 400, 1e-12);
  varfn.sigma = std::exp(best.x[0]);
  varfn.c = std::exp(best.x[1]);
  varfn.p = best.x[2];
  return varfn;
}

double rel_change(const Eigen::VectorXd& now, const Eigen::VectorXd& before) {
  return (now - before).cwiseAbs().maxCoeff() /
         std::max(1.0, now.cwiseAbs().maxCoeff());
}

Eigen::VectorXd varfn_params(const VarianceFunction& v) {
  Eigen::VectorXd out(3);
  out << v.sigma, v.c, v.p;
  return out;
}

}  // namespace

ModelFit fit_gnls(const data::PredictorTable& X, const Eigen::VectorXd& y,
                  const std::vector<std::string>& predictors,
                  const std::vector<Transform>& transforms, VarFnKind kind,
                  const FitOptions& opts) {
  if (static_cast<std::size_t>(y.size()) != X.rows())
    throw Error(ErrorKind::LengthMismatch, "response length does not match rows");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!std::isfinite(y[i]) || y[i] < 0.0)
      throw Error(ErrorKind::PreconditionFailed, static_cast<std::size_t>(i),
                  "response must be finite and non-negative");

  ModelFit fit;
  fit.model.predictors = predictors;
  fit.model.transforms = transforms;
  fit.model.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(predictors.size()) + 1);
  validate_model(fit.model);

  const Eigen::Index n = y.size();
  const Eigen::Index n_coef = fit.model.coefficients.size();
  if (n <= n_coef)
    throw Error(ErrorKind::PreconditionFailed,
                "need more rows than coefficients (" + std::to_string(n) + " <= " +
                    std::to_string(n_coef) + ")");

  const Eigen::MatrixXd design = design_matrix(fit.model, X);

  // Degenerate response: defined intercept-only behavior instead of failure.
  if (y.maxCoeff() - y.minCoeff() == 0.0) {
    fit.model.coefficients[0] = std::sqrt(y[0]);
    fit.fitted = Eigen::VectorXd::Constant(n, y[0]);
    fit.residuals = Eigen::VectorXd::Zero(n);
    fit.varfn = estimate_varfn(kind, fit.fitted, fit.residuals);
    fit.naive_cov = Eigen::MatrixXd::Zero(n_coef, n_coef);
    fit.converged = true;
    return fit;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < n_coef)
    throw Error(ErrorKind::SingularNormalEquations,
                "design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                    " of " + std::to_string(n_coef) + ")");

  // Initialize with OLS of sqrt(y); exact for noiseless data.
  Eigen::VectorXd beta = qr.solve(y.array().sqrt().matrix());
  canonicalize(beta, design);

  VarianceFunction varfn;
  varfn.kind = kind;
  varfn.sigma = 1.0;
  varfn.c = kind == VarFnKind::ConstantPlusPower ? 1.0 : 0.0;
  varfn.p = 0.0;  // first pass runs unweighted

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    const Eigen::VectorXd fitted_before = (design * beta).array().square();
    const Eigen::VectorXd weights = variances_at(varfn, fitted_before).cwiseInverse();

    const GaussNewtonResult gn = gauss_newton(design, y, weights, beta, opts);
    fit.jitter_used = fit.jitter_used || gn.jitter_used;
    const double beta_change = rel_change(gn.beta, beta);
    beta = gn.beta;
    fit.final_step_norm = gn.step_norm;

    const Eigen::VectorXd fitted = (design * beta).array().square();
    const Eigen::VectorXd resid = y - fitted;
    const VarianceFunction varfn_new = estimate_varfn(kind, fitted, resid);
    const double varfn_change = rel_change(varfn_params(varfn_new), varfn_params(varfn));
    varfn = varfn_new;
    fit.iterations = outer + 1;

    if (beta_change < opts.tol && varfn_change < opts.tol) {
      fit.converged = true;
      break;
    }
  }

  canonicalize(beta, design);
  fit.model.coefficients = beta;
  fit.fitted = (design * beta).array().square();
  fit.residuals = y - fit.fitted;
  fit.varfn = varfn;
  validate_varfn(fit.varfn);

  const Eigen::MatrixXd jac = 2.0 * (design * beta).asDiagonal() * design;
  const Eigen::VectorXd sigma_inv = variances_at(varfn, fit.fitted).cwiseInverse();
  linalg::SymSolveReport report;
  fit.naive_cov = linalg::sym_inverse(jac.transpose() * sigma_inv.asDiagonal() * jac,
                                      &report);
  fit.jitter_used = fit.jitter_used || report.jitter_used;
  return fit;
}

ModelFit fit_gnls(const data::PredictorTable& X, const Eigen::VectorXd& y,
                  VarFnKind kind, const FitOptions& opts) {
  return fit_gnls(X, y, X.names,
                  std::vector<Transform>(X.names.size(), Transform::Identity), kind,
                  opts);
}

Eigen::VectorXd refit_beta_fixed_weights(const QuadraticModel& model,
                                         const data::PredictorTable& X,
                                         const Eigen::VectorXd& y,
                                         const Eigen::VectorXd& weights,
                                         const Eigen::VectorXd& start,
                                         const FitOptions& opts) {
  const Eigen::MatrixXd design = design_matrix(model, X);
  if (weights.size() != y.size() || start.size() != design.cols())
    throw Error(ErrorKind::DimensionMismatch, "refit shapes are inconsistent");
  FitOptions inner = opts;
  inner.max_inner = std::max(opts.max_inner, 100);
  Eigen::VectorXd beta = gauss_newton(design, y, weights, start, inner).beta;
  canonicalize(beta, design);
  return beta;
}

// ---- Serialization -------------------------------------------------------

namespace {

json fit_to_json(const ModelFit& fit) {
  json j;
  j["coefficients"] = std::vector<double>(
      fit.model.coefficients.data(),
      fit.model.coefficients.data() + fit.model.coefficients.size());
  j["predictors"] = fit.model.predictors;
  std::vector<std::string> transforms;
  for (Transform t : fit.model.transforms) transforms.push_back(transform_to_string(t));
  j["transforms"] = transforms;
  j["varfn"] = {{"kind", varfn_kind_to_string(fit.varfn.kind)},
                {"sigma", fit.varfn.sigma},
                {"c", fit.varfn.c},
                {"p", fit.varfn.p}};
  json cov = json::array();
  for (Eigen::Index r = 0; r < fit.naive_cov.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < fit.naive_cov.cols(); ++c)
      row.push_back(fit.naive_cov(r, c));
    cov.push_back(std::move(row));
  }
  j["naive_cov"] = std::move(cov);
  j["convergence"] = {{"iterations", fit.iterations},
                      {"final_step_norm", fit.final_step_norm},
                      {"converged", fit.converged},
                      {"jitter_used", fit.jitter_used}};
  return j;
}

ModelFit fit_from_json(const json& j) {
  ModelFit fit;
  const auto& coefs = j.at("coefficients");
  fit.model.coefficients.resize(static_cast<Eigen::Index>(coefs.size()));
  for (std::size_t i = 0; i < coefs.size(); ++i)
    fit.model.coefficients[static_cast<Eigen::Index>(i)] = coefs[i].get<double>();
  fit.model.predictors = j.at("predictors").get<std::vector<std::string>>();
  for (const auto& t : j.at("transforms"))
    fit.model.transforms.push_back(transform_from_string(t.get<std::string>()));
  validate_model(fit.model);

  const auto& v = j.at("varfn");
  fit.varfn.kind = varfn_kind_from_string(v.at("kind").get<std::string>());
  fit.varfn.sigma = v.at("sigma").get<double>();
  fit.varfn.c = v.at("c").get<double>();
  fit.varfn.p = v.at("p").get<double>();
  validate_varfn(fit.varfn);

  const auto& cov = j.at("naive_cov");
  fit.naive_cov.resize(static_cast<Eigen::Index>(cov.size()),
                       static_cast<Eigen::Index>(cov.size()));
  for (std::size_t r = 0; r < cov.size(); ++r)
    for (std::size_t c = 0; c < cov[r].size(); ++c)
      fit.naive_cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          cov[r][c].get<double>();

  if (j.contains("convergence")) {
    const auto& conv = j.at("convergence");
    fit.iterations = conv.value("iterations", 0);
    fit.final_step_norm = conv.value("final_step_norm", 0.0);
    fit.converged = conv.value("converged", false);
    fit.jitter_used = conv.value("jitter_used", false);
  }
  return fit;
}

}  // namespace

std::string model_json_string(const ModelFit& fit) { return fit_to_json(fit).dump(2) + "\n"; }

ModelFit model_from_json_string(const std::string& text) {
  try {
    return fit_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("invalid model JSON: ") + e.what());
  }
}

ModelFit load_model_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json_string(buf.str());
}

void save_model_json(const ModelFit& fit, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path.string() + "'");
  out << model_json_string(fit);
}

}  // namespace hierlid::gnls
