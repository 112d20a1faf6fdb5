#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "hierlid/types.hpp"

namespace hierlid::gnls {

enum class Transform { Identity, Sqrt };

Transform transform_from_string(const std::string& s);
std::string transform_to_string(Transform t);

/// Squared-linear-predictor regression model:
///   yhat = (b0 + sum_j b_j * t_j(x_j))^2
/// Coefficients are intercept-first; transforms are recorded per predictor
/// so prediction is reproducible from the serialized model alone.
struct QuadraticModel {
  Eigen::VectorXd coefficients;          // length k+1
  std::vector<std::string> predictors;   // length k
  std::vector<Transform> transforms;     // length k

  Eigen::Index k() const { return static_cast<Eigen::Index>(predictors.size()); }
};

void validate_model(const QuadraticModel& model);

enum class VarFnKind { ConstantPlusPower, Homoscedastic };

VarFnKind varfn_kind_from_string(const std::string& s);
std::string varfn_kind_to_string(VarFnKind k);

/// Residual variance function. For constant_plus_power,
///   Var(e) = sigma^2 * (c + yhat^p)^2;
/// for homoscedastic, Var(e) = sigma^2.
struct VarianceFunction {
  VarFnKind kind = VarFnKind::Homoscedastic;
  double sigma = 1.0;
  double c = 0.0;
  double p = 0.0;

  double variance_at(double yhat) const;
};

void validate_varfn(const VarianceFunction& v);

struct ModelFit {
  QuadraticModel model;
  VarianceFunction varfn;
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd naive_cov;  // (J^T Sigma^-1 J)^-1
  int iterations = 0;
  double final_step_norm = 0.0;
  bool converged = false;
  bool jitter_used = false;
};

/// Design matrix after transforms, with a leading column of ones.
/// Throws Error(ColumnMismatch) when a model predictor is absent and
/// Error(InvariantViolation) when sqrt is applied to a negative value.
Eigen::MatrixXd design_matrix(const QuadraticModel& model, const data::PredictorTable& X);

/// Linear predictor b0 + sum b_j t_j(x_j) per row.
Eigen::VectorXd linear_predictor(const QuadraticModel& model, const data::PredictorTable& X);

/// Predictions (b0 + sum b_j t_j(x_j))^2, always >= 0.
Eigen::VectorXd predict(const QuadraticModel& model, const data::PredictorTable& X);

/// Jacobian of the mean function with respect to the coefficients,
/// row i = 2 * linear_predictor_i * design_row_i. Shape n x (k+1).
Eigen::MatrixXd mean_jacobian(const QuadraticModel& model, const data::PredictorTable& X);

struct FitOptions {
  int max_outer = 100;
  int max_inner = 50;
  int max_halvings = 20;
  double tol = 1e-8;
};

/// Generalized nonlinear least squares by the alternating scheme:
/// damped Gauss-Newton for the coefficients under weights fixed from the
/// current variance function, then variance-function parameters by
/// maximizing the Gaussian pseudo-likelihood of the residuals
/// (Nelder-Mead over (log sigma, log c, p), p in [0, 2]). Coefficients are
/// canonicalized so the mean linear predictor over the training rows is
/// non-negative. Non-convergence is reported by flag, not by throwing.
ModelFit fit_gnls(const data::PredictorTable& X, const Eigen::VectorXd& y,
                  const std::vector<std::string>& predictors,
                  const std::vector<Transform>& transforms, VarFnKind kind,
                  const FitOptions& opts = {});

/// Convenience overload: all columns of X, identity transforms.
ModelFit fit_gnls(const data::PredictorTable& X, const Eigen::VectorXd& y,
                  VarFnKind kind, const FitOptions& opts = {});

/// One weighted Gauss-Newton refit of the coefficients with externally fixed
/// observation weights (1/Var); the variance function is not re-estimated.
/// Used by response-perturbation analyses where the weights are conditioned
/// on. Starts from `start` and returns the canonicalized solution.
Eigen::VectorXd refit_beta_fixed_weights(const QuadraticModel& model,
                                         const data::PredictorTable& X,
                                         const Eigen::VectorXd& y,
                                         const Eigen::VectorXd& weights,
                                         const Eigen::VectorXd& start,
                                         const FitOptions& opts = {});

/// model.json round-trip.
ModelFit load_model_json(const std::filesystem::path& path);
void save_model_json(const ModelFit& fit, const std::filesystem::path& path);
std::string model_json_string(const ModelFit& fit);
ModelFit model_from_json_string(const std::string& text);

}  // namespace hierlid::gnls
