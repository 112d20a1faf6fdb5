// Independent oracles used by the unit and acceptance suites. These stay
// deliberately separate from the library's covariance code paths: every
// covariance claim is checked by forward simulation or finite differences,
// never by re-running the formula under test.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "hierlid/allometry.hpp"
#include "hierlid/gnls.hpp"
#include "hierlid/rng.hpp"
#include "hierlid/simulate.hpp"
#include "hierlid/types.hpp"

namespace hierlid::oracles {

/// Central finite-difference gradient of f at x.
Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double step = 1e-6);

/// Sample covariance (n-1 denominator) of row-wise samples.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& samples);

/// Parameter-perturbation Monte Carlo for the plot AGBD covariance: draws
/// alpha ~ N(alpha_hat, C_alpha), recomputes every plot's AGBD by direct
/// per-tree evaluation and aggregation (no Jacobians, no matrix algebra),
/// and returns the empirical covariance.
Eigen::MatrixXd plot_agbd_mc_cov(const allometry::AllometricModelSpec& spec,
                                 const std::vector<data::TreeRecord>& trees,
                                 const std::vector<data::FieldPlot>& plots,
                                 std::size_t draws, std::uint64_t seed);

/// Response-perturbation refit Monte Carlo for the parameter covariance
/// under the law of total variance: y_r = fitted + e_r + d_r with
/// e_r ~ N(0, diag(residual_var)) and d_r ~ N(0, response_cov), then a
/// beta refit under the fit's converged weights. Returns the empirical
/// covariance of the refit coefficients.
Eigen::MatrixXd refit_beta_mc_cov(const gnls::ModelFit& fit,
                                  const data::PredictorTable& X,
                                  const Eigen::MatrixXd& response_cov,
                                  std::size_t replicates, std::uint64_t seed);

/// End-to-end model-variance Monte Carlo: redraw every stochastic input of
/// the world's training side (allometric parameters, tree lists, predictor
/// noise), refit both models, and predict on a fixed target table. Returns
/// the empirical variance of the mean prediction.
double model_variance_mc(const simulate::World& world,
                         const data::PredictorTable& target_predictors,
                         std::size_t replicates, std::uint64_t seed);

/// Textbook with-replacement ratio-of-cluster-totals variance, coded
/// independently of estimators::design_variance (covariance form).
double ratio_cluster_variance(const std::vector<double>& track_sums,
                              const std::vector<double>& track_sizes);

}  // namespace hierlid::oracles
