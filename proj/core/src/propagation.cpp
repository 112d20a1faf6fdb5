#include "hierlid/propagation.hpp"

#include <unordered_map>

#include <nlohmann/json.hpp>

#include "hierlid/error.hpp"
#include "hierlid/linalg.hpp"

namespace hierlid::propagation {

namespace {

using nlohmann::json;

Eigen::VectorXd residual_variances(const gnls::ModelFit& fit) {
  Eigen::VectorXd out(fit.fitted.size());
  for (Eigen::Index i = 0; i < fit.fitted.size(); ++i)
    out[i] = std::max(1e-300, fit.varfn.variance_at(fit.fitted[i]));
  return out;
}

}  // namespace

AveragingMatrix build_averaging(const data::SubcellTable& subcells,
                                const std::vector<std::string>& segment_ids) {
  std::unordered_map<std::string, Eigen::Index> seg_index;
  for (std::size_t j = 0; j < segment_ids.size(); ++j)
    seg_index.emplace(segment_ids[j], static_cast<Eigen::Index>(j));

  AveragingMatrix avg;
  avg.segment_ids = segment_ids;
  avg.m.resize(static_cast<Eigen::Index>(subcells.size()),
               static_cast<Eigen::Index>(segment_ids.size()));

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(subcells.size());
  std::vector<int> per_segment(segment_ids.size(), 0);
  for (std::size_t i = 0; i < subcells.size(); ++i) {
    const auto it = seg_index.find(subcells.segment_ids[i]);
    if (it == seg_index.end())
      throw Error(ErrorKind::InvariantViolation,
                  "subcell '" + subcells.ids[i] + "' references unlisted segment '" +
                      subcells.segment_ids[i] + "'");
    triplets.emplace_back(static_cast<Eigen::Index>(i), it->second, 1.0 / 6.0);
    ++per_segment[static_cast<std::size_t>(it->second)];
  }
  for (std::size_t j = 0; j < per_segment.size(); ++j)
    if (per_segment[j] != 6)
      throw Error(ErrorKind::InvariantViolation,
                  "segment '" + segment_ids[j] + "' owns " +
                      std::to_string(per_segment[j]) + " subcells, expected 6");
  avg.m.setFromTriplets(triplets.begin(), triplets.end());
  return avg;
}

double PredictionCov::quad_form_total() const {
  const Eigen::VectorXd projected = factor.transpose() * Eigen::VectorXd::Ones(factor.rows());
  return projected.squaredNorm();
}

PredictionCov PredictionCov::zero(Eigen::Index n) {
  PredictionCov out;
  out.factor = Eigen::MatrixXd::Zero(n, 0);
  out.dense = Eigen::MatrixXd::Zero(n, n);
  return out;
}

Eigen::MatrixXd param_cov_total_factor(const Eigen::MatrixXd& mean_jac,
                                       const Eigen::VectorXd& residual_var,
                                       const Eigen::MatrixXd& response_factor,
                                       bool* jitter_used) {
  const Eigen::Index n = mean_jac.rows();
  if (residual_var.size() != n)
    throw Error(ErrorKind::DimensionMismatch, "residual variance length vs jacobian rows");
  if (response_factor.size() > 0 && response_factor.rows() != n)
    throw Error(ErrorKind::DimensionMismatch, "response covariance vs jacobian rows");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(residual_var[i] > 0.0))
      throw Error(ErrorKind::PreconditionFailed, "residual variances must be positive");

  const Eigen::VectorXd inv_var = residual_var.cwiseInverse();
  const Eigen::MatrixXd jtw = mean_jac.transpose() * inv_var.asDiagonal();
  linalg::SymSolveReport report;
  const Eigen::MatrixXd naive = linalg::sym_inverse(jtw * mean_jac, &report);
  if (jitter_used) *jitter_used = *jitter_used || report.jitter_used;

  if (response_factor.cols() == 0) return naive;
  // Second term as an outer product so it is PSD by construction.
  const Eigen::MatrixXd half = naive * (jtw * response_factor);
  return linalg::symmetrize(naive + half * half.transpose());
}

Eigen::MatrixXd param_cov_total(const Eigen::MatrixXd& mean_jac,
                                const Eigen::VectorXd& residual_var,
                                const Eigen::MatrixXd& response_cov,
                                bool* jitter_used) {
  if (response_cov.size() == 0 || response_cov.cwiseAbs().maxCoeff() == 0.0)
    return param_cov_total_factor(mean_jac, residual_var,
                                  Eigen::MatrixXd(mean_jac.rows(), 0), jitter_used);
  if (response_cov.rows() != mean_jac.rows() || response_cov.cols() != mean_jac.rows())
    throw Error(ErrorKind::DimensionMismatch, "response covariance shape");
  return param_cov_total_factor(mean_jac, residual_var,
                                linalg::psd_cholesky(response_cov), jitter_used);
}

namespace {

PredictionCov finalize_prediction_cov(Eigen::MatrixXd factor, const ChainOptions& opts) {
  PredictionCov out;
  out.factor = std::move(factor);
  if (out.factor.rows() <= opts.dense_cap)
    out.dense = linalg::symmetrize(out.factor * out.factor.transpose());
  return out;
}

}  // namespace

PredictionCov proxy_prediction_cov(const gnls::ModelFit& fit,
                                   const data::PredictorTable& subcell_predictors,
                                   const AveragingMatrix& averaging,
                                   const Eigen::MatrixXd& c_beta,
                                   const ChainOptions& opts) {
  const Eigen::MatrixXd j_sub = gnls::mean_jacobian(fit.model, subcell_predictors);
  if (averaging.n_subcells() != j_sub.rows())
    throw Error(ErrorKind::DimensionMismatch,
                "averaging matrix rows vs subcell count");
  if (c_beta.rows() != j_sub.cols() || c_beta.cols() != j_sub.cols())
    throw Error(ErrorKind::DimensionMismatch, "c_beta shape vs coefficient count");
  const Eigen::MatrixXd seg_jac = averaging.m.transpose() * j_sub;  // n_seg x K
  return finalize_prediction_cov(seg_jac * linalg::psd_cholesky(c_beta), opts);
}

PredictionCov target_prediction_cov(const gnls::ModelFit& fit,
                                    const data::PredictorTable& target_predictors,
                                    const Eigen::MatrixXd& c_gamma,
                                    const ChainOptions& opts) {
  const Eigen::MatrixXd j_target = gnls::mean_jacobian(fit.model, target_predictors);
  if (c_gamma.rows() != j_target.cols() || c_gamma.cols() != j_target.cols())
    throw Error(ErrorKind::DimensionMismatch, "c_gamma shape vs coefficient count");
  return finalize_prediction_cov(j_target * linalg::psd_cholesky(c_gamma), opts);
}

CovChain build_chain(const ChainInputs& inputs, const ZeroFlags& flags,
                     const ChainOptions& opts) {
  CovChain chain;
  chain.zeroed = flags;

  const Eigen::Index n_plot = inputs.plot_result.cov.rows();
  chain.c_plot = flags.plot ? Eigen::MatrixXd::Zero(n_plot, n_plot).eval()
                            : inputs.plot_result.cov;

  // Proxy level: responses are the plot AGBDs, so C_resp = C_plot.
  const Eigen::MatrixXd j_f =
      gnls::mean_jacobian(inputs.proxy_fit.model, inputs.plot_predictors);
  if (j_f.rows() != n_plot)
    throw Error(ErrorKind::DimensionMismatch, "plot predictors vs plot covariance");
  const Eigen::VectorXd var_f = residual_variances(inputs.proxy_fit);
  if (var_f.size() != j_f.rows())
    throw Error(ErrorKind::DimensionMismatch,
                "proxy fit was not trained on the given plot predictors");
  if (flags.plot)
    chain.c_beta = param_cov_total_factor(j_f, var_f, Eigen::MatrixXd(n_plot, 0),
                                          &chain.jitter_used);
  else
    chain.c_beta = param_cov_total_factor(j_f, var_f, inputs.plot_result.cov_factor,
                                          &chain.jitter_used);

  // Segment-level proxy prediction covariance, averaged over subcells.
  if (flags.proxy)
    chain.c_proxy = PredictionCov::zero(inputs.averaging.n_segments());
  else
    chain.c_proxy = proxy_prediction_cov(inputs.proxy_fit, inputs.subcell_predictors,
                                         inputs.averaging, chain.c_beta, opts);

  // Satellite level: responses are the segment proxy AGBDs, C_resp = C_proxy.
  const Eigen::MatrixXd j_g =
      gnls::mean_jacobian(inputs.i2_fit.model, inputs.segment_predictors);
  const Eigen::VectorXd var_g = residual_variances(inputs.i2_fit);
  if (var_g.size() != j_g.rows())
    throw Error(ErrorKind::DimensionMismatch,
                "satellite fit was not trained on the given segment predictors");
  if (chain.c_proxy.n() != j_g.rows())
    throw Error(ErrorKind::DimensionMismatch,
                "proxy covariance dimension vs satellite training rows");
  chain.c_gamma = param_cov_total_factor(j_g, var_g, chain.c_proxy.factor,
                                         &chain.jitter_used);

  chain.c_i2 = target_prediction_cov(inputs.i2_fit, inputs.target_predictors,
                                     chain.c_gamma, opts);
  return chain;
}

std::string chain_report_json(const CovChain& chain) {
  json j;
  j["zeroed"] = {{"plot", chain.zeroed.plot}, {"proxy", chain.zeroed.proxy}};
  j["jitter_used"] = chain.jitter_used;
  j["c_plot"] = {{"n", chain.c_plot.rows()},
                 {"quad_form_total",
                  (Eigen::VectorXd::Ones(chain.c_plot.rows()).transpose() * chain.c_plot *
                   Eigen::VectorXd::Ones(chain.c_plot.rows()))(0, 0)},
                 {"trace", chain.c_plot.trace()}};
  j["c_beta"] = {{"n", chain.c_beta.rows()}, {"trace", chain.c_beta.trace()}};
  j["c_proxy"] = {{"n", chain.c_proxy.n()},
                  {"rank_bound", chain.c_proxy.factor.cols()},
                  {"quad_form_total", chain.c_proxy.quad_form_total()},
                  {"dense_materialized", chain.c_proxy.dense.has_value()}};
  j["c_gamma"] = {{"n", chain.c_gamma.rows()}, {"trace", chain.c_gamma.trace()}};
  j["c_i2"] = {{"n", chain.c_i2.n()},
               {"rank_bound", chain.c_i2.factor.cols()},
               {"quad_form_total", chain.c_i2.quad_form_total()},
               {"dense_materialized", chain.c_i2.dense.has_value()}};
  return j.dump(2) + "\n";
}

}  // namespace hierlid::propagation
