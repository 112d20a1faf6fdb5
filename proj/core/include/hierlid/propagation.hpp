#pragma once

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <optional>
#include <string>
#include <vector>

#include "hierlid/allometry.hpp"
#include "hierlid/gnls.hpp"
#include "hierlid/types.hpp"

namespace hierlid::propagation {

/// Subcell-to-segment averaging operator M (n_subcell x n_segment) with
/// entries 1/6: segment predictions are M^T * subcell predictions.
struct AveragingMatrix {
  Eigen::SparseMatrix<double> m;
  std::vector<std::string> segment_ids;  // column order

  Eigen::Index n_subcells() const { return m.rows(); }
  Eigen::Index n_segments() const { return m.cols(); }
};

/// Build M from subcell membership against an explicit segment order. Every
/// segment must own exactly 6 subcells and every subcell must reference a
/// listed segment.
AveragingMatrix build_averaging(const data::SubcellTable& subcells,
                                const std::vector<std::string>& segment_ids);

/// Prediction covariance held in factored form: C = factor * factor^T.
/// The dense matrix is materialized only when the dimension is at most the
/// configured cap; the estimator itself needs only quadratic forms.
struct PredictionCov {
  Eigen::MatrixXd factor;                // n x r
  std::optional<Eigen::MatrixXd> dense;  // n x n when materialized

  Eigen::Index n() const { return factor.rows(); }
  /// 1^T C 1 = ||factor^T 1||^2.
  double quad_form_total() const;
  static PredictionCov zero(Eigen::Index n);
};

struct ChainOptions {
  /// Dense prediction covariances are materialized only up to this size.
  Eigen::Index dense_cap = 20000;
};

/// Parameter covariance under the law of total variance:
///   C = A + A J^T S^-1 C_resp S^-1 J A,  A = (J^T S^-1 J)^-1
/// with S the diagonal residual covariance (passed as a variance vector).
/// `jitter_used`, when given, reports a Tikhonov fallback in the solve.
Eigen::MatrixXd param_cov_total(const Eigen::MatrixXd& mean_jac,
                                const Eigen::VectorXd& residual_var,
                                const Eigen::MatrixXd& response_cov,
                                bool* jitter_used = nullptr);

/// Same with the response covariance supplied as a factor F (C_resp = FF^T).
Eigen::MatrixXd param_cov_total_factor(const Eigen::MatrixXd& mean_jac,
                                       const Eigen::VectorXd& residual_var,
                                       const Eigen::MatrixXd& response_factor,
                                       bool* jitter_used = nullptr);

/// Covariance of segment-level proxy predictions:
///   C_proxy = (M^T J_sub) C_beta (M^T J_sub)^T.
PredictionCov proxy_prediction_cov(const gnls::ModelFit& fit,
                                   const data::PredictorTable& subcell_predictors,
                                   const AveragingMatrix& averaging,
                                   const Eigen::MatrixXd& c_beta,
                                   const ChainOptions& opts = {});

/// Covariance of target-segment predictions: C = J_target C_gamma J_target^T.
PredictionCov target_prediction_cov(const gnls::ModelFit& fit,
                                    const data::PredictorTable& target_predictors,
                                    const Eigen::MatrixXd& c_gamma,
                                    const ChainOptions& opts = {});

/// Which covariance sources are zeroed for the component decomposition.
struct ZeroFlags {
  bool plot = false;   // drop the allometric covariance
  bool proxy = false;  // drop the proxy prediction covariance
};

struct CovChain {
  Eigen::MatrixXd c_plot;
  Eigen::MatrixXd c_beta;
  PredictionCov c_proxy;
  Eigen::MatrixXd c_gamma;
  PredictionCov c_i2;
  ZeroFlags zeroed;
  bool jitter_used = false;
};

/// Everything the chain needs beyond the fits themselves: the training
/// predictor tables the Jacobians are evaluated at.
struct ChainInputs {
  const allometry::PlotAGBDResult& plot_result;
  const gnls::ModelFit& proxy_fit;
  const data::PredictorTable& plot_predictors;     // proxy-model training rows
  const data::PredictorTable& subcell_predictors;  // training subcells
  const AveragingMatrix& averaging;
  const gnls::ModelFit& i2_fit;
  const data::PredictorTable& segment_predictors;  // satellite-model training rows
  const data::PredictorTable& target_predictors;   // prediction target rows
};

/// Assemble the full covariance chain, with the law-of-total-variance step
/// applied at both regression levels and zero_flags honored for the
/// component decomposition.
CovChain build_chain(const ChainInputs& inputs, const ZeroFlags& flags = {},
                     const ChainOptions& opts = {});

/// Per-level quadratic-form summary as a JSON document (chain_report.json).
std::string chain_report_json(const CovChain& chain);

}  // namespace hierlid::propagation
