#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "hierlid/propagation.hpp"
#include "hierlid/types.hpp"

namespace hierlid::estimators {

/// Per-track totals of predicted AGBD; the cluster unit of the design.
struct TrackAggregate {
  std::string track_id;
  double agbd_sum = 0.0;  // Mg/ha summed over the track's segments
  std::size_t n_seg = 0;
};

/// Group segment predictions by track, preserving first-appearance order.
std::vector<TrackAggregate> aggregate_tracks(const std::vector<std::string>& track_ids,
                                             const Eigen::VectorXd& predictions);

/// Ratio-of-cluster-totals mean: sum of track sums over total segment count.
double hybrid_mean(const std::vector<TrackAggregate>& tracks);

/// Design-based variance of the mean under with-replacement cluster
/// sampling:
///   V_D = (1/nbar^2) * sum_i (sum_i - mu * n_i)^2 / (n (n - 1)).
/// Requires at least two tracks.
double design_variance(const std::vector<TrackAggregate>& tracks);

/// Model-based variance of the mean: quad_form / n_tot^2 where quad_form is
/// 1^T C_I2 1 over the target segments.
double model_variance(double c_i2_quadform, std::size_t n_tot);

struct Diagnostics {
  double rmsd = 0.0;
  double md = 0.0;
};

struct DecompositionRow {
  std::string label;
  double se = 0.0;
};

struct EstimateReport {
  double mu = 0.0;
  double var_design = 0.0;
  double var_model = 0.0;
  double var_total = 0.0;
  double se_total = 0.0;
  double rel_se = 0.0;  // se_total / mu, zero when mu is zero
  double ci_low = 0.0;  // normal-theory 95% interval
  double ci_high = 0.0;
  std::size_t n_track = 0;
  std::size_t n_tot = 0;
  std::vector<DecompositionRow> decomposition;
  std::optional<Diagnostics> diagnostics;
};

/// Combine the design and model variances into the full report (without the
/// component decomposition, which needs chain rebuilds).
EstimateReport hybrid_estimate(const std::vector<TrackAggregate>& tracks,
                               const propagation::CovChain& chain);

/// Variant taking the model quadratic form directly.
EstimateReport hybrid_estimate(const std::vector<TrackAggregate>& tracks,
                               double c_i2_quadform);

/// Standard errors for the nested uncertainty configurations, ordered
/// full -> allometry zeroed -> allometry+proxy zeroed -> design only.
/// Monotone non-increasing by PSD additivity of the chain terms.
std::vector<DecompositionRow> decompose(const std::vector<TrackAggregate>& tracks,
                                        const propagation::ChainInputs& inputs,
                                        const propagation::ChainOptions& opts = {});

/// Hierarchical model-based reference estimate over wall-to-wall pixels:
/// the mean predicted AGBD with Var = 1^T J C_delta J^T 1 / n_pix^2.
EstimateReport hmb_reference(const gnls::ModelFit& ref_fit,
                             const data::PredictorTable& pixel_predictors,
                             const Eigen::MatrixXd& c_delta);

/// Root mean square deviation and mean difference, computed as a - b
/// (satellite prediction minus proxy prediction).
Diagnostics rmsd_md(const Eigen::VectorXd& pred_a, const Eigen::VectorXd& pred_b);

/// "65.7 ± 1.91 Mg/ha, 2.9%"
std::string format_estimate(double mu, double se);

/// Human-readable report mirroring the estimate and component tables.
std::string render_report_text(const EstimateReport& report,
                               const std::string& method_label = "Hierarchical hybrid");

/// report.json body.
std::string report_json(const EstimateReport& report);
EstimateReport report_from_json(const std::string& text);

}  // namespace hierlid::estimators
