#include "hierlid/estimators.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "hierlid/error.hpp"

namespace hierlid::estimators {

namespace {

using nlohmann::json;

constexpr double kNormal975 = 1.96;

void check_tracks(const std::vector<TrackAggregate>& tracks) {
  if (tracks.empty()) throw Error(ErrorKind::EmptyInput, "no tracks");
  for (const auto& t : tracks) {
    if (t.n_seg < 1)
      throw Error(ErrorKind::InvariantViolation,
                  "track '" + t.track_id + "' has no segments");
    if (!(t.agbd_sum >= 0.0))
      throw Error(ErrorKind::InvariantViolation,
                  "track '" + t.track_id + "' has negative AGBD sum");
  }
}

}  // namespace

std::vector<TrackAggregate> aggregate_tracks(const std::vector<std::string>& track_ids,
                                             const Eigen::VectorXd& predictions) {
  if (track_ids.size() != static_cast<std::size_t>(predictions.size()))
    throw Error(ErrorKind::LengthMismatch, "track ids vs predictions");
  std::vector<TrackAggregate> tracks;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < track_ids.size(); ++i) {
    auto [it, inserted] = index.try_emplace(track_ids[i], tracks.size());
    if (inserted) tracks.push_back(TrackAggregate{track_ids[i], 0.0, 0});
    auto& agg = tracks[it->second];
    agg.agbd_sum += predictions[static_cast<Eigen::Index>(i)];
    agg.n_seg += 1;
  }
  return tracks;
}

double hybrid_mean(const std::vector<TrackAggregate>& tracks) {
  check_tracks(tracks);
  double sum = 0.0;
  double n = 0.0;
  for (const auto& t : tracks) {
    sum += t.agbd_sum;
    n += static_cast<double>(t.n_seg);
  }
  return sum / n;
}

double design_variance(const std::vector<TrackAggregate>& tracks) {
  check_tracks(tracks);
  const auto n_track = tracks.size();
  if (n_track < 2)
    throw Error(ErrorKind::InsufficientClusters,
                "design variance needs at least two tracks");
  const double mu = hybrid_mean(tracks);
  double nbar = 0.0;
  for (const auto& t : tracks) nbar += static_cast<double>(t.n_seg);
  nbar /= static_cast<double>(n_track);

  double ss = 0.0;
  for (const auto& t : tracks) {
    const double r = t.agbd_sum - mu * static_cast<double>(t.n_seg);
    ss += r * r;
  }
  const double n = static_cast<double>(n_track);
  return ss / (nbar * nbar * n * (n - 1.0));
}

double model_variance(double c_i2_quadform, std::size_t n_tot) {
  if (n_tot < 1) throw Error(ErrorKind::PreconditionFailed, "n_tot must be >= 1");
  if (c_i2_quadform < 0.0)
    throw Error(ErrorKind::PreconditionFailed, "quadratic form must be non-negative");
  const double n = static_cast<double>(n_tot);
  return c_i2_quadform / (n * n);
}

EstimateReport hybrid_estimate(const std::vector<TrackAggregate>& tracks,
                               double c_i2_quadform) {
  check_tracks(tracks);
  EstimateReport report;
  report.n_track = tracks.size();
  for (const auto& t : tracks) report.n_tot += t.n_seg;
  report.mu = hybrid_mean(tracks);
  report.var_design = design_variance(tracks);
  report.var_model = model_variance(c_i2_quadform, report.n_tot);
  report.var_total = report.var_design + report.var_model;
  report.se_total = std::sqrt(report.var_total);
  report.rel_se = report.mu > 0.0 ? report.se_total / report.mu : 0.0;
  report.ci_low = report.mu - kNormal975 * report.se_total;
  report.ci_high = report.mu + kNormal975 * report.se_total;
  return report;
}

EstimateReport hybrid_estimate(const std::vector<TrackAggregate>& tracks,
                               const propagation::CovChain& chain) {
  EstimateReport report = hybrid_estimate(tracks, chain.c_i2.quad_form_total());
  if (static_cast<std::size_t>(chain.c_i2.n()) != report.n_tot)
    throw Error(ErrorKind::DimensionMismatch,
                "chain target dimension does not match segment count");
  return report;
}

std::vector<DecompositionRow> decompose(const std::vector<TrackAggregate>& tracks,
                                        const propagation::ChainInputs& inputs,
                                        const propagation::ChainOptions& opts) {
  check_tracks(tracks);
  std::size_t n_tot = 0;
  for (const auto& t : tracks) n_tot += t.n_seg;
  const double v_design = design_variance(tracks);

  const propagation::ZeroFlags configs[] = {
      {false, false},  // full hierarchy
      {true, false},   // allometry zeroed
      {true, true},    // allometry and proxy zeroed
  };
  const char* labels[] = {
      "Design, I2, proxy AGBD, allometry",
      "Design, I2, proxy AGBD",
      "Design, I2 model",
  };

  std::vector<DecompositionRow> rows;
  for (int i = 0; i < 3; ++i) {
    const propagation::CovChain chain = propagation::build_chain(inputs, configs[i], opts);
    const double v_model = model_variance(chain.c_i2.quad_form_total(), n_tot);
    rows.push_back({labels[i], std::sqrt(v_design + v_model)});
  }
  rows.push_back({"Sample design only", std::sqrt(v_design)});
  return rows;
}

EstimateReport hmb_reference(const gnls::ModelFit& ref_fit,
                             const data::PredictorTable& pixel_predictors,
                             const Eigen::MatrixXd& c_delta) {
  const Eigen::Index n_pix = pixel_predictors.values.rows();
  if (n_pix == 0) throw Error(ErrorKind::EmptyRaster, "no pixels");

  const Eigen::VectorXd pred = gnls::predict(ref_fit.model, pixel_predictors);
  const Eigen::MatrixXd jac = gnls::mean_jacobian(ref_fit.model, pixel_predictors);
  if (c_delta.rows() != jac.cols() || c_delta.cols() != jac.cols())
    throw Error(ErrorKind::DimensionMismatch, "c_delta shape vs coefficient count");

  const Eigen::VectorXd summed = jac.transpose() * Eigen::VectorXd::Ones(n_pix);
  const double n = static_cast<double>(n_pix);
  const double var = (summed.transpose() * c_delta * summed)(0, 0) / (n * n);

  EstimateReport report;
  report.mu = pred.mean();
  report.var_design = 0.0;
  report.var_model = std::max(0.0, var);
  report.var_total = report.var_model;
  report.se_total = std::sqrt(report.var_total);
  report.rel_se = report.mu > 0.0 ? report.se_total / report.mu : 0.0;
  report.ci_low = report.mu - kNormal975 * report.se_total;
  report.ci_high = report.mu + kNormal975 * report.se_total;
  report.n_track = 0;
  report.n_tot = static_cast<std::size_t>(n_pix);
  return report;
}

Diagnostics rmsd_md(const Eigen::VectorXd& pred_a, const Eigen::VectorXd& pred_b) {
  if (pred_a.size() != pred_b.size())
    throw Error(ErrorKind::LengthMismatch, "prediction vectors differ in length");
  if (pred_a.size() == 0) throw Error(ErrorKind::EmptyInput, "empty prediction vectors");
  const Eigen::VectorXd diff = pred_a - pred_b;
  Diagnostics d;
  d.md = diff.mean();
  d.rmsd = std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
  return d;
}

std::string format_estimate(double mu, double se) {
  char buf[96];
  const double rel = mu > 0.0 ? 100.0 * se / mu : 0.0;
  std::snprintf(buf, sizeof buf, "%.1f ± %.2f Mg/ha, %.1f%%", mu, se, rel);
  return buf;
}

std::string render_report_text(const EstimateReport& report,
                               const std::string& method_label) {
  std::ostringstream out;
  char line[160];

  out << "Mean AGBD estimate\n";
  out << "==================\n";
  std::snprintf(line, sizeof line, "%-36s %12s %12s %12s\n", "Method", "AGBD [Mg/ha]",
                "SE [Mg/ha]", "Rel. SE");
  out << line;
  std::snprintf(line, sizeof line, "%-36s %12.1f %12.2f %11.1f%%\n",
                method_label.c_str(), report.mu, report.se_total, 100.0 * report.rel_se);
  out << line;
  std::snprintf(line, sizeof line, "95%% CI: [%.1f, %.1f] Mg/ha\n", report.ci_low,
                report.ci_high);
  out << line;
  std::snprintf(line, sizeof line, "Tracks: %zu, segments: %zu\n", report.n_track,
                report.n_tot);
  out << line;

  if (!report.decomposition.empty()) {
    out << "\nUncertainty components\n";
    out << "======================\n";
    std::snprintf(line, sizeof line, "%-36s %12s %12s\n", "Modeled uncertainties",
                  "SE [Mg/ha]", "Proportion");
    out << line;
    const double se_full = report.decomposition.front().se;
    for (const auto& row : report.decomposition) {
      const double prop = se_full > 0.0 ? 100.0 * row.se / se_full : 0.0;
      std::snprintf(line, sizeof line, "%-36s %12.2f %11.1f%%\n", row.label.c_str(),
                    row.se, prop);
      out << line;
    }
    out << "\nContributions (successive differences)\n";
    for (std::size_t i = 0; i + 1 < report.decomposition.size(); ++i) {
      std::snprintf(line, sizeof line, "%-36s %12.2f\n",
                    report.decomposition[i].label.c_str(),
                    report.decomposition[i].se - report.decomposition[i + 1].se);
      out << line;
    }
  }

  if (report.diagnostics) {
    out << "\nDiagnostics vs proxy predictions\n";
    std::snprintf(line, sizeof line, "RMSD: %.1f Mg/ha, MD: %.1f Mg/ha\n",
                  report.diagnostics->rmsd, report.diagnostics->md);
    out << line;
  }
  return out.str();
}

std::string report_json(const EstimateReport& report) {
  json j;
  j["mu"] = report.mu;
  j["var_design"] = report.var_design;
  j["var_model"] = report.var_model;
  j["var_total"] = report.var_total;
  j["se_total"] = report.se_total;
  j["rel_se"] = report.rel_se;
  j["ci95"] = {report.ci_low, report.ci_high};
  j["n_track"] = report.n_track;
  j["n_tot"] = report.n_tot;
  json rows = json::array();
  for (const auto& row : report.decomposition)
    rows.push_back({{"label", row.label}, {"se", row.se}});
  j["decomposition"] = std::move(rows);
  if (report.diagnostics)
    j["diagnostics"] = {{"rmsd", report.diagnostics->rmsd},
                        {"md", report.diagnostics->md}};
  return j.dump(2) + "\n";
}

EstimateReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("invalid report JSON: ") + e.what());
  }
  EstimateReport report;
  report.mu = j.at("mu").get<double>();
  report.var_design = j.at("var_design").get<double>();
  report.var_model = j.at("var_model").get<double>();
  report.var_total = j.at("var_total").get<double>();
  report.se_total = j.at("se_total").get<double>();
  report.rel_se = j.at("rel_se").get<double>();
  report.ci_low = j.at("ci95")[0].get<double>();
  report.ci_high = j.at("ci95")[1].get<double>();
  report.n_track = j.at("n_track").get<std::size_t>();
  report.n_tot = j.at("n_tot").get<std::size_t>();
  for (const auto& row : j.at("decomposition"))
    report.decomposition.push_back(
        {row.at("label").get<std::string>(), row.at("se").get<double>()});
  if (j.contains("diagnostics")) {
    Diagnostics d;
    d.rmsd = j["diagnostics"].at("rmsd").get<double>();
    d.md = j["diagnostics"].at("md").get<double>();
    report.diagnostics = d;
  }
  return report;
}

}  // namespace hierlid::estimators
