#include "hierlid/allometry.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "hierlid/error.hpp"
#include "hierlid/linalg.hpp"

namespace hierlid::allometry {

namespace {

using nlohmann::json;

constexpr const char* kLogLinearForm = "log_linear_dh";

void check_form(const std::string& form) {
  if (form != kLogLinearForm)
    throw Error(ErrorKind::UnknownForm, "allometric form '" + form + "'");
}

}  // namespace

Eigen::Index form_arity(const std::string& form) {
  check_form(form);
  return 3;  // intercept, ln(dbh), ln(height)
}

double eval_species_agb(const SpeciesModel& model, double dbh, double height) {
  check_form(model.form);
  const double log_pred = model.params[0] + model.params[1] * std::log(dbh) +
                          model.params[2] * std::log(height);
  return std::exp(log_pred + 0.5 * model.bias_log_var);
}

Eigen::VectorXd eval_species_grad(const SpeciesModel& model, double dbh, double height) {
  check_form(model.form);
  const double agb = eval_species_agb(model, dbh, height);
  Eigen::VectorXd grad(3);
  grad << agb, agb * std::log(dbh), agb * std::log(height);
  return grad;
}

const SpeciesModel& AllometricModelSpec::for_species(data::Species s) const {
  switch (s) {
    case data::Species::Pine: return pine;
    case data::Species::Spruce: return spruce;
    case data::Species::Deciduous: return deciduous;
  }
  return pine;
}

Eigen::Index AllometricModelSpec::total_params() const {
  return pine.params.size() + spruce.params.size() + deciduous.params.size();
}

Eigen::Index AllometricModelSpec::block_offset(data::Species s) const {
  switch (s) {
    case data::Species::Pine: return 0;
    case data::Species::Spruce: return pine.params.size();
    case data::Species::Deciduous: return pine.params.size() + spruce.params.size();
  }
  return 0;
}

Eigen::MatrixXd AllometricModelSpec::stacked_cov() const {
  const Eigen::Index n = total_params();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  const SpeciesModel* models[] = {&pine, &spruce, &deciduous};
  Eigen::Index offset = 0;
  for (const auto* m : models) {
    const Eigen::Index k = m->params.size();
    cov.block(offset, offset, k, k) = m->cov;
    offset += k;
  }
  return cov;
}

Eigen::VectorXd AllometricModelSpec::stacked_params() const {
  Eigen::VectorXd out(total_params());
  out << pine.params, spruce.params, deciduous.params;
  return out;
}

AllometricModelSpec AllometricModelSpec::with_params(const Eigen::VectorXd& stacked) const {
  if (stacked.size() != total_params())
    throw Error(ErrorKind::DimensionMismatch, "stacked parameter length mismatch");
  AllometricModelSpec out = *this;
  Eigen::Index offset = 0;
  for (SpeciesModel* m : {&out.pine, &out.spruce, &out.deciduous}) {
    m->params = stacked.segment(offset, m->params.size());
    offset += m->params.size();
  }
  return out;
}

void validate_spec(const AllometricModelSpec& spec) {
  const SpeciesModel* models[] = {&spec.pine, &spec.spruce, &spec.deciduous};
  const char* names[] = {"pine", "spruce", "deciduous"};
  for (int i = 0; i < 3; ++i) {
    const auto& m = *models[i];
    const Eigen::Index arity = form_arity(m.form);
    if (m.params.size() != arity)
      throw Error(ErrorKind::InvariantViolation,
                  std::string(names[i]) + ": parameter vector length " +
                      std::to_string(m.params.size()) + " does not match form arity " +
                      std::to_string(arity));
    if (m.cov.rows() != arity || m.cov.cols() != arity)
      throw Error(ErrorKind::DimensionMismatch,
                  std::string(names[i]) + ": covariance must be " +
                      std::to_string(arity) + "x" + std::to_string(arity));
    const double scale = std::max(1e-300, m.cov.cwiseAbs().maxCoeff());
    if ((m.cov - m.cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
      throw Error(ErrorKind::InvariantViolation,
                  std::string(names[i]) + ": covariance not symmetric");
    const double min_eig = linalg::min_eigenvalue(m.cov);
    if (min_eig < -1e-8 * scale)
      throw Error(ErrorKind::InvariantViolation,
                  std::string(names[i]) + ": covariance not positive semi-definite");
    if (m.bias_log_var < 0.0)
      throw Error(ErrorKind::InvariantViolation,
                  std::string(names[i]) + ": bias_log_var must be non-negative");
  }
}

double eval_combined_agb(const AllometricModelSpec& spec, const data::TreeRecord& tree) {
  return eval_species_agb(spec.for_species(tree.species), tree.dbh, tree.height);
}

Eigen::MatrixXd tree_jacobian(const AllometricModelSpec& spec,
                              const std::vector<data::TreeRecord>& trees) {
  const Eigen::Index n_params = spec.total_params();
  Eigen::MatrixXd jac =
      Eigen::MatrixXd::Zero(n_params, static_cast<Eigen::Index>(trees.size()));
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const auto& tree = trees[i];
    const auto& model = spec.for_species(tree.species);
    const Eigen::Index offset = spec.block_offset(tree.species);
    jac.col(static_cast<Eigen::Index>(i)).segment(offset, model.params.size()) =
        eval_species_grad(model, tree.dbh, tree.height);
  }
  return jac;
}

Eigen::MatrixXd tree_covariance(const AllometricModelSpec& spec,
                                const std::vector<data::TreeRecord>& trees) {
  const Eigen::MatrixXd jac = tree_jacobian(spec, trees);
  const Eigen::MatrixXd c_alpha = spec.stacked_cov();
  if (c_alpha.rows() != jac.rows())
    throw Error(ErrorKind::DimensionMismatch, "parameter covariance vs jacobian");
  return linalg::symmetrize(jac.transpose() * c_alpha * jac);
}

PlotAGBDResult plot_agbd(const AllometricModelSpec& spec,
                         const std::vector<data::TreeRecord>& trees,
                         const std::vector<data::FieldPlot>& plots) {
  validate_spec(spec);
  data::validate_linkage(trees, plots);

  std::unordered_map<std::string, std::size_t> plot_index;
  for (std::size_t i = 0; i < plots.size(); ++i) {
    if (!(plots[i].area_ha > 0.0))
      throw Error(ErrorKind::ZeroArea, "plot '" + plots[i].plot_id + "'");
    plot_index.emplace(plots[i].plot_id, i);
  }

  const Eigen::Index n_plot = static_cast<Eigen::Index>(plots.size());
  const Eigen::Index n_tree = static_cast<Eigen::Index>(trees.size());

  // W = A^-1 U with the kg -> Mg scaling absorbed; row i aggregates plot i.
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(n_plot, n_tree);
  Eigen::VectorXd agbd = Eigen::VectorXd::Zero(n_plot);
  for (std::size_t j = 0; j < trees.size(); ++j) {
    const std::size_t i = plot_index.at(trees[j].plot_id);
    const double w = 1.0 / (1000.0 * plots[i].area_ha);
    weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w;
    agbd[static_cast<Eigen::Index>(i)] += w * eval_combined_agb(spec, trees[j]);
  }

  const Eigen::MatrixXd jac = tree_jacobian(spec, trees);
  const Eigen::MatrixXd chol = linalg::psd_cholesky(spec.stacked_cov());
  // cov = W J^T C_alpha J W^T = F F^T keeps the result PSD by construction.
  Eigen::MatrixXd factor = weights * jac.transpose() * chol;

  PlotAGBDResult result;
  result.agbd.values = agbd;
  result.agbd.unit_ids.reserve(plots.size());
  for (const auto& p : plots) result.agbd.unit_ids.push_back(p.plot_id);
  data::validate_agbd(result.agbd);
  result.cov = linalg::symmetrize(factor * factor.transpose());
  result.cov_factor = std::move(factor);
  return result;
}

namespace {

SpeciesModel species_from_json(const json& j, const std::string& name) {
  if (!j.contains(name))
    throw Error(ErrorKind::ConfigError, "allometry spec misses species '" + name + "'");
  const json& node = j.at(name);
  SpeciesModel m;
  m.form = node.value("form", std::string(kLogLinearForm));
  const auto& params = node.at("params");
  m.params.resize(static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    m.params[static_cast<Eigen::Index>(i)] = params[i].get<double>();
  const auto& cov = node.at("cov");
  m.cov.resize(static_cast<Eigen::Index>(cov.size()),
               static_cast<Eigen::Index>(cov.size()));
  for (std::size_t r = 0; r < cov.size(); ++r) {
    if (cov[r].size() != cov.size())
      throw Error(ErrorKind::ConfigError, "covariance for '" + name + "' is not square");
    for (std::size_t c = 0; c < cov[r].size(); ++c)
      m.cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          cov[r][c].get<double>();
  }
  m.bias_log_var = node.value("bias_log_var", 0.0);
  return m;
}

json species_to_json(const SpeciesModel& m) {
  json node;
  node["form"] = m.form;
  node["params"] = std::vector<double>(m.params.data(), m.params.data() + m.params.size());
  json cov = json::array();
  for (Eigen::Index r = 0; r < m.cov.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cov.cols(); ++c) row.push_back(m.cov(r, c));
    cov.push_back(std::move(row));
  }
  node["cov"] = std::move(cov);
  node["bias_log_var"] = m.bias_log_var;
  return node;
}

}  // namespace

AllometricModelSpec spec_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError,
                std::string("invalid allometry JSON: ") + e.what());
  }
  AllometricModelSpec spec;
  spec.pine = species_from_json(j, "pine");
  spec.spruce = species_from_json(j, "spruce");
  spec.deciduous = species_from_json(j, "deciduous");
  validate_spec(spec);
  return spec;
}

std::string spec_json_string(const AllometricModelSpec& spec) {
  json j;
  j["pine"] = species_to_json(spec.pine);
  j["spruce"] = species_to_json(spec.spruce);
  j["deciduous"] = species_to_json(spec.deciduous);
  return j.dump(2) + "\n";
}

AllometricModelSpec load_spec_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return spec_from_json_string(buf.str());
}

void save_spec_json(const AllometricModelSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path.string() + "'");
  out << spec_json_string(spec);
}

}  // namespace hierlid::allometry
