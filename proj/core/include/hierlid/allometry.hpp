#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "hierlid/types.hpp"

namespace hierlid::allometry {

/// Fitted single-species biomass model: functional form, parameters, their
/// covariance and a log-scale bias correction added before back-transform.
struct SpeciesModel {
  std::string form = "log_linear_dh";
  Eigen::VectorXd params;
  Eigen::MatrixXd cov;
  double bias_log_var = 0.0;
};

/// Species-indicator combination of the three single-species models. The
/// stacked parameter vector is ordered pine, spruce, deciduous and its
/// covariance is block diagonal.
struct AllometricModelSpec {
  SpeciesModel pine;
  SpeciesModel spruce;
  SpeciesModel deciduous;

  const SpeciesModel& for_species(data::Species s) const;
  Eigen::Index total_params() const;
  /// Offset of a species block in the stacked parameter vector.
  Eigen::Index block_offset(data::Species s) const;
  /// Block-diagonal covariance of the stacked parameter vector.
  Eigen::MatrixXd stacked_cov() const;
  /// Spec with the stacked parameter vector replaced (same block layout).
  AllometricModelSpec with_params(const Eigen::VectorXd& stacked) const;
  Eigen::VectorXd stacked_params() const;
};

/// Validates form arity, covariance shape, symmetry and PSD-ness.
void validate_spec(const AllometricModelSpec& spec);

/// Number of parameters expected by a functional form.
/// Throws Error(UnknownForm) for unrecognized identifiers.
Eigen::Index form_arity(const std::string& form);

/// Single-tree AGB in kg under one species model (bias-corrected).
double eval_species_agb(const SpeciesModel& model, double dbh, double height);

/// Gradient of eval_species_agb with respect to the model parameters.
Eigen::VectorXd eval_species_grad(const SpeciesModel& model, double dbh, double height);

/// Combined-model AGB (kg) for one tree; only the tree's species block
/// contributes.
double eval_combined_agb(const AllometricModelSpec& spec, const data::TreeRecord& tree);

/// Jacobian of tree AGBs with respect to the stacked parameter vector.
/// Column i holds the partials of tree i; rows outside the tree's species
/// block are exactly zero. Shape: total_params x n_trees.
Eigen::MatrixXd tree_jacobian(const AllometricModelSpec& spec,
                              const std::vector<data::TreeRecord>& trees);

/// First-order covariance of tree AGBs: J^T C_alpha J. Symmetric PSD.
Eigen::MatrixXd tree_covariance(const AllometricModelSpec& spec,
                                const std::vector<data::TreeRecord>& trees);

struct PlotAGBDResult {
  data::AGBDVector agbd;      // Mg/ha per plot, plot order preserved
  Eigen::MatrixXd cov;        // n_plot x n_plot, Mg^2/ha^2
  Eigen::MatrixXd cov_factor; // F with cov = F F^T (n_plot x total_params)
};

/// Aggregate tree AGB to plot AGBD (kg -> Mg via the 1000 factor folded into
/// the area scaling) and propagate the parameter covariance. Linkage must be
/// valid; empty plots get AGBD 0 with a zero covariance row/column.
PlotAGBDResult plot_agbd(const AllometricModelSpec& spec,
                         const std::vector<data::TreeRecord>& trees,
                         const std::vector<data::FieldPlot>& plots);

/// allometry.json: {"pine": {"form","params","cov","bias_log_var"}, ...}
AllometricModelSpec load_spec_json(const std::filesystem::path& path);
void save_spec_json(const AllometricModelSpec& spec, const std::filesystem::path& path);
std::string spec_json_string(const AllometricModelSpec& spec);
AllometricModelSpec spec_from_json_string(const std::string& text);

}  // namespace hierlid::allometry
