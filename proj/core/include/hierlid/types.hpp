#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <string>
#include <vector>

namespace hierlid::data {

enum class Species { Pine, Spruce, Deciduous };

Species species_from_string(const std::string& s);
std::string species_to_string(Species s);

/// One measured tree. dbh in cm, height in m.
struct TreeRecord {
  std::string tree_id;
  std::string plot_id;
  double dbh = 0.0;
  double height = 0.0;
  Species species = Species::Pine;
};

/// A circular field plot. Coordinates are planar metres; area in hectares.
struct FieldPlot {
  std::string plot_id;
  double area_ha = 0.0;
  double x = 0.0;
  double y = 0.0;
};

/// Column-named matrix of real-valued metrics. All rows of a table share the
/// same name set; names are unique and all values finite.
struct PredictorTable {
  std::vector<std::string> names;
  Eigen::MatrixXd values;  // n_rows x names.size()

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return names.size(); }

  /// Index of a named column; throws Error(ColumnMismatch) if absent.
  Eigen::Index column(const std::string& name) const;

  /// New table containing the named columns in the given order.
  PredictorTable select(const std::vector<std::string>& subset) const;

  /// Rows picked by index, order preserved.
  PredictorTable take_rows(const std::vector<std::size_t>& idx) const;
};

/// Validate uniqueness of names and finiteness of values.
void validate_predictors(const PredictorTable& table);

struct SubcellTable {
  std::vector<std::string> ids;
  std::vector<std::string> segment_ids;
  PredictorTable predictors;

  std::size_t size() const { return ids.size(); }
};

struct SegmentQuality {
  double n_photons = 0.0;
  double high_conf_fraction = 0.0;
  bool forested = true;
};

struct SegmentTable {
  std::vector<std::string> ids;
  std::vector<std::string> track_ids;
  std::vector<SegmentQuality> quality;
  PredictorTable predictors;

  std::size_t size() const { return ids.size(); }
  SegmentTable take(const std::vector<std::size_t>& idx) const;
};

/// Per-unit AGBD values (Mg/ha), all finite and non-negative.
struct AGBDVector {
  std::vector<std::string> unit_ids;
  Eigen::VectorXd values;

  std::size_t size() const { return unit_ids.size(); }
};

void validate_agbd(const AGBDVector& v);

struct LoadOptions {
  /// When set, plot areas outside the inventory radius set are errors
  /// instead of warnings.
  bool strict_radii = false;
};

/// Collection invariants beyond per-record ones (id uniqueness, subcell
/// grouping). Warnings collect non-fatal findings such as unusual radii.
struct ValidationWarnings {
  std::vector<std::string> messages;
};

void validate_trees(const std::vector<TreeRecord>& trees);
ValidationWarnings validate_plots(const std::vector<FieldPlot>& plots,
                                  const LoadOptions& opts = {});
void validate_subcells(const SubcellTable& table);
void validate_segments(const SegmentTable& table);

/// Linkage between trees and plots.
struct LinkReport {
  std::size_t n_trees = 0;
  std::size_t n_plots = 0;
  std::vector<std::string> orphan_tree_ids;  // trees pointing at absent plots
  std::vector<std::string> empty_plot_ids;   // plots with no trees (legal)
};

/// Report without failing; orphans are listed, not thrown.
LinkReport link_report(const std::vector<TreeRecord>& trees,
                       const std::vector<FieldPlot>& plots);

/// Validates linkage and throws Error(OrphanTree) when any tree references
/// a missing plot. Empty plots are legal and only flagged.
LinkReport validate_linkage(const std::vector<TreeRecord>& trees,
                            const std::vector<FieldPlot>& plots);

}  // namespace hierlid::data
