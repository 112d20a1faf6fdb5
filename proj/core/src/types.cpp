#include "hierlid/types.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "hierlid/error.hpp"

namespace hierlid::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Inventory plot radii in metres; areas in hectares.
const double kPlotAreas[] = {
    kPi * 5.64 * 5.64 / 1e4,
    kPi * 9.00 * 9.00 / 1e4,
    kPi * 12.62 * 12.62 / 1e4,
};

}  // namespace

Species species_from_string(const std::string& s) {
  if (s == "pine") return Species::Pine;
  if (s == "spruce") return Species::Spruce;
  if (s == "deciduous") return Species::Deciduous;
  throw Error(ErrorKind::TypeError, "unknown species '" + s + "'");
}

std::string species_to_string(Species s) {
  switch (s) {
    case Species::Pine: return "pine";
    case Species::Spruce: return "spruce";
    case Species::Deciduous: return "deciduous";
  }
  return "pine";
}

Eigen::Index PredictorTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return static_cast<Eigen::Index>(j);
  throw Error(ErrorKind::ColumnMismatch, "no predictor column '" + name + "'");
}

PredictorTable PredictorTable::select(const std::vector<std::string>& subset) const {
  PredictorTable out;
  out.names = subset;
  out.values.resize(values.rows(), static_cast<Eigen::Index>(subset.size()));
  for (std::size_t j = 0; j < subset.size(); ++j)
    out.values.col(static_cast<Eigen::Index>(j)) = values.col(column(subset[j]));
  return out;
}

PredictorTable PredictorTable::take_rows(const std::vector<std::size_t>& idx) const {
  PredictorTable out;
  out.names = names;
  out.values.resize(static_cast<Eigen::Index>(idx.size()), values.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.values.row(static_cast<Eigen::Index>(i)) =
        values.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

void validate_predictors(const PredictorTable& table) {
  std::unordered_set<std::string> seen;
  for (const auto& name : table.names) {
    if (name.empty())
      throw Error(ErrorKind::InvariantViolation, "empty predictor name");
    if (!seen.insert(name).second)
      throw Error(ErrorKind::InvariantViolation,
                  "duplicate predictor name '" + name + "'");
  }
  if (table.values.cols() != static_cast<Eigen::Index>(table.names.size()))
    throw Error(ErrorKind::DimensionMismatch,
                "predictor matrix width does not match name count");
  if (!table.values.allFinite())
    throw Error(ErrorKind::InvariantViolation, "non-finite predictor value");
}

SegmentTable SegmentTable::take(const std::vector<std::size_t>& idx) const {
  SegmentTable out;
  out.predictors = predictors.take_rows(idx);
  out.ids.reserve(idx.size());
  out.track_ids.reserve(idx.size());
  out.quality.reserve(idx.size());
  for (std::size_t i : idx) {
    out.ids.push_back(ids[i]);
    out.track_ids.push_back(track_ids[i]);
    out.quality.push_back(quality[i]);
  }
  return out;
}

void validate_agbd(const AGBDVector& v) {
  if (v.unit_ids.size() != static_cast<std::size_t>(v.values.size()))
    throw Error(ErrorKind::LengthMismatch, "AGBD ids and values differ in length");
  for (Eigen::Index i = 0; i < v.values.size(); ++i) {
    const double x = v.values[i];
    if (!std::isfinite(x) || x < 0.0)
      throw Error(ErrorKind::InvariantViolation, static_cast<std::size_t>(i),
                  "AGBD value must be finite and non-negative");
  }
}

void validate_trees(const std::vector<TreeRecord>& trees) {
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const auto& t = trees[i];
    if (t.tree_id.empty())
      throw Error(ErrorKind::InvariantViolation, i, "empty tree_id");
    if (!ids.insert(t.tree_id).second)
      throw Error(ErrorKind::InvariantViolation, i,
                  "duplicate tree_id '" + t.tree_id + "'");
    if (!(t.dbh >= 5.0))
      throw Error(ErrorKind::InvariantViolation, i,
                  "dbh below the 5 cm measurement threshold");
    if (!(t.dbh <= 200.0))
      throw Error(ErrorKind::InvariantViolation, i, "dbh above 200 cm sanity bound");
    if (!(t.height > 1.3))
      throw Error(ErrorKind::InvariantViolation, i,
                  "height must exceed breast height (1.3 m)");
    if (!(t.height <= 60.0))
      throw Error(ErrorKind::InvariantViolation, i, "height above 60 m sanity bound");
  }
}

ValidationWarnings validate_plots(const std::vector<FieldPlot>& plots,
                                  const LoadOptions& opts) {
  ValidationWarnings warnings;
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < plots.size(); ++i) {
    const auto& p = plots[i];
    if (p.plot_id.empty())
      throw Error(ErrorKind::InvariantViolation, i, "empty plot_id");
    if (!ids.insert(p.plot_id).second)
      throw Error(ErrorKind::InvariantViolation, i,
                  "duplicate plot_id '" + p.plot_id + "'");
    if (!(p.area_ha > 0.0) || !std::isfinite(p.area_ha))
      throw Error(ErrorKind::InvariantViolation, i, "plot area must be positive");
    bool known_radius = false;
    for (double a : kPlotAreas)
      if (std::abs(p.area_ha - a) <= 1e-6) known_radius = true;
    if (!known_radius) {
      if (opts.strict_radii)
        throw Error(ErrorKind::InvariantViolation, i,
                    "plot area does not match an inventory radius (strict_radii)");
      warnings.messages.push_back("plot '" + p.plot_id +
                                  "': area does not match an inventory radius");
    }
  }
  return warnings;
}

void validate_subcells(const SubcellTable& table) {
  if (table.ids.size() != table.segment_ids.size() ||
      table.ids.size() != table.predictors.rows())
    throw Error(ErrorKind::LengthMismatch, "subcell table columns differ in length");
  validate_predictors(table.predictors);
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    if (!ids.insert(table.ids[i]).second)
      throw Error(ErrorKind::InvariantViolation, i,
                  "duplicate subcell_id '" + table.ids[i] + "'");
  }
  std::unordered_map<std::string, int> per_segment;
  for (const auto& seg : table.segment_ids) ++per_segment[seg];
  for (const auto& [seg, count] : per_segment)
    if (count != 6)
      throw Error(ErrorKind::InvariantViolation,
                  "segment '" + seg + "' has " + std::to_string(count) +
                      " subcells, expected exactly 6");
}

void validate_segments(const SegmentTable& table) {
  if (table.ids.size() != table.track_ids.size() ||
      table.ids.size() != table.quality.size() ||
      table.ids.size() != table.predictors.rows())
    throw Error(ErrorKind::LengthMismatch, "segment table columns differ in length");
  validate_predictors(table.predictors);
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    if (!ids.insert(table.ids[i]).second)
      throw Error(ErrorKind::InvariantViolation, i,
                  "duplicate segment_id '" + table.ids[i] + "'");
    if (table.track_ids[i].empty())
      throw Error(ErrorKind::InvariantViolation, i, "empty track_id");
    const auto& q = table.quality[i];
    if (q.n_photons < 0.0)
      throw Error(ErrorKind::InvariantViolation, i, "negative photon count");
    if (q.high_conf_fraction < 0.0 || q.high_conf_fraction > 1.0)
      throw Error(ErrorKind::InvariantViolation, i,
                  "high_conf_fraction outside [0, 1]");
  }
}

}  // namespace hierlid::data
