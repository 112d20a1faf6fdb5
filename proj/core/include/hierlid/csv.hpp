#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hierlid/types.hpp"

namespace hierlid::csv {

/// Raw delimited table. Cells keep their original text so that
/// write_table(load_table(f)) reproduces the input body byte for byte.
/// Dialect: UTF-8, comma separated, header row, '.' decimal separator,
/// no quoting and no embedded commas.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // Error(MissingColumn)
  bool has_column(const std::string& name) const;
};

Table read_table(const std::filesystem::path& path);
Table parse_table(const std::string& text);

void write_table(const Table& table, const std::filesystem::path& path);
std::string to_string(const Table& table);

/// Typed cell parsers; failures carry the 0-based data row and column name.
double parse_double(const Table& t, std::size_t row, std::size_t col);
long long parse_int(const Table& t, std::size_t row, std::size_t col);
bool parse_bool(const Table& t, std::size_t row, std::size_t col);

// ---- Typed loaders for the external file formats ----------------------

/// trees.csv: tree_id,plot_id,dbh_cm,height_m,species
std::vector<data::TreeRecord> parse_trees(const Table& t);
std::vector<data::TreeRecord> load_trees(const std::filesystem::path& path);

/// plots.csv: plot_id,area_ha,x,y
std::vector<data::FieldPlot> parse_plots(const Table& t,
                                         const data::LoadOptions& opts = {},
                                         data::ValidationWarnings* warnings = nullptr);
std::vector<data::FieldPlot> load_plots(const std::filesystem::path& path,
                                        const data::LoadOptions& opts = {},
                                        data::ValidationWarnings* warnings = nullptr);

/// subcells.csv: subcell_id,segment_id,<metric columns...>
data::SubcellTable parse_subcells(const Table& t);
data::SubcellTable load_subcells(const std::filesystem::path& path);

/// segments.csv: segment_id,track_id,n_photons,high_conf_fraction,forested,
///               <metric columns...>
data::SegmentTable parse_segments(const Table& t);
data::SegmentTable load_segments(const std::filesystem::path& path);

/// Generic id + metrics table (plot_metrics.csv, pixels.csv). The first
/// column is the id column; every remaining column is a metric.
struct KeyedPredictors {
  std::vector<std::string> ids;
  data::PredictorTable predictors;
};
KeyedPredictors parse_keyed_predictors(const Table& t, const std::string& id_column);
KeyedPredictors load_keyed_predictors(const std::filesystem::path& path,
                                      const std::string& id_column);

// ---- Writers -----------------------------------------------------------

Table to_table(const data::SegmentTable& segments);
Table to_table(const data::SubcellTable& subcells);

/// Canonical number formatting used by all writers (shortest text that
/// round-trips the double exactly).
std::string format_double(double v);

}  // namespace hierlid::csv
