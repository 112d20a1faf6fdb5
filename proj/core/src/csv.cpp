#include "hierlid/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hierlid/error.hpp"

namespace hierlid::csv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw Error(ErrorKind::MissingColumn, "column '" + name + "' not found");
}

bool Table::has_column(const std::string& name) const {
  for (const auto& h : header)
    if (h == name) return true;
  return false;
}

Table parse_table(const std::string& text) {
  Table table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  std::size_t width = 0;
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      table.header = split_line(line);
      width = table.header.size();
      first = false;
      continue;
    }
    if (line.empty() && in.eof()) break;
    auto cells = split_line(line);
    if (cells.size() != width)
      throw Error(ErrorKind::InvariantViolation, row_index,
                  "row has " + std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(width));
    table.rows.push_back(std::move(cells));
    ++row_index;
  }
  if (first) throw Error(ErrorKind::EmptyInput, "no header row");
  return table;
}

Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_table(buf.str());
}

std::string to_string(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += table.header[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  }
  return out;
}

void write_table(const Table& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path.string() + "'");
  out << to_string(table);
}

double parse_double(const Table& t, std::size_t row, std::size_t col) {
  const std::string& cell = t.rows[row][col];
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw Error(ErrorKind::TypeError, row,
                "column '" + t.header[col] + "': '" + cell + "' is not a number");
  return value;
}

long long parse_int(const Table& t, std::size_t row, std::size_t col) {
  const std::string& cell = t.rows[row][col];
  long long value = 0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw Error(ErrorKind::TypeError, row,
                "column '" + t.header[col] + "': '" + cell + "' is not an integer");
  return value;
}

bool parse_bool(const Table& t, std::size_t row, std::size_t col) {
  const std::string& cell = t.rows[row][col];
  if (cell == "true" || cell == "1") return true;
  if (cell == "false" || cell == "0") return false;
  throw Error(ErrorKind::TypeError, row,
              "column '" + t.header[col] + "': '" + cell + "' is not a boolean");
}

std::string format_double(double v) {
  char buf[40];
  // Shortest representation that parses back to the same double.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) break;
  }
  return buf;
}

std::vector<data::TreeRecord> parse_trees(const Table& t) {
  const std::size_t c_tree = t.column("tree_id");
  const std::size_t c_plot = t.column("plot_id");
  const std::size_t c_dbh = t.column("dbh_cm");
  const std::size_t c_h = t.column("height_m");
  const std::size_t c_sp = t.column("species");

  std::vector<data::TreeRecord> trees;
  trees.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    data::TreeRecord rec;
    rec.tree_id = t.rows[i][c_tree];
    rec.plot_id = t.rows[i][c_plot];
    rec.dbh = parse_double(t, i, c_dbh);
    rec.height = parse_double(t, i, c_h);
    try {
      rec.species = data::species_from_string(t.rows[i][c_sp]);
    } catch (const Error&) {
      throw Error(ErrorKind::TypeError, i,
                  "column 'species': '" + t.rows[i][c_sp] + "' is not a species");
    }
    trees.push_back(std::move(rec));
  }
  data::validate_trees(trees);
  return trees;
}

std::vector<data::TreeRecord> load_trees(const std::filesystem::path& path) {
  return parse_trees(read_table(path));
}

std::vector<data::FieldPlot> parse_plots(const Table& t, const data::LoadOptions& opts,
                                         data::ValidationWarnings* warnings) {
  const std::size_t c_id = t.column("plot_id");
  const std::size_t c_area = t.column("area_ha");
  const std::size_t c_x = t.column("x");
  const std::size_t c_y = t.column("y");

  std::vector<data::FieldPlot> plots;
  plots.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    data::FieldPlot p;
    p.plot_id = t.rows[i][c_id];
    p.area_ha = parse_double(t, i, c_area);
    p.x = parse_double(t, i, c_x);
    p.y = parse_double(t, i, c_y);
    plots.push_back(std::move(p));
  }
  auto w = data::validate_plots(plots, opts);
  if (warnings) *warnings = std::move(w);
  return plots;
}

std::vector<data::FieldPlot> load_plots(const std::filesystem::path& path,
                                        const data::LoadOptions& opts,
                                        data::ValidationWarnings* warnings) {
  return parse_plots(read_table(path), opts, warnings);
}

namespace {

// Metric columns are everything after the listed fixed columns.
data::PredictorTable parse_metrics(const Table& t, std::size_t fixed_cols) {
  data::PredictorTable preds;
  for (std::size_t j = fixed_cols; j < t.header.size(); ++j)
    preds.names.push_back(t.header[j]);
  preds.values.resize(static_cast<Eigen::Index>(t.rows.size()),
                      static_cast<Eigen::Index>(preds.names.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = fixed_cols; j < t.header.size(); ++j)
      preds.values(static_cast<Eigen::Index>(i),
                   static_cast<Eigen::Index>(j - fixed_cols)) = parse_double(t, i, j);
  return preds;
}

}  // namespace

data::SubcellTable parse_subcells(const Table& t) {
  const std::size_t c_id = t.column("subcell_id");
  const std::size_t c_seg = t.column("segment_id");
  if (c_id != 0 || c_seg != 1)
    throw Error(ErrorKind::MissingColumn,
                "subcells.csv must start with subcell_id,segment_id");
  data::SubcellTable table;
  table.predictors = parse_metrics(t, 2);
  table.ids.reserve(t.rows.size());
  table.segment_ids.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    table.ids.push_back(row[c_id]);
    table.segment_ids.push_back(row[c_seg]);
  }
  data::validate_subcells(table);
  return table;
}

data::SubcellTable load_subcells(const std::filesystem::path& path) {
  return parse_subcells(read_table(path));
}

data::SegmentTable parse_segments(const Table& t) {
  const std::size_t c_id = t.column("segment_id");
  const std::size_t c_track = t.column("track_id");
  const std::size_t c_n = t.column("n_photons");
  const std::size_t c_conf = t.column("high_conf_fraction");
  const std::size_t c_forest = t.column("forested");
  if (c_id != 0 || c_track != 1 || c_n != 2 || c_conf != 3 || c_forest != 4)
    throw Error(ErrorKind::MissingColumn,
                "segments.csv must start with "
                "segment_id,track_id,n_photons,high_conf_fraction,forested");

  data::SegmentTable table;
  table.predictors = parse_metrics(t, 5);
  table.ids.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    table.ids.push_back(t.rows[i][c_id]);
    table.track_ids.push_back(t.rows[i][c_track]);
    data::SegmentQuality q;
    q.n_photons = static_cast<double>(parse_int(t, i, c_n));
    q.high_conf_fraction = parse_double(t, i, c_conf);
    q.forested = parse_bool(t, i, c_forest);
    table.quality.push_back(q);
  }
  data::validate_segments(table);
  return table;
}

data::SegmentTable load_segments(const std::filesystem::path& path) {
  return parse_segments(read_table(path));
}

KeyedPredictors parse_keyed_predictors(const Table& t, const std::string& id_column) {
  const std::size_t c_id = t.column(id_column);
  if (c_id != 0)
    throw Error(ErrorKind::MissingColumn,
                "'" + id_column + "' must be the first column");
  KeyedPredictors out;
  out.predictors = parse_metrics(t, 1);
  out.ids.reserve(t.rows.size());
  for (const auto& row : t.rows) out.ids.push_back(row[c_id]);
  data::validate_predictors(out.predictors);
  return out;
}

KeyedPredictors load_keyed_predictors(const std::filesystem::path& path,
                                      const std::string& id_column) {
  return parse_keyed_predictors(read_table(path), id_column);
}

Table to_table(const data::SegmentTable& segments) {
  Table t;
  t.header = {"segment_id", "track_id", "n_photons", "high_conf_fraction", "forested"};
  for (const auto& name : segments.predictors.names) t.header.push_back(name);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    std::vector<std::string> row;
    row.reserve(t.header.size());
    row.push_back(segments.ids[i]);
    row.push_back(segments.track_ids[i]);
    row.push_back(std::to_string(static_cast<long long>(segments.quality[i].n_photons)));
    row.push_back(format_double(segments.quality[i].high_conf_fraction));
    row.push_back(segments.quality[i].forested ? "true" : "false");
    for (Eigen::Index j = 0; j < segments.predictors.values.cols(); ++j)
      row.push_back(format_double(segments.predictors.values(static_cast<Eigen::Index>(i), j)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table to_table(const data::SubcellTable& subcells) {
  Table t;
  t.header = {"subcell_id", "segment_id"};
  for (const auto& name : subcells.predictors.names) t.header.push_back(name);
  for (std::size_t i = 0; i < subcells.size(); ++i) {
    std::vector<std::string> row;
    row.reserve(t.header.size());
    row.push_back(subcells.ids[i]);
    row.push_back(subcells.segment_ids[i]);
    for (Eigen::Index j = 0; j < subcells.predictors.values.cols(); ++j)
      row.push_back(format_double(subcells.predictors.values(static_cast<Eigen::Index>(i), j)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace hierlid::csv
