#include "hierlid/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "hierlid/error.hpp"

namespace hierlid::segmenter {

double MetricSet::percentile(int k) const {
  for (std::size_t i = 0; i < kHeightPercentiles.size(); ++i)
    if (kHeightPercentiles[i] == k) return p[i];
  throw Error(ErrorKind::ColumnMismatch, "p" + std::to_string(k) + " is not computed");
}

double MetricSet::density_percentile(int k) const {
  for (std::size_t i = 0; i < kDensityPercentiles.size(); ++i)
    if (kDensityPercentiles[i] == k) return b[i];
  throw Error(ErrorKind::ColumnMismatch, "b" + std::to_string(k) + " is not computed");
}

std::vector<std::string> metric_names() {
  std::vector<std::string> names = {"n_all", "n_c", "mean", "std", "max", "qav"};
  for (int k : kHeightPercentiles) names.push_back("p" + std::to_string(k));
  for (int k : kDensityPercentiles) names.push_back("b" + std::to_string(k));
  names.push_back("cover");
  return names;
}

std::vector<double> metric_values(const MetricSet& m) {
  std::vector<double> out = {static_cast<double>(m.n_all), static_cast<double>(m.n_c),
                             m.mean, m.std, m.max, m.qav};
  out.insert(out.end(), m.p.begin(), m.p.end());
  out.insert(out.end(), m.b.begin(), m.b.end());
  out.push_back(m.cover);
  return out;
}

double interpolated_percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double rank = (q / 100.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  if (lo == hi) return values[lo];
  const double w = rank - static_cast<double>(lo);
  return values[lo] * (1.0 - w) + values[hi] * w;
}

MetricSet compute_height_metrics(const std::vector<double>& heights,
                                 const std::vector<bool>& canopy_flags,
                                 double cover_threshold) {
  if (heights.empty()) throw Error(ErrorKind::EmptyInput, "no points");
  if (heights.size() != canopy_flags.size())
    throw Error(ErrorKind::LengthMismatch, "heights and canopy flags differ in length");

  MetricSet m;
  m.n_all = heights.size();

  std::vector<double> canopy;
  canopy.reserve(heights.size());
  for (std::size_t i = 0; i < heights.size(); ++i)
    if (canopy_flags[i]) canopy.push_back(heights[i]);
  m.n_c = canopy.size();
  m.cover = static_cast<double>(m.n_c) / static_cast<double>(m.n_all);

  if (!canopy.empty()) {
    double sum = 0.0, sum2 = 0.0, maxv = canopy.front();
    for (double h : canopy) {
      sum += h;
      sum2 += h * h;
      maxv = std::max(maxv, h);
    }
    const double n = static_cast<double>(canopy.size());
    m.mean = sum / n;
    m.qav = sum2 / n;
    m.std = std::sqrt(std::max(0.0, m.qav - m.mean * m.mean));
    m.max = maxv;

    std::vector<double> sorted = canopy;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < kHeightPercentiles.size(); ++i) {
      const double rank = (kHeightPercentiles[i] / 100.0) *
                          static_cast<double>(sorted.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(rank));
      const auto hi = static_cast<std::size_t>(std::ceil(rank));
      const double w = rank - static_cast<double>(lo);
      m.p[i] = lo == hi ? sorted[lo] : sorted[lo] * (1.0 - w) + sorted[hi] * w;
    }
  }

  const double p99 = m.p.back();
  const double span = std::max(0.0, p99 - cover_threshold);
  for (std::size_t i = 0; i < kDensityPercentiles.size(); ++i) {
    const double threshold =
        cover_threshold + (kDensityPercentiles[i] / 100.0) * span;
    std::size_t above = 0;
    for (double h : heights)
      if (h > threshold) ++above;
    m.b[i] = static_cast<double>(above) / static_cast<double>(m.n_all);
  }
  return m;
}

}  // namespace hierlid::segmenter
