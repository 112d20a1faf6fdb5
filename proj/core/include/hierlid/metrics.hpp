#pragma once

#include <array>
#include <string>
#include <vector>

namespace hierlid::segmenter {

inline constexpr std::array<int, 12> kHeightPercentiles = {5,  10, 20, 30, 40, 50,
                                                           60, 70, 80, 90, 95, 99};
inline constexpr std::array<int, 11> kDensityPercentiles = {5,  10, 20, 30, 40, 50,
                                                            60, 70, 80, 90, 95};

/// Height/density metrics of one segment or subcell.
///
/// Height statistics (mean, std, max, qav, percentiles) are computed over
/// canopy-classified points only; n_all counts every non-noise point, so
/// cover = n_c / n_all. std uses the population convention, which makes
/// qav = mean^2 + std^2 an exact identity. When a unit has no canopy points
/// all canopy statistics are zero and cover is zero.
struct MetricSet {
  std::size_t n_all = 0;
  std::size_t n_c = 0;
  double mean = 0.0;
  double std = 0.0;
  double max = 0.0;
  double qav = 0.0;  // mean squared canopy height
  std::array<double, kHeightPercentiles.size()> p{};
  std::array<double, kDensityPercentiles.size()> b{};
  double cover = 0.0;

  double percentile(int k) const;        // k must be one of kHeightPercentiles
  double density_percentile(int k) const;
};

/// Metric column names in serialization order:
/// n_all,n_c,mean,std,max,qav,p5..p99,b5..b95,cover
std::vector<std::string> metric_names();

/// Flatten a MetricSet in metric_names() order.
std::vector<double> metric_values(const MetricSet& m);

/// Percentile by linear interpolation between closest ranks of the sorted
/// sample (the continuous convention common in lidar metrics tooling).
/// q is in percent. Throws Error(EmptyInput) on an empty sample.
double interpolated_percentile(std::vector<double> values, double q);

/// Compute the metric set for one unit. heights holds every non-noise point;
/// canopy_flags marks canopy and top-of-canopy points. The density
/// percentile b_k counts points above cover_threshold + k% of the span
/// (p99 - cover_threshold), where the span is floored at zero.
MetricSet compute_height_metrics(const std::vector<double>& heights,
                                 const std::vector<bool>& canopy_flags,
                                 double cover_threshold = 1.3);

}  // namespace hierlid::segmenter
