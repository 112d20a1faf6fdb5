#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hierlid/error.hpp"
#include "hierlid/metrics.hpp"
#include "hierlid/rng.hpp"

using namespace hierlid;
using segmenter::MetricSet;

namespace {

// Independent percentile oracle: explicit sort + rank interpolation written
// out long-hand, kept apart from the library implementation.
double percentile_oracle(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * (static_cast<double>(v.size()) - 1.0);
  const std::size_t below = static_cast<std::size_t>(pos);
  if (below + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(below);
  return v[below] + frac * (v[below + 1] - v[below]);
}

}  // namespace

TEST_CASE("degenerate distribution: all heights equal") {
  const std::vector<double> heights(50, 10.0);
  const std::vector<bool> canopy(50, true);
  const MetricSet m = segmenter::compute_height_metrics(heights, canopy);
  CHECK(m.mean == doctest::Approx(10.0));
  CHECK(m.std == doctest::Approx(0.0));
  CHECK(m.max == doctest::Approx(10.0));
  CHECK(m.qav == doctest::Approx(100.0));
  for (int k : segmenter::kHeightPercentiles)
    CHECK(m.percentile(k) == doctest::Approx(10.0));
}

TEST_CASE("cover is the canopy fraction of all points") {
  const std::vector<double> heights = {0.0, 0.0, 0.0, 20.0};
  const std::vector<bool> canopy = {false, false, false, true};
  const MetricSet m = segmenter::compute_height_metrics(heights, canopy);
  CHECK(m.n_all == 4);
  CHECK(m.n_c == 1);
  CHECK(m.cover == doctest::Approx(0.25));
}

TEST_CASE("p50 of 1..100 is 50.5 under rank interpolation") {
  std::vector<double> heights;
  for (int i = 1; i <= 100; ++i) heights.push_back(static_cast<double>(i));
  const std::vector<bool> canopy(100, true);
  const MetricSet m = segmenter::compute_height_metrics(heights, canopy);
  CHECK(m.percentile(50) == doctest::Approx(percentile_oracle(heights, 50)));
  CHECK(m.percentile(50) == doctest::Approx(50.5));
  CHECK(m.percentile(99) == doctest::Approx(percentile_oracle(heights, 99)));
}

TEST_CASE("empty input raises EmptyInput") {
  CHECK_THROWS_AS(segmenter::compute_height_metrics({}, {}), Error);
}

TEST_CASE("percentiles are monotone and match the oracle on random samples") {
  CounterRng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    std::vector<double> heights(n);
    std::vector<bool> canopy(n, true);
    for (auto& h : heights) h = rng.uniform(0.0, 35.0);

    const MetricSet m = segmenter::compute_height_metrics(heights, canopy);
    double prev = -1.0;
    for (int k : segmenter::kHeightPercentiles) {
      const double p = m.percentile(k);
      CHECK(p >= prev);
      CHECK(p == doctest::Approx(percentile_oracle(heights, k)));
      prev = p;
    }
    CHECK(m.percentile(99) <= m.max + 1e-12);
    CHECK(m.qav + 1e-12 >= m.mean * m.mean);
    for (int k : segmenter::kDensityPercentiles) {
      CHECK(m.density_percentile(k) >= 0.0);
      CHECK(m.density_percentile(k) <= 1.0);
    }
  }
}

TEST_CASE("metric computation is permutation invariant") {
  CounterRng rng(7);
  std::vector<double> heights;
  std::vector<bool> canopy;
  for (int i = 0; i < 120; ++i) {
    heights.push_back(rng.uniform(0.0, 30.0));
    canopy.push_back(rng.uniform() < 0.7);
  }
  const MetricSet a = segmenter::compute_height_metrics(heights, canopy);

  // Reverse is a permutation; metrics must be identical.
  std::vector<double> rev_h(heights.rbegin(), heights.rend());
  std::vector<bool> rev_c(canopy.rbegin(), canopy.rend());
  const MetricSet b = segmenter::compute_height_metrics(rev_h, rev_c);

  CHECK(a.mean == doctest::Approx(b.mean));
  CHECK(a.std == doctest::Approx(b.std));
  CHECK(a.qav == doctest::Approx(b.qav));
  CHECK(a.cover == doctest::Approx(b.cover));
  for (int k : segmenter::kHeightPercentiles)
    CHECK(a.percentile(k) == doctest::Approx(b.percentile(k)));
  for (int k : segmenter::kDensityPercentiles)
    CHECK(a.density_percentile(k) == doctest::Approx(b.density_percentile(k)));
}

TEST_CASE("population std makes qav = mean^2 + std^2 an identity") {
  CounterRng rng(11);
  std::vector<double> heights;
  std::vector<bool> canopy;
  for (int i = 0; i < 64; ++i) {
    heights.push_back(rng.uniform(1.0, 25.0));
    canopy.push_back(true);
  }
  const MetricSet m = segmenter::compute_height_metrics(heights, canopy);
  CHECK(m.qav == doctest::Approx(m.mean * m.mean + m.std * m.std));
}
