#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "hierlid/types.hpp"

namespace hierlid::varsel {

struct AnnealConfig {
  std::size_t subset_size = 4;
  /// < 0 picks the objective of the initial random subset; exactly 0 gives
  /// pure greedy descent (no uphill moves are ever accepted).
  double initial_temperature = -1.0;
  double cooling_rate = 0.95;
  int iterations_per_temperature = 50;
  /// <= 0 means 1e-4 * initial temperature.
  double min_temperature = 0.0;
  std::uint64_t rng_seed = 1;
};

void validate_config(const AnnealConfig& config, std::size_t n_candidates);

struct TraceEntry {
  std::size_t move = 0;
  double temperature = 0.0;
  double objective = 0.0;   // objective of the current state
  double best = 0.0;        // best-ever objective so far
  bool accepted = false;
};

struct SelectionResult {
  std::vector<std::string> chosen;  // candidate order preserved
  double best_objective = 0.0;
  std::vector<TraceEntry> trace;
  std::size_t evaluations = 0;
};

/// Pick a fixed-size predictor subset by simulated annealing. The objective
/// is the RMSE of a homoscedastic squared-linear-predictor fit on the
/// candidate subset; singular fits score +infinity so collinear candidates
/// are routed around rather than failing. Neighbor moves swap one chosen
/// variable for one unchosen, chosen uniformly; acceptance is Metropolis
/// with geometric cooling. Deterministic given rng_seed. Returns the
/// best-ever subset.
SelectionResult select_variables(const data::PredictorTable& candidates,
                                 const Eigen::VectorXd& y, const AnnealConfig& config);

/// selection.json body.
std::string selection_json(const SelectionResult& result, const AnnealConfig& config);

}  // namespace hierlid::varsel
