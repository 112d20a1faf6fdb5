#include "hierlid/varsel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "hierlid/error.hpp"
#include "hierlid/gnls.hpp"
#include "hierlid/rng.hpp"

namespace hierlid::varsel {

namespace {

using nlohmann::json;

// Objective: RMSE of a fast homoscedastic fit on the subset. The final
// model is refitted with the full GNLS machinery elsewhere, so a capped
// iteration count is enough inside the annealing loop.
double subset_objective(const data::PredictorTable& candidates, const Eigen::VectorXd& y,
                        const std::vector<std::size_t>& subset) {
  std::vector<std::string> names;
  names.reserve(subset.size());
  for (std::size_t j : subset) names.push_back(candidates.names[j]);
  try {
    gnls::FitOptions opts;
    opts.max_outer = 2;
    opts.max_inner = 15;
    const data::PredictorTable sub = candidates.select(names);
    const gnls::ModelFit fit =
        gnls::fit_gnls(sub, y, names,
                       std::vector<gnls::Transform>(names.size(), gnls::Transform::Identity),
                       gnls::VarFnKind::Homoscedastic, opts);
    const double rmse =
        std::sqrt(fit.residuals.squaredNorm() / static_cast<double>(y.size()));
    return std::isfinite(rmse) ? rmse : std::numeric_limits<double>::infinity();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

void validate_config(const AnnealConfig& config, std::size_t n_candidates) {
  if (config.subset_size == 0)
    throw Error(ErrorKind::ConfigError, "subset_size must be positive");
  if (config.subset_size > n_candidates)
    throw Error(ErrorKind::TooFewCandidates,
                std::to_string(n_candidates) + " candidates for subset of " +
                    std::to_string(config.subset_size));
  if (!(config.cooling_rate > 0.0) || !(config.cooling_rate < 1.0))
    throw Error(ErrorKind::ConfigError, "cooling_rate must be in (0, 1)");
  if (config.iterations_per_temperature < 1)
    throw Error(ErrorKind::ConfigError, "iterations_per_temperature must be >= 1");
}

SelectionResult select_variables(const data::PredictorTable& candidates,
                                 const Eigen::VectorXd& y, const AnnealConfig& config) {
  data::validate_predictors(candidates);
  validate_config(config, candidates.cols());
  if (candidates.rows() != static_cast<std::size_t>(y.size()))
    throw Error(ErrorKind::LengthMismatch, "candidate rows vs response length");

  const std::size_t n_cand = candidates.cols();
  const std::size_t k = config.subset_size;
  CounterRng rng(config.rng_seed);

  // Initial subset: a uniform draw without replacement.
  std::vector<std::size_t> pool(n_cand);
  for (std::size_t i = 0; i < n_cand; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n_cand - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<std::size_t> current(pool.begin(), pool.begin() + static_cast<long>(k));
  std::vector<bool> in_subset(n_cand, false);
  for (std::size_t j : current) in_subset[j] = true;

  SelectionResult result;
  double current_obj = subset_objective(candidates, y, current);
  ++result.evaluations;
  std::vector<std::size_t> best = current;
  double best_obj = current_obj;

  double temperature = config.initial_temperature;
  if (temperature < 0.0) {
    temperature = std::isfinite(current_obj) && current_obj > 0.0 ? current_obj : 1.0;
  }
  // Cooling schedule length; with temperature 0 (greedy) the default ratio
  // still fixes the move budget.
  const double t_ratio = (config.min_temperature > 0.0 && temperature > 0.0)
                             ? config.min_temperature / temperature
                             : 1e-4;
  const int n_levels =
      t_ratio >= 1.0
          ? 1
          : static_cast<int>(std::ceil(std::log(t_ratio) / std::log(config.cooling_rate)));

  std::size_t move = 0;
  // No neighbors exist when the subset exhausts the candidates.
  const bool movable = k < n_cand;
  for (int level = 0; movable && level < n_levels; ++level) {
    for (int it = 0; it < config.iterations_per_temperature; ++it) {
      ++move;
      // Swap one chosen variable for one unchosen, both uniform.
      const std::size_t out_pos = static_cast<std::size_t>(rng.below(k));
      std::size_t in_idx = static_cast<std::size_t>(rng.below(n_cand - k));
      std::size_t in_col = 0;
      for (std::size_t j = 0;; ++j) {
        if (!in_subset[j]) {
          if (in_idx == 0) {
            in_col = j;
            break;
          }
          --in_idx;
        }
      }
      std::vector<std::size_t> proposal = current;
      proposal[out_pos] = in_col;

      const double proposal_obj = subset_objective(candidates, y, proposal);
      ++result.evaluations;
      const double delta = proposal_obj - current_obj;
      bool accept;
      if (delta <= 0.0) {
        accept = true;
      } else {
        // exp(-inf) = 0, so uphill moves are rejected at temperature zero
        // and infinite-objective proposals are rejected at any temperature.
        const double threshold =
            temperature > 0.0 ? std::exp(-delta / temperature) : 0.0;
        accept = rng.uniform() < threshold;
      }

      if (accept) {
        in_subset[current[out_pos]] = false;
        in_subset[in_col] = true;
        current = std::move(proposal);
        current_obj = proposal_obj;
        if (current_obj < best_obj) {
          best_obj = current_obj;
          best = current;
        }
      }
      result.trace.push_back({move, temperature, current_obj, best_obj, accept});
    }
    temperature *= config.cooling_rate;
  }

  std::sort(best.begin(), best.end());
  for (std::size_t j : best) result.chosen.push_back(candidates.names[j]);
  result.best_objective = best_obj;
  return result;
}

std::string selection_json(const SelectionResult& result, const AnnealConfig& config) {
  json j;
  j["chosen"] = result.chosen;
  j["best_objective"] = result.best_objective;
  j["evaluations"] = result.evaluations;
  j["config"] = {{"subset_size", config.subset_size},
                 {"initial_temperature", config.initial_temperature},
                 {"cooling_rate", config.cooling_rate},
                 {"iterations_per_temperature", config.iterations_per_temperature},
                 {"min_temperature", config.min_temperature},
                 {"rng_seed", config.rng_seed}};
  json trace = json::array();
  for (const auto& entry : result.trace)
    trace.push_back({{"move", entry.move},
                     {"temperature", entry.temperature},
                     {"objective", entry.objective},
                     {"best", entry.best},
                     {"accepted", entry.accepted}});
  j["trace"] = std::move(trace);
  return j.dump(2) + "\n";
}

}  // namespace hierlid::varsel
