#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "truthprobe/dataset.hpp"
#include "truthprobe/eval.hpp"
#include "truthprobe/losses.hpp"
#include "truthprobe/trainer.hpp"

namespace truthprobe {

enum class SearchObjective { train_accuracy, cosine_to_ccs };

std::string_view to_string(SearchObjective o);
SearchObjective search_objective_from_string(std::string_view name);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct GridSearchConfig {
  Interval initial_interval{0.0, 0.99};
  int points_per_round = 11;
  int seeds_per_point = 3;
  int rounds = 2;
  std::uint64_t base_seed = 0;
  SearchObjective objective = SearchObjective::train_accuracy;

  /// [0, 0.99] for train accuracy, [0.9, 0.999] for cosine to CCS.
  static GridSearchConfig defaults_for(SearchObjective objective);
  void validate() const;
};

/// k evenly spaced values from lo to hi, both endpoints included.
std::vector<double> grid_points(Interval interval, int k);

/// [lambda* - step, lambda* + step] clipped to `bounds`.
Interval refine_interval(double lambda_star, double step, Interval bounds);

/// Mean |cos| to the CCS reference ensemble (same as mean_abs_cosine).
double objective_cosine(const Direction& direction, std::span<const Direction> ccs_reference);

/// What a search scores against. Accuracy is measured on `train_set` (needs
/// labels); cosine against `ccs_reference`.
struct SearchContext {
  TrainConfig train_config;
  std::vector<Direction> ccs_reference;
  std::size_t jobs = 1;
};

struct SeedValue {
  std::uint64_t seed = 0;
  double value = 0.0;  // NaN when the run diverged
};

struct GridPointTrace {
  double lambda = 0.0;
  double mean = 0.0;  // NaN when every seed diverged
  std::vector<SeedValue> values;
};

struct RoundTrace {
  int round = 0;
  Interval interval;
  std::vector<GridPointTrace> points;
  double lambda_star = 0.0;
};

struct SearchTrace {
  std::string loss;
  SearchObjective objective = SearchObjective::train_accuracy;
  std::vector<RoundTrace> rounds;
  double lambda_star = 0.0;
};

struct SearchResult {
  double lambda_star = 0.0;
  SearchTrace trace;
};

/// Multi-round grid search over lambda for a unit-constrained loss. Each round
/// trains seeds_per_point probers per grid point, keeps the point with the best
/// mean objective (smallest lambda on ties) and refines around it by one grid
/// step. `loss` supplies the variant and sign mode; its lambda is ignored.
SearchResult grid_search(const LossSpec& loss, const ContrastActivationSet& train_set, const SearchContext& context,
                         const GridSearchConfig& config);

nlohmann::json to_json(const SearchTrace& trace);
/// Flat rows: round,lambda,seed,objective.
void write_trace_csv(const SearchTrace& trace, const std::filesystem::path& file);

}  // namespace truthprobe
