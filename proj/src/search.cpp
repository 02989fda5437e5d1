#include "truthprobe/search.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "truthprobe/error.hpp"
#include "truthprobe/parallel.hpp"
#include "truthprobe/random.hpp"

namespace truthprobe {

namespace fs = std::filesystem;

std::string_view to_string(SearchObjective o) {
  return o == SearchObjective::cosine_to_ccs ? "cosine_to_ccs" : "train_accuracy";
}

SearchObjective search_objective_from_string(std::string_view name) {
  if (name == "train_accuracy" || name == "accuracy") return SearchObjective::train_accuracy;
  if (name == "cosine_to_ccs" || name == "cosine") return SearchObjective::cosine_to_ccs;
  throw ValidationError("unknown search objective '" + std::string(name) + "'");
}

GridSearchConfig GridSearchConfig::defaults_for(SearchObjective objective) {
  GridSearchConfig c;
  c.objective = objective;
  c.initial_interval = objective == SearchObjective::cosine_to_ccs ? Interval{0.9, 0.999} : Interval{0.0, 0.99};
  return c;
}

void GridSearchConfig::validate() const {
  if (!(initial_interval.lo >= 0.0 && initial_interval.lo < initial_interval.hi && initial_interval.hi <= kMaxLambda)) {
    throw ValidationError("search interval must satisfy 0 <= lo < hi <= 0.999");
  }
  if (points_per_round < 3) throw ValidationError("points_per_round must be >= 3");
  if (rounds < 1) throw ValidationError("rounds must be >= 1");
  if (seeds_per_point < 1) throw ValidationError("seeds_per_point must be >= 1");
}

std::vector<double> grid_points(Interval interval, int k) {
  if (k < 2) throw ValidationError("a grid needs at least 2 points");
  if (!(interval.lo <= interval.hi)) throw ValidationError("grid interval is reversed");
  std::vector<double> out(static_cast<std::size_t>(k));
  const double width = interval.hi - interval.lo;
  for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = interval.lo + width * i / (k - 1);
  out.back() = interval.hi;
  return out;
}

Interval refine_interval(double lambda_star, double step, Interval bounds) {
  if (!(lambda_star >= bounds.lo && lambda_star <= bounds.hi)) {
    throw ValidationError("lambda* lies outside the search bounds");
  }
  if (!(step > 0)) throw ValidationError("refinement step must be positive");
  return {std::max(bounds.lo, lambda_star - step), std::min(bounds.hi, lambda_star + step)};
}

double objective_cosine(const Direction& direction, std::span<const Direction> ccs_reference) {
  return mean_abs_cosine(direction, ccs_reference);
}

SearchResult grid_search(const LossSpec& loss, const ContrastActivationSet& train_set, const SearchContext& context,
                         const GridSearchConfig& config) {
  config.validate();
  if (!loss.uses_lambda()) throw ValidationError("grid search applies only to md/ma/smr losses");
  if (config.objective == SearchObjective::cosine_to_ccs && context.ccs_reference.empty()) {
    throw ValidationError("cosine objective needs a CCS reference ensemble");
  }
  if (config.objective == SearchObjective::train_accuracy && !train_set.has_labels()) {
    throw ValidationError("train-accuracy objective needs a labelled train set");
  }

  const Interval bounds = config.initial_interval;
  const auto seeds = static_cast<std::size_t>(config.seeds_per_point);
  SearchTrace trace;
  trace.loss = std::string(to_string(loss.variant)) + (loss.sign_mode ? "/" + std::string(to_string(*loss.sign_mode)) : "");
  trace.objective = config.objective;

  Interval interval = bounds;
  for (int round = 0; round < config.rounds; ++round) {
    const auto lambdas = grid_points(interval, config.points_per_round);
    const std::size_t units = lambdas.size() * seeds;

    auto values = parallel_map(units, context.jobs, [&](std::size_t unit) {
      const std::size_t point = unit / seeds;
      const std::size_t rep = unit % seeds;
      TrainConfig tc = context.train_config;
      tc.seed = derive_seed(config.base_seed, {static_cast<std::uint64_t>(round), point, rep});
      SeedValue sv{tc.seed, std::numeric_limits<double>::quiet_NaN()};
      try {
        const auto trained = train_one(loss.with_lambda(lambdas[point]), train_set, tc);
        sv.value = config.objective == SearchObjective::cosine_to_ccs
                       ? objective_cosine(direction(trained.prober), context.ccs_reference)
                       : accuracy(trained.prober, train_set).accuracy;
      } catch (const DivergenceError&) {
      }
      return sv;
    });

    RoundTrace rt;
    rt.round = round;
    rt.interval = interval;
    std::optional<std::size_t> best;
    for (std::size_t p = 0; p < lambdas.size(); ++p) {
      GridPointTrace gp;
      gp.lambda = lambdas[p];
      double sum = 0.0;
      int finite = 0;
      for (std::size_t r = 0; r < seeds; ++r) {
        const auto& sv = values[p * seeds + r];
        gp.values.push_back(sv);
        if (std::isfinite(sv.value)) {
          sum += sv.value;
          ++finite;
        }
      }
      gp.mean = finite > 0 ? sum / finite : std::numeric_limits<double>::quiet_NaN();
      // Strict > keeps the smallest lambda on ties.
      if (std::isfinite(gp.mean) && (!best || gp.mean > rt.points[*best].mean)) best = p;
      rt.points.push_back(std::move(gp));
    }
    if (!best) throw DivergenceError("every grid point diverged in round " + std::to_string(round), -1);
    rt.lambda_star = lambdas[*best];
    trace.rounds.push_back(rt);

    const double step = (interval.hi - interval.lo) / (config.points_per_round - 1);
    interval = refine_interval(rt.lambda_star, step, bounds);
  }
  trace.lambda_star = trace.rounds.back().lambda_star;
  return {trace.lambda_star, std::move(trace)};
}

nlohmann::json to_json(const SearchTrace& trace) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : trace.rounds) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : r.points) {
      nlohmann::json per_seed = nlohmann::json::array();
      for (const auto& sv : p.values) {
        per_seed.push_back({{"seed", sv.seed}, {"value", std::isfinite(sv.value) ? nlohmann::json(sv.value) : nullptr}});
      }
      points.push_back({{"lambda", p.lambda},
                        {"mean", std::isfinite(p.mean) ? nlohmann::json(p.mean) : nullptr},
                        {"per_seed", per_seed}});
    }
    rounds.push_back({{"round", r.round},
                      {"interval", {r.interval.lo, r.interval.hi}},
                      {"lambda_star", r.lambda_star},
                      {"points", points}});
  }
  return {{"loss", trace.loss},
          {"objective", to_string(trace.objective)},
          {"lambda_star", trace.lambda_star},
          {"rounds", rounds}};
}

void write_trace_csv(const SearchTrace& trace, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + file.string());
  out.precision(17);
  out << "round,lambda,seed,objective\n";
  for (const auto& r : trace.rounds) {
    for (const auto& p : r.points) {
      for (const auto& sv : p.values) {
        out << r.round << ',' << p.lambda << ',' << sv.seed << ',';
        if (std::isfinite(sv.value)) out << sv.value;
        out << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed: " + file.string());
}

}  // namespace truthprobe
