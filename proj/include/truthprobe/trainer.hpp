#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "truthprobe/dataset.hpp"
#include "truthprobe/losses.hpp"
#include "truthprobe/prober.hpp"

namespace truthprobe {

enum class Optimizer { gd, adam };

std::string_view to_string(Optimizer o);
Optimizer optimizer_from_string(std::string_view name);

struct TrainConfig {
  int epochs = 1000;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::gd;

  void validate() const;
};

struct TrainedProber {
  Prober prober;
  double final_train_loss = 0.0;
  std::uint64_t seed = 0;
  LossSpec loss_spec;
  std::string config_digest;
};

/// Called after every update with the epoch index (1-based) and the new prober.
using EpochObserver = std::function<void(int epoch, const Prober& prober)>;

/// Full-batch training from random_init(d, config.seed). Unit-constrained
/// losses are re-projected onto the sphere after every step.
TrainedProber train_one(const LossSpec& spec, const ContrastActivationSet& train_set, const TrainConfig& config,
                        const EpochObserver& observer = {});

struct RunRecord {
  std::uint64_t seed = 0;
  std::optional<double> final_train_loss;  // empty when the run diverged
  std::string error;
};

struct BestOfResult {
  TrainedProber best;
  std::vector<RunRecord> runs;  // sorted by seed
};

/// k runs with seeds config.seed + 0..k-1; keeps the lowest final loss
/// (ties go to the lowest seed). Diverged runs are skipped.
BestOfResult train_best_of(const LossSpec& spec, const ContrastActivationSet& train_set, const TrainConfig& config,
                           int k = 10, std::size_t jobs = 1);

/// k CCS probers with seeds config.seed + 0..k-1, all kept.
std::vector<TrainedProber> train_ccs_reference(const ContrastActivationSet& train_set, const TrainConfig& config,
                                               int k = 20, std::size_t jobs = 1);

/// k untrained unit-norm probers with seeds seed + 0..k-1.
std::vector<Prober> random_baseline(Index d, int k = 10, std::uint64_t seed = 0);

TrainedProber fit_supervised(const ContrastActivationSet& train_set, const TrainConfig& config);

/// Unit-norm prober along the first principal component of the displacements.
Prober fit_pca(const ContrastActivationSet& train_set);

/// Digest of (loss spec, train config, dataset).
std::string config_digest(const LossSpec& spec, const TrainConfig& config, const ContrastActivationSet& set);

}  // namespace truthprobe
