#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "truthprobe/dataset.hpp"
#include "truthprobe/report.hpp"
#include "truthprobe/search.hpp"
#include "truthprobe/trainer.hpp"

namespace truthprobe {

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "TRUTHPROBE_OUT";

// Prober persistence: {d, theta, bias, constraint, seed, loss_variant, lambda, final_loss}.
nlohmann::json to_json(const TrainedProber& trained);
TrainedProber trained_prober_from_json(const nlohmann::json& j);
void save_prober(const TrainedProber& trained, const std::filesystem::path& file);
TrainedProber load_prober(const std::filesystem::path& file);

/// An ensemble file: {"probers": [...]}; a directory is read as its ccs_reference.json.
void save_ensemble(const std::vector<TrainedProber>& probers, const std::filesystem::path& file);
std::vector<TrainedProber> load_ensemble(const std::filesystem::path& path);
/// A single prober file yields one element; an ensemble file or directory yields all of them.
std::vector<TrainedProber> load_probers(const std::filesystem::path& path);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json to_json(const SyntheticConfig& config);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j, SyntheticConfig base = {});

/// Split, then normalize with train-split statistics applied to both splits.
/// An already-normalized input is split as is.
struct PreparedData {
  ContrastActivationSet train;
  ContrastActivationSet test;
  std::optional<NormalizationStats> stats;
  SplitSpec split;
};
PreparedData prepare_data(const ContrastActivationSet& raw, double train_fraction, std::uint64_t split_seed);

struct DatasetSource {
  std::string id;
  std::string model = "synthetic";
  std::optional<std::filesystem::path> path;
  std::optional<SyntheticConfig> synthetic;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::vector<DatasetSource> datasets;
  std::vector<std::string> losses{kLossNames.begin(), kLossNames.end()};
  TrainConfig train;
  double train_fraction = 0.6;
  int best_of = 10;
  int ccs_reference_size = 20;
  int random_probers = 10;
  int points_per_round = 11;
  int seeds_per_point = 3;
  int rounds = 2;
  SignMode sign_mode = SignMode::md_consistent;
  int hist_bins = 40;
  bool compare_paper = false;
  std::optional<std::filesystem::path> output_root;

  /// Throws ValidationError for unknown losses, missing paths or bad sizes.
  void validate() const;
  /// Canonical form, also the input of the output-directory digest.
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& file);
  std::string digest() const;
};

struct PipelineOptions {
  std::size_t jobs = 1;
  std::optional<std::filesystem::path> output_root;  // overrides config and env
  bool verbose = false;
};

struct PipelineResult {
  std::filesystem::path output_dir;
  EvalReport report;
  std::vector<bool> cache_hits;  // per dataset, CCS reference reuse
};

/// End to end per dataset: split -> normalize -> CCS reference (cached by
/// content digest) -> lambda searches -> best-of-k per loss -> report.
/// Writes everything under <root>/<config digest>/.
PipelineResult run_pipeline(const ExperimentConfig& config, const PipelineOptions& options);

std::filesystem::path default_output_root();

}  // namespace truthprobe
