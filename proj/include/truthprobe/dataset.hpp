#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "truthprobe/linalg.hpp"

namespace truthprobe {

using Meta = std::map<std::string, std::string>;
using Labels = std::vector<std::uint8_t>;

/// Paired activations for n contrast pairs of dimension d. Row i of
/// `phi_plus` / `phi_minus` holds the representation of the "yes" / "no"
/// member of pair i. A label of 1 means the true answer to question i is "yes".
struct ContrastActivationSet {
  Matrix phi_plus;
  Matrix phi_minus;
  std::optional<Labels> labels;
  Meta meta;
  bool normalized = false;

  Index n() const { return phi_plus.rows(); }
  Index d() const { return phi_plus.cols(); }
  bool has_labels() const { return labels.has_value(); }

  /// Throws ValidationError when a shape, finiteness or label invariant fails.
  void validate() const;

  /// Displacements u_i = phi+_i - phi-_i, one per row.
  Matrix displacements() const { return phi_plus - phi_minus; }
  /// Pair sums v_i = phi+_i + phi-_i, one per row.
  Matrix sums() const { return phi_plus + phi_minus; }
};

/// Content digest over shapes, values, labels and the normalized flag.
std::string digest(const ContrastActivationSet& set);

struct NormalizationStats {
  Vector mu_plus;
  Vector mu_minus;
  /// Effective divisors: population std, or 1 where the std fell below epsilon.
  Vector sigma_plus;
  Vector sigma_minus;
  double epsilon = 1e-8;
};

inline constexpr double kDefaultStdFloor = 1e-8;

/// Standardizes each coordinate of phi+ and phi- independently using their own
/// population mean and std. Requires n >= 2 and an unnormalized input.
std::pair<ContrastActivationSet, NormalizationStats> normalize(const ContrastActivationSet& set,
                                                               double epsilon = kDefaultStdFloor);

/// Applies statistics fitted elsewhere (normally on the train split).
ContrastActivationSet apply_normalization(const ContrastActivationSet& set, const NormalizationStats& stats);

struct SplitSpec {
  std::vector<Index> train_indices;
  std::vector<Index> test_indices;
  std::uint64_t seed = 0;
};

struct SplitResult {
  ContrastActivationSet train;
  ContrastActivationSet test;
  SplitSpec spec;
};

/// Deterministic random split. Train size is round(n * train_fraction).
SplitResult split(const ContrastActivationSet& set, double train_fraction, std::uint64_t seed);

/// Rows of `set` selected by `indices`, in that order.
ContrastActivationSet subset(const ContrastActivationSet& set, const std::vector<Index>& indices);

struct SyntheticConfig {
  Index n = 1000;
  Index d = 64;
  double signal_scale = 1.5;
  double nuisance_scale = 5.0;
  double noise_scale = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  ContrastActivationSet set;
  Vector truth_direction;
  Vector nuisance_direction;
};

/// Plants a truth axis t (pair displacements) and a nuisance axis g (shared
/// pair midpoints):
///   phi+_i =  s_i*signal*t + c_i*nuisance*g + noise
///   phi-_i = -s_i*signal*t + c_i*nuisance*g + noise
/// with s_i = +1 for label 1, -1 for label 0, and c_i ~ N(0, 1).
SyntheticData gen_synthetic(const SyntheticConfig& config);

/// Rounds every value to the nearest 32-bit float (the storage precision).
ContrastActivationSet quantize_to_storage(const ContrastActivationSet& set);

/// Container I/O. A container is a directory with manifest.json,
/// phi_plus.bin, phi_minus.bin and optionally labels.bin.
void save(const ContrastActivationSet& set, const std::filesystem::path& dir);
ContrastActivationSet load(const std::filesystem::path& dir);

/// d little-endian float32 values.
void save_direction(const Vector& direction, const std::filesystem::path& file);
Vector load_direction(const std::filesystem::path& file);

}  // namespace truthprobe
