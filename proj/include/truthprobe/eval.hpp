#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "truthprobe/dataset.hpp"
#include "truthprobe/prober.hpp"

namespace truthprobe {

/// positive: pair score > 0.5 predicts label 1; negative: it predicts label 0.
enum class Orientation { positive, negative };
enum class OrientationMode { automatic, positive, negative };

std::string_view to_string(Orientation o);

struct AccuracyResult {
  double accuracy = 0.0;
  Orientation orientation = Orientation::positive;
};

/// Classifies every pair by its pair score against 0.5. A score of exactly 0.5
/// counts as half correct. In automatic mode the orientation with the higher
/// accuracy on `set` is chosen (positive on ties).
AccuracyResult accuracy(const Prober& prober, const ContrastActivationSet& set,
                        OrientationMode mode = OrientationMode::automatic);

/// Mean over the reference of |cos(direction, member)|.
double mean_abs_cosine(const Direction& direction, std::span<const Direction> reference);

/// Mean |cos| over all unordered pairs of distinct members.
double self_similarity(std::span<const Direction> reference);

std::vector<Direction> directions_of(std::span<const Prober> probers);

/// log10 of P(cos >= c) for two independent uniform unit vectors in R^d:
/// P = I_{1-c^2}((d-1)/2, 1/2) / 2, evaluated entirely in log space.
double random_cosine_tail(int d, double c);

/// log of the regularized incomplete beta function I_x(a, b).
double log_incomplete_beta(double x, double a, double b);

struct ProjectionRow {
  Index pair = 0;
  char member = '+';  // '+' or '-'
  int label = -1;     // pair label, -1 when unlabelled
  double pc1_projection = 0.0;
  double theta_projection = 0.0;
};

/// One row per statement activation (2n rows). PC1 is taken over the
/// statement activations themselves, not the displacements.
std::vector<ProjectionRow> projection_table(const ContrastActivationSet& set, const Prober& prober);

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  long count = 0;
};

/// Counts of pair scores over `bin_count` uniform bins on [0, 1].
std::vector<HistogramBin> output_histogram(const Prober& prober, const ContrastActivationSet& set, int bin_count);

void write_projection_csv(const std::vector<ProjectionRow>& rows, const std::filesystem::path& file);
std::vector<ProjectionRow> read_projection_csv(const std::filesystem::path& file);
void write_histogram_csv(const std::vector<HistogramBin>& bins, const std::filesystem::path& file);

}  // namespace truthprobe
