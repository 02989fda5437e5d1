#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "truthprobe/dataset.hpp"
#include "truthprobe/prober.hpp"

namespace truthprobe {

enum class LossVariant { ccs, md, ma, smr, supervised };

/// How the mean term enters the MA/SMR losses.
///   literal:       (1 - lambda) * mean + lambda * std
///   md_consistent: (lambda - 1) * mean + lambda * std  (separation is rewarded, as in MD)
enum class SignMode { literal, md_consistent };

std::string_view to_string(LossVariant v);
LossVariant loss_variant_from_string(std::string_view name);
std::string_view to_string(SignMode m);
SignMode sign_mode_from_string(std::string_view name);

/// Upper end of every lambda grid. A loss itself accepts lambda in [0, 1].
inline constexpr double kMaxLambda = 0.999;

struct LossSpec {
  LossVariant variant = LossVariant::ccs;
  double lambda = 0.0;
  std::optional<SignMode> sign_mode;

  static LossSpec ccs() { return {LossVariant::ccs, 0.0, std::nullopt}; }
  static LossSpec supervised() { return {LossVariant::supervised, 0.0, std::nullopt}; }
  static LossSpec md(double lambda) { return {LossVariant::md, lambda, std::nullopt}; }
  static LossSpec ma(double lambda, SignMode mode = SignMode::md_consistent) { return {LossVariant::ma, lambda, mode}; }
  static LossSpec smr(double lambda, SignMode mode = SignMode::md_consistent) {
    return {LossVariant::smr, lambda, mode};
  }

  /// Same variant and sign mode, different lambda.
  LossSpec with_lambda(double new_lambda) const { return {variant, new_lambda, sign_mode}; }

  bool unit_constrained() const {
    return variant == LossVariant::md || variant == LossVariant::ma || variant == LossVariant::smr;
  }
  bool uses_lambda() const { return unit_constrained(); }
  Constraint constraint() const { return unit_constrained() ? Constraint::unit_norm : Constraint::unconstrained; }
  void validate() const;
  std::string describe() const;
};

/// u_i = phi+_i - phi-_i and v_i = phi+_i + phi-_i, row per pair.
struct PairStatistics {
  Matrix u;
  Matrix v;

  static PairStatistics from(const ContrastActivationSet& set);
};

struct Gradient {
  Vector theta;
  double bias = 0.0;
};

/// A loss bound to one data set. Precomputes the pair statistics so repeated
/// evaluation inside a training loop costs only matrix-vector products.
///
/// Unit-constrained variants are evaluated at theta/|theta| and differentiated
/// with respect to the raw theta through that normalization.
class Objective {
 public:
  Objective(LossSpec spec, const ContrastActivationSet& set);

  double value(const Prober& prober) const;
  Gradient gradient(const Prober& prober) const;
  /// Value and gradient in one pass.
  double evaluate(const Prober& prober, Gradient& grad) const { return value_and_gradient(prober, &grad); }

  const LossSpec& spec() const { return spec_; }
  const ContrastActivationSet& set() const { return *set_; }

 private:
  double value_and_gradient(const Prober& prober, Gradient* grad) const;
  double ccs(const Prober& prober, Gradient* grad) const;
  double supervised(const Prober& prober, Gradient* grad) const;
  // Loss of a unit direction; `dir_grad` receives d loss / d direction.
  double on_sphere(const Vector& unit, Vector* dir_grad) const;

  LossSpec spec_;
  const ContrastActivationSet* set_;
  PairStatistics stats_;
};

double ccs_loss(const Prober& prober, const ContrastActivationSet& set);
double sigma_d2(const Direction& dir, const ContrastActivationSet& set);
double sigma_m2(const Direction& dir, const ContrastActivationSet& set);
double md_loss(const Direction& dir, const ContrastActivationSet& set, double lambda);
double ma_loss(const Direction& dir, const ContrastActivationSet& set, double lambda, SignMode mode);
double smr_loss(const Direction& dir, const ContrastActivationSet& set, double lambda, SignMode mode);
/// Mean BCE over all 2n statements: phi+_i with target y_i, phi-_i with 1 - y_i.
double supervised_loss(const Prober& prober, const ContrastActivationSet& set);

double loss(const LossSpec& spec, const Prober& prober, const ContrastActivationSet& set);
Gradient gradient(const LossSpec& spec, const Prober& prober, const ContrastActivationSet& set);

struct PcaResult {
  Vector direction;
  int iterations = 0;
  double residual = 0.0;
  double eigenvalue = 0.0;
};

inline constexpr double kPcaTolerance = 1e-10;
inline constexpr int kPcaMaxIterations = 10000;

/// Top eigenvector of the centered second-moment matrix of the rows of
/// `samples`, by power iteration. The sign is fixed so the first nonzero
/// coordinate is positive. Throws ConvergenceError with the achieved residual.
PcaResult principal_component(const Matrix& samples, double tolerance = kPcaTolerance,
                              int max_iterations = kPcaMaxIterations);

/// First principal component of the displacements.
Direction pca_direction(const ContrastActivationSet& set);

}  // namespace truthprobe
