#pragma once

#include <cstdint>
#include <string_view>

#include "truthprobe/linalg.hpp"

namespace truthprobe {

enum class Constraint { unconstrained, unit_norm };

std::string_view to_string(Constraint c);
Constraint constraint_from_string(std::string_view name);

/// Linear prober p(phi) = sigmoid(theta . phi + bias).
/// Unit-norm probers keep |theta| = 1 and carry no bias.
struct Prober {
  Vector theta;
  double bias = 0.0;
  Constraint constraint = Constraint::unconstrained;

  Index d() const { return theta.size(); }
  void validate() const;
};

/// A unit vector; constructing one from a non-unit vector normalizes it.
class Direction {
 public:
  explicit Direction(Vector v);
  const Vector& vector() const { return v_; }
  Index d() const { return v_.size(); }
  double dot(const Direction& other) const { return v_.dot(other.v_); }

 private:
  Vector v_;
};

/// Overflow-free logistic function.
double sigmoid(double z);
/// log(sigmoid(z)) without cancellation for large |z|.
double log_sigmoid(double z);

double logit(const Prober& prober, const Eigen::Ref<const Vector>& phi);
double predict(const Prober& prober, const Eigen::Ref<const Vector>& phi);

/// Mean of p(phi+) and 1 - p(phi-): the pair's "yes" score.
double pair_score(const Prober& prober, const Eigen::Ref<const Vector>& phi_plus,
                  const Eigen::Ref<const Vector>& phi_minus);

/// theta_j ~ N(0, 1/d), bias 0; renormalized to unit length for unit_norm.
Prober random_init(Index d, std::uint64_t seed, Constraint constraint);

Prober project_unit(const Prober& prober);
Direction direction(const Prober& prober);

}  // namespace truthprobe
