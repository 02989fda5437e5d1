#include "truthprobe/prober.hpp"

#include <cmath>
#include <random>
#include <string>

#include "truthprobe/error.hpp"
#include "truthprobe/random.hpp"

namespace truthprobe {

namespace {
constexpr double kMinNorm = 1e-12;
}

std::string_view to_string(Constraint c) {
  return c == Constraint::unit_norm ? "unit_norm" : "unconstrained";
}

Constraint constraint_from_string(std::string_view name) {
  if (name == "unit_norm") return Constraint::unit_norm;
  if (name == "unconstrained") return Constraint::unconstrained;
  throw ValidationError("unknown constraint '" + std::string(name) + "'");
}

void Prober::validate() const {
  if (theta.size() < 1) throw ValidationError("prober has empty theta");
  if (!theta.allFinite() || !std::isfinite(bias)) throw ValidationError("prober has non-finite parameters");
  if (constraint == Constraint::unit_norm) {
    if (std::abs(theta.norm() - 1.0) > 1e-9) throw ValidationError("unit-norm prober has |theta| != 1");
    if (bias != 0.0) throw ValidationError("unit-norm prober must have zero bias");
  }
}

Direction::Direction(Vector v) : v_(std::move(v)) {
  const double norm = v_.norm();
  if (!(norm > kMinNorm)) throw ValidationError("cannot take the direction of a zero vector");
  v_ /= norm;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  if (z >= 0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

double logit(const Prober& prober, const Eigen::Ref<const Vector>& phi) {
  if (phi.size() != prober.d()) {
    throw ValidationError("input has dimension " + std::to_string(phi.size()) + ", prober expects " +
                          std::to_string(prober.d()));
  }
  return prober.theta.dot(phi) + prober.bias;
}

double predict(const Prober& prober, const Eigen::Ref<const Vector>& phi) { return sigmoid(logit(prober, phi)); }

double pair_score(const Prober& prober, const Eigen::Ref<const Vector>& phi_plus,
                  const Eigen::Ref<const Vector>& phi_minus) {
  return 0.5 * (predict(prober, phi_plus) + (1.0 - predict(prober, phi_minus)));
}

Prober random_init(Index d, std::uint64_t seed, Constraint constraint) {
  if (d < 1) throw ValidationError("prober dimension must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  Prober p;
  p.theta.resize(d);
  for (Index j = 0; j < d; ++j) p.theta[j] = normal(rng);
  p.constraint = constraint;
  if (constraint == Constraint::unit_norm) p.theta.normalize();
  return p;
}

Prober project_unit(const Prober& prober) {
  const double norm = prober.theta.norm();
  if (!(norm > kMinNorm)) throw ValidationError("cannot project a zero weight vector onto the unit sphere");
  Prober out;
  out.theta = prober.theta / norm;
  out.bias = 0.0;
  out.constraint = Constraint::unit_norm;
  return out;
}

Direction direction(const Prober& prober) { return Direction(prober.theta); }

}  // namespace truthprobe
