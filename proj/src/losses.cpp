#include "truthprobe/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "truthprobe/error.hpp"
#include "truthprobe/random.hpp"

namespace truthprobe {

std::string_view to_string(LossVariant v) {
  switch (v) {
    case LossVariant::ccs: return "ccs";
    case LossVariant::md: return "md";
    case LossVariant::ma: return "ma";
    case LossVariant::smr: return "smr";
    case LossVariant::supervised: return "supervised";
  }
  return "?";
}

LossVariant loss_variant_from_string(std::string_view name) {
  if (name == "ccs") return LossVariant::ccs;
  if (name == "md") return LossVariant::md;
  if (name == "ma") return LossVariant::ma;
  if (name == "smr") return LossVariant::smr;
  if (name == "supervised") return LossVariant::supervised;
  throw ValidationError("unknown loss '" + std::string(name) + "'");
}

std::string_view to_string(SignMode m) { return m == SignMode::literal ? "literal" : "md_consistent"; }

SignMode sign_mode_from_string(std::string_view name) {
  if (name == "literal") return SignMode::literal;
  if (name == "md_consistent") return SignMode::md_consistent;
  throw ValidationError("unknown sign mode '" + std::string(name) + "'");
}

void LossSpec::validate() const {
  if (uses_lambda() && !(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError("lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  const bool takes_sign = variant == LossVariant::ma || variant == LossVariant::smr;
  if (takes_sign && !sign_mode) throw ValidationError(std::string(to_string(variant)) + " needs a sign mode");
  if (!takes_sign && sign_mode) throw ValidationError("sign mode only applies to ma/smr");
}

std::string LossSpec::describe() const {
  std::ostringstream os;
  os << to_string(variant);
  if (uses_lambda()) os << "(lambda=" << lambda;
  if (sign_mode) os << ", " << to_string(*sign_mode);
  if (uses_lambda()) os << ")";
  return os.str();
}

PairStatistics PairStatistics::from(const ContrastActivationSet& set) {
  return {set.displacements(), set.sums()};
}

Objective::Objective(LossSpec spec, const ContrastActivationSet& set)
    : spec_(spec), set_(&set), stats_(PairStatistics::from(set)) {
  spec_.validate();
  set.validate();
  if (spec_.variant == LossVariant::supervised && !set.has_labels()) {
    throw ValidationError("supervised loss needs a labelled set");
  }
}

double Objective::value(const Prober& prober) const { return value_and_gradient(prober, nullptr); }

Gradient Objective::gradient(const Prober& prober) const {
  Gradient g;
  value_and_gradient(prober, &g);
  return g;
}

double Objective::value_and_gradient(const Prober& prober, Gradient* grad) const {
  if (prober.d() != set_->d()) {
    throw ValidationError("prober dimension " + std::to_string(prober.d()) + " does not match data dimension " +
                          std::to_string(set_->d()));
  }
  switch (spec_.variant) {
    case LossVariant::ccs: return ccs(prober, grad);
    case LossVariant::supervised: return supervised(prober, grad);
    default: break;
  }
  const double r = prober.theta.norm();
  if (!(r > 1e-12)) throw ValidationError("constrained loss evaluated at a zero weight vector");
  const Vector unit = prober.theta / r;
  if (grad == nullptr) return on_sphere(unit, nullptr);

  Vector dir_grad;
  const double value = on_sphere(unit, &dir_grad);
  // Chain rule through theta / |theta|: (I - w w^T) g / r.
  grad->theta = (dir_grad - unit * unit.dot(dir_grad)) / r;
  grad->bias = 0.0;
  return value;
}

double Objective::ccs(const Prober& prober, Gradient* grad) const {
  const Matrix& pp = set_->phi_plus;
  const Matrix& pm = set_->phi_minus;
  const Index n = pp.rows();
  const Vector zp = (pp * prober.theta).array() + prober.bias;
  const Vector zm = (pm * prober.theta).array() + prober.bias;

  Vector gp(n), gm(n);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double p = sigmoid(zp[i]);
    const double q = sigmoid(zm[i]);
    const double c = 1.0 - p - q;
    const bool plus_is_min = p <= q;
    const double m = plus_is_min ? p : q;
    total += c * c + m * m;
    const double dp = p * (1.0 - p);
    const double dq = q * (1.0 - q);
    gp[i] = -2.0 * c * dp + (plus_is_min ? 2.0 * p * dp : 0.0);
    gm[i] = -2.0 * c * dq + (plus_is_min ? 0.0 : 2.0 * q * dq);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad != nullptr) {
    grad->theta = (pp.transpose() * gp + pm.transpose() * gm) * inv_n;
    grad->bias = (gp.sum() + gm.sum()) * inv_n;
  }
  return total * inv_n;
}

double Objective::supervised(const Prober& prober, Gradient* grad) const {
  const Matrix& pp = set_->phi_plus;
  const Matrix& pm = set_->phi_minus;
  const auto& labels = *set_->labels;
  const Index n = pp.rows();
  const Vector zp = (pp * prober.theta).array() + prober.bias;
  const Vector zm = (pm * prober.theta).array() + prober.bias;

  Vector gp(n), gm(n);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double y = labels[static_cast<std::size_t>(i)];
    // phi+ has target y, phi- has target 1 - y.
    total -= y * log_sigmoid(zp[i]) + (1.0 - y) * log_sigmoid(-zp[i]);
    total -= (1.0 - y) * log_sigmoid(zm[i]) + y * log_sigmoid(-zm[i]);
    gp[i] = sigmoid(zp[i]) - y;
    gm[i] = sigmoid(zm[i]) - (1.0 - y);
  }
  const double inv = 1.0 / (2.0 * static_cast<double>(n));
  if (grad != nullptr) {
    grad->theta = (pp.transpose() * gp + pm.transpose() * gm) * inv;
    grad->bias = (gp.sum() + gm.sum()) * inv;
  }
  return total * inv;
}

double Objective::on_sphere(const Vector& unit, Vector* dir_grad) const {
  const Matrix& u = stats_.u;
  const double n = static_cast<double>(u.rows());
  const double lambda = spec_.lambda;
  const Vector a = u * unit;

  if (spec_.variant == LossVariant::md) {
    const Vector b = stats_.v * unit;
    const double sd2 = a.squaredNorm() / n;
    const double sm2 = b.squaredNorm() / n;
    if (dir_grad != nullptr) {
      *dir_grad = (2.0 * (lambda - 1.0) / n) * (u.transpose() * a) + (2.0 * lambda / n) * (stats_.v.transpose() * b);
    }
    return (lambda - 1.0) * sd2 + lambda * sm2;
  }

  // MA and SMR share the spread term: population std of |theta . u_i|.
  const Vector mag = a.cwiseAbs();
  const double mean_abs = mag.sum() / n;
  const Vector centered = mag.array() - mean_abs;
  const double spread = std::sqrt(centered.squaredNorm() / n);
  const Vector sgn = a.unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });

  double centre = 0.0;
  Vector centre_grad;
  if (spec_.variant == LossVariant::ma) {
    centre = mean_abs;
    if (dir_grad != nullptr) centre_grad = u.transpose() * sgn / n;
  } else {
    centre = std::sqrt(a.squaredNorm() / n);
    if (dir_grad != nullptr) {
      centre_grad = centre > 0 ? Vector(u.transpose() * a / (n * centre)) : Vector::Zero(u.cols());
    }
  }
  const double centre_coef = *spec_.sign_mode == SignMode::literal ? 1.0 - lambda : lambda - 1.0;
  if (dir_grad != nullptr) {
    Vector spread_grad = Vector::Zero(u.cols());
    if (spread > 0) spread_grad = u.transpose() * sgn.cwiseProduct(centered) / (n * spread);
    *dir_grad = centre_coef * centre_grad + lambda * spread_grad;
  }
  return centre_coef * centre + lambda * spread;
}

double ccs_loss(const Prober& prober, const ContrastActivationSet& set) {
  return Objective(LossSpec::ccs(), set).value(prober);
}

double sigma_d2(const Direction& dir, const ContrastActivationSet& set) {
  return (set.displacements() * dir.vector()).squaredNorm() / static_cast<double>(set.n());
}

double sigma_m2(const Direction& dir, const ContrastActivationSet& set) {
  return (set.sums() * dir.vector()).squaredNorm() / static_cast<double>(set.n());
}

namespace {
Prober unit_prober(const Direction& dir) { return {dir.vector(), 0.0, Constraint::unit_norm}; }
}  // namespace

double md_loss(const Direction& dir, const ContrastActivationSet& set, double lambda) {
  return Objective(LossSpec::md(lambda), set).value(unit_prober(dir));
}

double ma_loss(const Direction& dir, const ContrastActivationSet& set, double lambda, SignMode mode) {
  return Objective(LossSpec::ma(lambda, mode), set).value(unit_prober(dir));
}

double smr_loss(const Direction& dir, const ContrastActivationSet& set, double lambda, SignMode mode) {
  return Objective(LossSpec::smr(lambda, mode), set).value(unit_prober(dir));
}

double supervised_loss(const Prober& prober, const ContrastActivationSet& set) {
  return Objective(LossSpec::supervised(), set).value(prober);
}

double loss(const LossSpec& spec, const Prober& prober, const ContrastActivationSet& set) {
  return Objective(spec, set).value(prober);
}

Gradient gradient(const LossSpec& spec, const Prober& prober, const ContrastActivationSet& set) {
  return Objective(spec, set).gradient(prober);
}

PcaResult principal_component(const Matrix& samples, double tolerance, int max_iterations) {
  const Index n = samples.rows();
  const Index d = samples.cols();
  if (n < 2) throw ValidationError("principal component needs at least 2 samples");
  if (max_iterations < 1 || !(tolerance > 0)) throw ValidationError("power iteration needs tolerance > 0 and >= 1 iteration");
  Matrix centered = samples;
  centered.rowwise() -= samples.colwise().mean();
  const Eigen::MatrixXd moment = centered.transpose() * centered / static_cast<double>(n);
  if (!(moment.trace() > 0)) throw ValidationError("principal component of an all-constant sample matrix");

  // Fixed pseudo-random start: never exactly orthogonal to the top eigenvector in practice.
  Rng rng(0x5eedULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  for (Index j = 0; j < d; ++j) v[j] = normal(rng);
  v.normalize();

  PcaResult result;
  for (int it = 1; it <= max_iterations; ++it) {
    Vector w = moment * v;
    const double rayleigh = v.dot(w);
    result.residual = (w - rayleigh * v).norm();
    result.iterations = it;
    result.eigenvalue = rayleigh;
    if (result.residual <= tolerance * std::max(rayleigh, 1e-300)) break;
    const double norm = w.norm();
    if (!(norm > 0)) throw ValidationError("power iteration collapsed to the zero vector");
    v = w / norm;
  }
  if (!(result.residual <= tolerance * std::max(result.eigenvalue, 1e-300))) {
    std::ostringstream os;
    os << "power iteration did not converge in " << max_iterations << " iterations (residual " << result.residual
       << ")";
    throw ConvergenceError(os.str(), result.residual);
  }
  // Coordinates at round-off level do not count as nonzero for the sign rule.
  for (Index j = 0; j < d; ++j) {
    if (std::abs(v[j]) > 1e-12) {
      if (v[j] < 0) v = -v;
      break;
    }
  }
  result.direction = std::move(v);
  return result;
}

Direction pca_direction(const ContrastActivationSet& set) {
  set.validate();
  const Matrix u = set.displacements();
  if (u.isZero(0.0)) throw ValidationError("displacement matrix is zero");
  return Direction(principal_component(u).direction);
}

}  // namespace truthprobe
