#include "truthprobe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "truthprobe/digest.hpp"
#include "truthprobe/error.hpp"
#include "truthprobe/parallel.hpp"
#include "truthprobe/random.hpp"

namespace truthprobe {

namespace {

// Seed offset for the single re-initialization after a zero-norm projection.
constexpr std::uint64_t kReinitOffset = 0x9e3779b97f4a7c15ULL;

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

class AdamState {
 public:
  explicit AdamState(Index d) : m_theta_(Vector::Zero(d)), v_theta_(Vector::Zero(d)) {}

  void step(Prober& p, const Gradient& g, double lr) {
    ++t_;
    m_theta_ = kAdamBeta1 * m_theta_ + (1 - kAdamBeta1) * g.theta;
    v_theta_ = kAdamBeta2 * v_theta_ + (1 - kAdamBeta2) * g.theta.cwiseAbs2();
    m_bias_ = kAdamBeta1 * m_bias_ + (1 - kAdamBeta1) * g.bias;
    v_bias_ = kAdamBeta2 * v_bias_ + (1 - kAdamBeta2) * g.bias * g.bias;
    const double c1 = 1 - std::pow(kAdamBeta1, t_);
    const double c2 = 1 - std::pow(kAdamBeta2, t_);
    p.theta.array() -= lr * (m_theta_.array() / c1) / ((v_theta_.array() / c2).sqrt() + kAdamEpsilon);
    p.bias -= lr * (m_bias_ / c1) / (std::sqrt(v_bias_ / c2) + kAdamEpsilon);
  }

 private:
  Vector m_theta_;
  Vector v_theta_;
  double m_bias_ = 0.0;
  double v_bias_ = 0.0;
  int t_ = 0;
};

void check_finite(double value, int epoch, const LossSpec& spec) {
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "training " << spec.describe() << " diverged at epoch " << epoch << " (loss " << value << ")";
    throw DivergenceError(os.str(), epoch);
  }
}

}  // namespace

std::string config_digest(const LossSpec& spec, const TrainConfig& config, const ContrastActivationSet& set) {
  Sha256 h;
  h.update(std::string_view("train-config/1"));
  h.update(to_string(spec.variant)).update(spec.lambda);
  h.update(spec.sign_mode ? to_string(*spec.sign_mode) : std::string_view("-"));
  h.update(static_cast<std::uint64_t>(config.epochs)).update(config.learning_rate);
  h.update(config.seed).update(to_string(config.optimizer));
  h.update(std::string_view(digest(set)));
  return h.hex();
}

std::string_view to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "gd"; }

Optimizer optimizer_from_string(std::string_view name) {
  if (name == "gd") return Optimizer::gd;
  if (name == "adam") return Optimizer::adam;
  throw ValidationError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be > 0");
}

TrainedProber train_one(const LossSpec& spec, const ContrastActivationSet& train_set, const TrainConfig& config,
                        const EpochObserver& observer) {
  config.validate();
  if (!train_set.normalized) throw ValidationError("training requires a normalized set");
  const Objective objective(spec, train_set);
  const bool constrained = spec.unit_constrained();

  Prober prober = random_init(train_set.d(), config.seed, spec.constraint());
  AdamState adam(train_set.d());
  bool reinitialized = false;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Gradient g;
    check_finite(objective.evaluate(prober, g), epoch, spec);
    if (!g.theta.allFinite() || !std::isfinite(g.bias)) check_finite(NAN, epoch, spec);

    if (config.optimizer == Optimizer::adam) {
      adam.step(prober, g, config.learning_rate);
    } else {
      prober.theta -= config.learning_rate * g.theta;
      prober.bias -= config.learning_rate * g.bias;
    }
    if (!prober.theta.allFinite() || !std::isfinite(prober.bias)) check_finite(NAN, epoch, spec);

    if (constrained) {
      if (!(prober.theta.norm() > 1e-12)) {
        if (reinitialized) {
          throw DivergenceError("weight vector collapsed to zero twice (epoch " + std::to_string(epoch) + ")", epoch);
        }
        reinitialized = true;
        prober = random_init(train_set.d(), config.seed + kReinitOffset, spec.constraint());
        adam = AdamState(train_set.d());
      } else {
        prober = project_unit(prober);
      }
    }
    if (observer) observer(epoch, prober);
  }

  const double final_loss = objective.value(prober);
  check_finite(final_loss, config.epochs, spec);
  return {std::move(prober), final_loss, config.seed, spec, config_digest(spec, config, train_set)};
}

BestOfResult train_best_of(const LossSpec& spec, const ContrastActivationSet& train_set, const TrainConfig& config,
                           int k, std::size_t jobs) {
  if (k < 1) throw ValidationError("best-of needs k >= 1");
  struct Outcome {
    std::optional<TrainedProber> trained;
    std::string error;
  };
  auto outcomes = parallel_map(static_cast<std::size_t>(k), jobs, [&](std::size_t i) {
    TrainConfig c = config;
    c.seed = config.seed + i;
    try {
      return Outcome{train_one(spec, train_set, c), {}};
    } catch (const DivergenceError& e) {
      return Outcome{std::nullopt, e.what()};
    }
  });

  BestOfResult result;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    RunRecord rec;
    rec.seed = config.seed + i;
    if (o.trained) {
      rec.final_train_loss = o.trained->final_train_loss;
      // Strict < keeps the lowest seed on ties.
      if (!best || o.trained->final_train_loss < outcomes[*best].trained->final_train_loss) best = i;
    } else {
      rec.error = o.error;
    }
    result.runs.push_back(std::move(rec));
  }
  if (!best) throw DivergenceError("all " + std::to_string(k) + " runs of " + spec.describe() + " diverged", -1);
  result.best = std::move(*outcomes[*best].trained);
  return result;
}

std::vector<TrainedProber> train_ccs_reference(const ContrastActivationSet& train_set, const TrainConfig& config, int k,
                                               std::size_t jobs) {
  if (k < 2) throw ValidationError("a CCS reference ensemble needs k >= 2");
  return parallel_map(static_cast<std::size_t>(k), jobs, [&](std::size_t i) {
    TrainConfig c = config;
    c.seed = config.seed + i;
    return train_one(LossSpec::ccs(), train_set, c);
  });
}

std::vector<Prober> random_baseline(Index d, int k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("random baseline needs k >= 1");
  std::vector<Prober> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(random_init(d, seed + static_cast<std::uint64_t>(i), Constraint::unit_norm));
  return out;
}

TrainedProber fit_supervised(const ContrastActivationSet& train_set, const TrainConfig& config) {
  if (!train_set.has_labels()) throw ValidationError("supervised prober needs labels");
  return train_one(LossSpec::supervised(), train_set, config);
}

Prober fit_pca(const ContrastActivationSet& train_set) {
  if (!train_set.normalized) throw ValidationError("PCA baseline requires a normalized set");
  return {pca_direction(train_set).vector(), 0.0, Constraint::unit_norm};
}

}  // namespace truthprobe
