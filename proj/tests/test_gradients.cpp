#include "doctest.h"
#include "support.hpp"

using namespace truthprobe;

namespace {

struct Case {
  const char* name;
  LossSpec spec;
};

const std::vector<Case>& cases() {
  static const std::vector<Case> all = {
      {"ccs", LossSpec::ccs()},
      {"supervised", LossSpec::supervised()},
      {"md", LossSpec::md(0.0)},
      {"ma literal", LossSpec::ma(0.0, SignMode::literal)},
      {"ma md_consistent", LossSpec::ma(0.0, SignMode::md_consistent)},
      {"smr literal", LossSpec::smr(0.0, SignMode::literal)},
      {"smr md_consistent", LossSpec::smr(0.0, SignMode::md_consistent)},
  };
  return all;
}

double worst_error(const LossSpec& base, std::uint64_t seed, int instances) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    const Index n = 2 + static_cast<Index>(rng() % 19);
    const Index d = 1 + static_cast<Index>(rng() % 8);
    const auto set = testing::random_set(n, d, rng);
    const LossSpec spec = base.with_lambda(base.uses_lambda() ? unif(rng) : 0.0);
    Prober p;
    p.theta = testing::gaussian_vector(d, rng) * (0.5 + unif(rng));
    if (!spec.unit_constrained()) p.bias = testing::gaussian_vector(1, rng)(0);
    const Objective objective(spec, set);
    const double err = testing::relative_gradient_error(objective.gradient(p), testing::central_difference(objective, p));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  for (const auto& c : cases()) {
    const std::string name = c.name;
    CAPTURE(name);
    const double worst = worst_error(c.spec, 1234, 100);
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("sphere gradients are tangent to theta") {
  std::mt19937_64 rng(77);
  for (const auto& c : cases()) {
    if (!c.spec.unit_constrained()) continue;
    const std::string name = c.name;
    CAPTURE(name);
    for (int k = 0; k < 20; ++k) {
      const auto set = testing::random_set(10, 5, rng);
      Prober p;
      p.theta = testing::gaussian_vector(5, rng) * 2.0;
      const auto g = gradient(c.spec.with_lambda(0.4), p, set);
      CHECK(std::abs(g.theta.dot(p.theta)) <= 1e-12 * std::max(1.0, g.theta.norm() * p.theta.norm()));
      CHECK(g.bias == 0.0);
    }
  }
}
