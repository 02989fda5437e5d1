#include <algorithm>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "support.hpp"
#include "truthprobe/error.hpp"

using namespace truthprobe;

namespace {

// Loop-based oracles, written straight from the loss definitions.

double oracle_ccs(const Prober& p, const ContrastActivationSet& s) {
  double total = 0.0;
  for (Index i = 0; i < s.n(); ++i) {
    double zp = p.bias, zm = p.bias;
    for (Index j = 0; j < s.d(); ++j) {
      zp += p.theta(j) * s.phi_plus(i, j);
      zm += p.theta(j) * s.phi_minus(i, j);
    }
    const double pp = testing::plain_sigmoid(zp);
    const double pm = testing::plain_sigmoid(zm);
    total += (1 - pp - pm) * (1 - pp - pm) + std::min(pp, pm) * std::min(pp, pm);
  }
  return total / double(s.n());
}

std::vector<double> projections(const Vector& w, const ContrastActivationSet& s) {
  std::vector<double> out;
  for (Index i = 0; i < s.n(); ++i) {
    double x = 0.0;
    for (Index j = 0; j < s.d(); ++j) x += w(j) * (s.phi_plus(i, j) - s.phi_minus(i, j));
    out.push_back(x);
  }
  return out;
}

double oracle_ma(const Vector& w, const ContrastActivationSet& s, double lambda, bool literal, bool smr) {
  const auto x = projections(w, s);
  double mean_abs = 0.0, mean_sq = 0.0;
  for (double xi : x) {
    mean_abs += std::abs(xi);
    mean_sq += xi * xi;
  }
  mean_abs /= double(x.size());
  mean_sq /= double(x.size());
  double var = 0.0;
  for (double xi : x) var += (std::abs(xi) - mean_abs) * (std::abs(xi) - mean_abs);
  const double sd = std::sqrt(var / double(x.size()));
  const double centre = smr ? std::sqrt(mean_sq) : mean_abs;
  return (literal ? (1 - lambda) : (lambda - 1)) * centre + lambda * sd;
}

double oracle_bce(const Prober& p, const ContrastActivationSet& s) {
  double total = 0.0;
  for (Index i = 0; i < s.n(); ++i) {
    const double y = (*s.labels)[static_cast<std::size_t>(i)];
    const double pp = testing::plain_sigmoid(p.theta.dot(s.phi_plus.row(i).transpose()) + p.bias);
    const double pm = testing::plain_sigmoid(p.theta.dot(s.phi_minus.row(i).transpose()) + p.bias);
    total -= y * std::log(pp) + (1 - y) * std::log(1 - pp);
    total -= (1 - y) * std::log(pm) + y * std::log(1 - pm);
  }
  return total / (2.0 * double(s.n()));
}

Prober unit(std::initializer_list<double> xs) {
  Prober p;
  p.theta = Vector(static_cast<Index>(xs.size()));
  Index j = 0;
  for (double x : xs) p.theta(j++) = x;
  p.theta.normalize();
  p.constraint = Constraint::unit_norm;
  return p;
}

// Three 1-d pairs with theta.u = {1, -2, 3}.
ContrastActivationSet three_pairs() { return testing::from_rows({{1.0}, {-1.0}, {2.0}}, {{0.0}, {1.0}, {-1.0}}); }

}  // namespace

TEST_CASE("LossSpec validation and names") {
  CHECK_NOTHROW(LossSpec::md(0.0).validate());
  CHECK_NOTHROW(LossSpec::md(1.0).validate());
  CHECK_THROWS_AS(LossSpec::md(-0.1).validate(), ValidationError);
  CHECK_THROWS_AS(LossSpec::md(1.01).validate(), ValidationError);
  CHECK_THROWS_AS(LossSpec::ma(std::nan(""), SignMode::literal).validate(), ValidationError);
  LossSpec md_with_mode = LossSpec::md(0.5);
  md_with_mode.sign_mode = SignMode::literal;
  CHECK_THROWS_AS(md_with_mode.validate(), ValidationError);
  LossSpec ma_without_mode = LossSpec::ma(0.5);
  ma_without_mode.sign_mode.reset();
  CHECK_THROWS_AS(ma_without_mode.validate(), ValidationError);
  for (auto v : {LossVariant::ccs, LossVariant::md, LossVariant::ma, LossVariant::smr, LossVariant::supervised}) {
    CHECK(loss_variant_from_string(to_string(v)) == v);
  }
  CHECK(sign_mode_from_string("literal") == SignMode::literal);
  CHECK_THROWS_AS(loss_variant_from_string("mse"), ValidationError);
  CHECK(LossSpec::ccs().constraint() == Constraint::unconstrained);
  CHECK(LossSpec::smr(0.2).constraint() == Constraint::unit_norm);
}

TEST_CASE("PairStatistics reconstruct the pair") {
  std::mt19937_64 rng(20);
  const auto s = testing::random_set(7, 3, rng);
  const auto st = PairStatistics::from(s);
  CHECK(((st.v + st.u) / 2.0 - s.phi_plus).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(((st.v - st.u) / 2.0 - s.phi_minus).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("CCS loss: degenerate point, perfect limit, hand instance") {
  std::mt19937_64 rng(21);
  const auto s = testing::random_set(9, 4, rng);
  Prober zero;
  zero.theta = Vector::Zero(4);
  CHECK(ccs_loss(zero, s) == doctest::Approx(0.25).epsilon(1e-15));

  // One pair with p+ -> 1 and p- -> 0.
  const auto sharp = testing::from_rows({{20.0}}, {{-20.0}});
  Prober one;
  one.theta = Vector::Ones(1);
  const double eps = testing::plain_sigmoid(-20.0);
  CHECK(ccs_loss(one, sharp) == doctest::Approx(2 * eps * eps).epsilon(1e-6));
  CHECK(ccs_loss(one, sharp) < 1e-16);

  const auto hand = testing::from_rows({{2.0}, {-1.0}}, {{-2.0}, {1.0}});
  CHECK(ccs_loss(one, hand) == doctest::Approx(oracle_ccs(one, hand)).epsilon(1e-14));

  for (int trial = 0; trial < 50; ++trial) {
    const auto r = testing::random_set(1 + trial % 9, 1 + trial % 5, rng);
    Prober p;
    p.theta = testing::gaussian_vector(r.d(), rng, 2.0);
    p.bias = testing::gaussian_vector(1, rng)(0);
    CHECK(ccs_loss(p, r) == doctest::Approx(oracle_ccs(p, r)).epsilon(1e-12));
  }
}

TEST_CASE("CCS loss is symmetric in each pair") {
  std::mt19937_64 rng(22);
  const auto s = testing::random_set(12, 3, rng);
  Prober p;
  p.theta = testing::gaussian_vector(3, rng);
  p.bias = 0.4;
  auto swapped = s;
  for (Index i = 0; i < s.n(); i += 2) {
    swapped.phi_plus.row(i) = s.phi_minus.row(i);
    swapped.phi_minus.row(i) = s.phi_plus.row(i);
  }
  CHECK(ccs_loss(p, swapped) == doctest::Approx(ccs_loss(p, s)).epsilon(1e-14));
}

TEST_CASE("sigma_d2 / sigma_m2: closed forms and Gram-matrix oracle") {
  const auto one = testing::from_rows({{1.0, 0.0}}, {{-1.0, 0.0}});
  const Direction e1(Vector::Unit(2, 0));
  CHECK(sigma_d2(e1, one) == 4.0);
  CHECK(sigma_m2(e1, one) == 0.0);
  const Direction e2(Vector::Unit(2, 1));
  CHECK(sigma_d2(e2, one) == 0.0);

  std::mt19937_64 rng(23);
  const auto s = testing::random_set(5, 3, rng);
  const Direction w(testing::gaussian_vector(3, rng));
  const Matrix u = s.phi_plus - s.phi_minus;
  const Matrix v = s.phi_plus + s.phi_minus;
  const Matrix gu = u.transpose() * u / 5.0;
  const Matrix gv = v.transpose() * v / 5.0;
  CHECK(sigma_d2(w, s) == doctest::Approx(w.vector().dot(gu * w.vector())).epsilon(1e-13));
  CHECK(sigma_m2(w, s) == doctest::Approx(w.vector().dot(gv * w.vector())).epsilon(1e-13));
}

TEST_CASE("translation: sigma_d2 invariant, sigma_m2 not") {
  std::mt19937_64 rng(24);
  const auto s = testing::random_set(10, 4, rng);
  const Direction w(testing::gaussian_vector(4, rng));
  auto moved = s;
  const Vector shift = testing::gaussian_vector(4, rng, 3.0);
  moved.phi_plus.rowwise() += shift.transpose();
  moved.phi_minus.rowwise() += shift.transpose();
  CHECK(sigma_d2(w, moved) == doctest::Approx(sigma_d2(w, s)).epsilon(1e-12));
  CHECK(std::abs(sigma_m2(w, moved) - sigma_m2(w, s)) > 1e-3);
}

TEST_CASE("MD loss: coefficient collapse and hand value") {
  std::mt19937_64 rng(25);
  const auto s = testing::random_set(8, 3, rng);
  const Direction w(testing::gaussian_vector(3, rng));
  CHECK(md_loss(w, s, 1.0) == sigma_m2(w, s));
  CHECK(md_loss(w, s, 0.0) == -sigma_d2(w, s));
  for (double lambda : {0.1, 0.5, 0.9, 0.999}) {
    CHECK(std::abs(md_loss(w, s, lambda) - (lambda * sigma_m2(w, s) + (lambda - 1) * sigma_d2(w, s))) <= 1e-12);
  }
  const auto one = testing::from_rows({{1.0, 0.0}}, {{-1.0, 0.0}});
  CHECK(md_loss(Direction(Vector::Unit(2, 0)), one, 0.5) == -2.0);
}

TEST_CASE("MA and SMR: hand instance, identities, both sign modes") {
  const auto s = three_pairs();
  const Direction w(Vector::Ones(1));
  CHECK(ma_loss(w, s, 0.5, SignMode::literal) == doctest::Approx(1.0 + 0.5 * std::sqrt(2.0 / 3.0)).epsilon(1e-14));
  CHECK(ma_loss(w, s, 0.5, SignMode::md_consistent) ==
        doctest::Approx(-1.0 + 0.5 * std::sqrt(2.0 / 3.0)).epsilon(1e-14));
  const double smr_centre = std::sqrt(14.0 / 3.0);
  CHECK(smr_loss(w, s, 0.0, SignMode::literal) == doctest::Approx(smr_centre).epsilon(1e-14));
  CHECK(smr_loss(w, s, 0.0, SignMode::literal) * smr_loss(w, s, 0.0, SignMode::literal) ==
        doctest::Approx(sigma_d2(w, s)).epsilon(1e-12));

  // Equal |theta.u| gives zero spread.
  const auto flat = testing::from_rows({{2.0}, {-1.0}}, {{0.0}, {1.0}});
  CHECK(ma_loss(w, flat, 0.3, SignMode::literal) == doctest::Approx(0.7 * 2.0).epsilon(1e-15));

  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 40; ++trial) {
    const auto r = testing::random_set(2 + trial % 15, 1 + trial % 6, rng);
    const Direction d(testing::gaussian_vector(r.d(), rng));
    const double lambda = (trial % 11) / 10.0;
    for (bool literal : {true, false}) {
      const SignMode m = literal ? SignMode::literal : SignMode::md_consistent;
      CHECK(ma_loss(d, r, lambda, m) == doctest::Approx(oracle_ma(d.vector(), r, lambda, literal, false)).epsilon(1e-12));
      CHECK(smr_loss(d, r, lambda, m) == doctest::Approx(oracle_ma(d.vector(), r, lambda, literal, true)).epsilon(1e-12));
    }
    CHECK(ma_loss(d, r, 1.0, SignMode::literal) == doctest::Approx(ma_loss(d, r, 1.0, SignMode::md_consistent)));
    const double c = smr_loss(d, r, 0.0, SignMode::literal);
    CHECK(std::abs(c * c - sigma_d2(d, r)) <= 1e-12 * std::max(1.0, sigma_d2(d, r)));
  }
}

TEST_CASE("sphere losses are even in the direction") {
  std::mt19937_64 rng(27);
  const auto s = testing::random_set(11, 4, rng);
  const Vector w = testing::gaussian_vector(4, rng);
  const Direction a(w), b(-w);
  CHECK(md_loss(a, s, 0.4) == doctest::Approx(md_loss(b, s, 0.4)).epsilon(1e-14));
  CHECK(ma_loss(a, s, 0.4, SignMode::literal) == doctest::Approx(ma_loss(b, s, 0.4, SignMode::literal)).epsilon(1e-14));
  CHECK(smr_loss(a, s, 0.4, SignMode::md_consistent) ==
        doctest::Approx(smr_loss(b, s, 0.4, SignMode::md_consistent)).epsilon(1e-14));
}

TEST_CASE("supervised BCE") {
  std::mt19937_64 rng(28);
  const auto s = testing::random_set(6, 3, rng);
  Prober zero;
  zero.theta = Vector::Zero(3);
  CHECK(supervised_loss(zero, s) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  auto hand = testing::from_rows({{1.0, 0.5}, {-0.5, 2.0}}, {{0.0, -1.0}, {1.5, 0.25}});
  hand.labels = Labels{1, 0};
  Prober p;
  p.theta = Vector(2);
  p.theta << 0.7, -0.3;
  p.bias = 0.2;
  CHECK(supervised_loss(p, hand) == doctest::Approx(oracle_bce(p, hand)).epsilon(1e-14));

  // Separable data and a growing scale drive the loss to zero.
  auto sep = testing::from_rows({{1.0}, {-1.0}}, {{-1.0}, {1.0}});
  sep.labels = Labels{1, 0};
  Prober big;
  big.theta = Vector::Constant(1, 40.0);
  CHECK(supervised_loss(big, sep) < 1e-15);
  CHECK(std::isfinite(supervised_loss(big, sep)));

  auto unlabeled = s;
  unlabeled.labels.reset();
  CHECK_THROWS_AS(supervised_loss(zero, unlabeled), ValidationError);
}

TEST_CASE("loss dispatch and Objective agree with the free functions") {
  std::mt19937_64 rng(29);
  const auto s = testing::random_set(10, 3, rng);
  Prober raw;
  raw.theta = testing::gaussian_vector(3, rng) * 2.5;
  const Direction w(raw.theta);
  CHECK(loss(LossSpec::md(0.3), raw, s) == doctest::Approx(md_loss(w, s, 0.3)).epsilon(1e-13));
  CHECK(loss(LossSpec::ma(0.3, SignMode::literal), raw, s) ==
        doctest::Approx(ma_loss(w, s, 0.3, SignMode::literal)).epsilon(1e-13));
  CHECK(loss(LossSpec::ccs(), raw, s) == doctest::Approx(ccs_loss(raw, s)).epsilon(1e-14));
  const Objective obj(LossSpec::smr(0.6), s);
  Gradient g;
  CHECK(obj.evaluate(raw, g) == doctest::Approx(obj.value(raw)).epsilon(1e-15));
  CHECK((g.theta - obj.gradient(raw).theta).cwiseAbs().maxCoeff() == 0.0);
  Prober empty;
  CHECK_THROWS_AS(loss(LossSpec::ccs(), empty, s), ValidationError);
}

TEST_CASE("gradient examples") {
  std::mt19937_64 rng(30);
  const auto s = testing::random_set(10, 3, rng);
  // At theta = 0 every pair has p+ = p- = 1/2: the consistency residual is zero,
  // so its gradient vanishes, and min() sits on its tie, which takes the phi+ branch.
  Prober zero;
  zero.theta = Vector::Zero(3);
  const auto g = gradient(LossSpec::ccs(), zero, s);
  const Vector expected_ccs = 0.25 * s.phi_plus.colwise().mean().transpose();
  CHECK((g.theta - expected_ccs).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(g.bias == doctest::Approx(0.25).epsilon(1e-15));

  // MD at lambda = 1 is sigma_m2(theta/|theta|): 2 (V^T V / n) w projected and scaled by 1/|theta|.
  Prober p;
  p.theta = testing::gaussian_vector(3, rng) * 1.7;
  const Matrix v = s.sums();
  const Vector w = p.theta.normalized();
  const Vector full = 2.0 * (v.transpose() * v / 10.0) * w;
  const Vector expected = (full - w * w.dot(full)) / p.theta.norm();
  const auto md = gradient(LossSpec::md(1.0), p, s);
  CHECK((md.theta - expected).norm() <= 1e-12 * expected.norm());
  CHECK(md.bias == 0.0);
  // Scale invariance of the loss: the gradient is orthogonal to theta.
  CHECK(std::abs(md.theta.dot(p.theta)) <= 1e-12);
}

TEST_CASE("MA subgradient is zero for a pair with theta.u = 0") {
  // Pair 0 has u orthogonal to theta, pairs 1 and 2 do not.
  const auto s = testing::from_rows({{0.0, 1.0}, {2.0, 0.0}, {-1.0, 1.0}}, {{0.0, -1.0}, {0.0, 0.0}, {1.0, 0.0}});
  Prober p;
  p.theta = Vector::Unit(2, 0);
  p.constraint = Constraint::unit_norm;
  const auto g = gradient(LossSpec::ma(0.5, SignMode::literal), p, s);
  CHECK(g.theta.allFinite());
  // Pair 0 only moves the loss through its |theta.u| term; removing it changes the gradient by the subgradient 0
  // contribution, so the gradient equals the one computed with that term's derivative set to zero by hand.
  const double n = 3.0;
  const double mu = (0.0 + 2.0 + 2.0) / n;
  const double sd = std::sqrt(((0 - mu) * (0 - mu) + 2 * (2 - mu) * (2 - mu)) / n);
  // d|x_i|/dw for i = 1, 2 (signs +, -), with u_1 = (2, 0), u_2 = (-2, 1).
  Vector da1(2), da2(2);
  da1 << 2.0, 0.0;
  da2 << 2.0, -1.0;
  const Vector dmu = (da1 + da2) / n;
  const Vector dsd = ((2 - mu) * (da1 - dmu) + (2 - mu) * (da2 - dmu) + (0 - mu) * (-dmu)) / (n * sd);
  const Vector full = 0.5 * dmu + 0.5 * dsd;
  const Vector w = p.theta;
  const Vector expected = full - w * w.dot(full);
  CHECK((g.theta - expected).norm() <= 1e-12);
}

TEST_CASE("PCA: rank one, anisotropic oracle, random probes") {
  // u_i = alpha_i e1.
  const auto r1 = testing::from_rows({{1.0, 0.0, 0.0}, {-2.0, 0.0, 0.0}, {0.5, 0.0, 0.0}},
                                     {{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}});
  const auto d1 = pca_direction(r1);
  CHECK(d1.vector()(0) == doctest::Approx(1.0).epsilon(1e-10));

  std::mt19937_64 rng(31);
  ContrastActivationSet aniso;
  aniso.phi_plus = testing::gaussian_matrix(400, 4, rng);
  aniso.phi_plus.col(0) *= 3.0;
  aniso.phi_minus = Matrix::Zero(400, 4);
  const auto d2 = pca_direction(aniso);
  Matrix u = aniso.displacements();
  u.rowwise() -= u.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(u.transpose() * u / 400.0);
  const Vector top = eig.eigenvectors().col(3);
  CHECK(std::abs(top.dot(d2.vector())) >= 0.999);
  CHECK(std::abs(d2.vector()(0)) >= 0.99);

  const Matrix second = u.transpose() * u / 400.0;
  const double along = d2.vector().dot(second * d2.vector());
  for (int k = 0; k < 100; ++k) {
    const Vector probe = testing::gaussian_vector(4, rng).normalized();
    CHECK(along >= probe.dot(second * probe) - 1e-12);
  }

  ContrastActivationSet zero;
  zero.phi_plus = Matrix::Ones(4, 2);
  zero.phi_minus = Matrix::Ones(4, 2);
  CHECK_THROWS_AS(pca_direction(zero), ValidationError);
}

TEST_CASE("PCA sign convention: first nonzero coordinate positive") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix samples = testing::gaussian_matrix(50, 3, rng);
    samples.col(1) *= 4.0;
    const auto r = principal_component(samples);
    Index first = 0;
    while (std::abs(r.direction(first)) <= 1e-12) ++first;
    CHECK(r.direction(first) > 0.0);
    CHECK(r.residual <= 1e-8);
  }
}

TEST_CASE("PCA reports non-convergence with its residual") {
  // Eigenvalues 1 and 0.999: a tiny gap converges far too slowly for 5 steps.
  Matrix samples(4, 2);
  const double b = std::sqrt(0.999);
  samples << 1, 0, -1, 0, 0, b, 0, -b;
  try {
    principal_component(samples, 1e-14, 5);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() > 0.0);
  }
  CHECK_THROWS_AS(principal_component(samples, 1e-10, 0), ValidationError);
  // At the default budget a 0.1% gap still fails; a 10% gap converges.
  CHECK_THROWS_AS(principal_component(samples), ConvergenceError);
  samples(2, 1) = std::sqrt(0.9);
  samples(3, 1) = -std::sqrt(0.9);
  const auto ok = principal_component(samples);
  CHECK(std::abs(ok.direction(0)) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ok.eigenvalue == doctest::Approx(0.5).epsilon(1e-9));
}
