#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "truthprobe/dataset.hpp"
#include "truthprobe/prober.hpp"

namespace testing {

using truthprobe::ContrastActivationSet;
using truthprobe::Index;
using truthprobe::Matrix;
using truthprobe::Vector;

inline Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

inline Vector gaussian_vector(Index d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Vector v(d);
  for (Index j = 0; j < d; ++j) v(j) = dist(rng);
  return v;
}

inline ContrastActivationSet random_set(Index n, Index d, std::mt19937_64& rng, bool labels = true,
                                        double scale = 1.0) {
  ContrastActivationSet s;
  s.phi_plus = gaussian_matrix(n, d, rng, scale);
  s.phi_minus = gaussian_matrix(n, d, rng, scale);
  if (labels) {
    truthprobe::Labels y(static_cast<std::size_t>(n));
    std::bernoulli_distribution coin(0.5);
    for (auto& v : y) v = coin(rng) ? 1 : 0;
    s.labels = y;
  }
  return s;
}

inline ContrastActivationSet from_rows(std::initializer_list<std::initializer_list<double>> plus,
                                       std::initializer_list<std::initializer_list<double>> minus) {
  auto fill = [](std::initializer_list<std::initializer_list<double>> rows) {
    const Index n = static_cast<Index>(rows.size());
    const Index d = static_cast<Index>(rows.begin()->size());
    Matrix m(n, d);
    Index i = 0;
    for (const auto& r : rows) {
      Index j = 0;
      for (double x : r) m(i, j++) = x;
      ++i;
    }
    return m;
  };
  ContrastActivationSet s;
  s.phi_plus = fill(plus);
  s.phi_minus = fill(minus);
  return s;
}

inline double plain_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// A fresh directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("truthprobe-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing

#include "truthprobe/losses.hpp"

namespace testing {

// Central differences of the full objective with respect to (theta, bias).
struct NumericGradient {
  Vector theta;
  double bias = 0.0;
};

inline NumericGradient central_difference(const truthprobe::Objective& objective, const truthprobe::Prober& prober,
                                          double h = 1e-5) {
  NumericGradient g;
  g.theta.resize(prober.d());
  for (Index j = 0; j < prober.d(); ++j) {
    auto hi = prober;
    auto lo = prober;
    hi.theta(j) += h;
    lo.theta(j) -= h;
    g.theta(j) = (objective.value(hi) - objective.value(lo)) / (2.0 * h);
  }
  if (!objective.spec().unit_constrained()) {
    auto hi = prober;
    auto lo = prober;
    hi.bias += h;
    lo.bias -= h;
    g.bias = (objective.value(hi) - objective.value(lo)) / (2.0 * h);
  }
  return g;
}

// Norm-wise relative error of the stacked (theta, bias) gradient. The floor
// keeps a vanishing gradient from turning rounding noise into a failure.
inline double relative_gradient_error(const truthprobe::Gradient& analytic, const NumericGradient& numeric,
                                      double floor = 1e-6) {
  Vector a(analytic.theta.size() + 1);
  Vector b(numeric.theta.size() + 1);
  a << analytic.theta, analytic.bias;
  b << numeric.theta, numeric.bias;
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

}  // namespace testing
