#pragma once

#include <cmath>

#include <Eigen/Eigenvalues>

#include "truthprobe/dataset.hpp"
#include "truthprobe/losses.hpp"
#include "truthprobe/prober.hpp"

// Constructed tasks whose answers come from an exact eigendecomposition.
namespace fixtures {

using truthprobe::ContrastActivationSet;
using truthprobe::Direction;
using truthprobe::Index;
using truthprobe::Matrix;
using truthprobe::Vector;

// Bottom eigenvector of lambda*B - (1 - lambda)*A: the minimizer of the MD
// loss on the unit sphere when A = U^T U / n and B = V^T V / n.
inline Vector md_minimizer(const Matrix& a, const Matrix& b, double lambda) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(lambda * b - (1.0 - lambda) * a);
  return eig.eigenvectors().col(0);
}

struct PlantedTask {
  ContrastActivationSet set;  // flagged normalized; moments chosen exactly
  Matrix a;                   // U^T U / n
  Matrix b;                   // V^T V / n
  double lambda0 = 0.0;
  Direction reference;
};

// Rows +-sqrt(n/2 * alpha_k) q_k reproduce sum_k alpha_k q_k q_k^T as a second moment.
inline Matrix rows_with_moment(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  const Index d = m.rows();
  Matrix rows(2 * d, d);
  for (Index k = 0; k < d; ++k) {
    const Vector q = eig.eigenvectors().col(k) * std::sqrt(std::max(0.0, eig.eigenvalues()(k)) * double(d));
    rows.row(2 * k) = q.transpose();
    rows.row(2 * k + 1) = -q.transpose();
  }
  return rows;
}

// Two-dimensional task: A has its top axis at 0 degrees, B at 45 degrees, so
// the MD minimizer rotates monotonically in lambda. The reference direction is
// the minimizer at lambda0, which makes mean |cos| peak exactly there. Every
// lambda keeps an eigengap near 15, so 1000 projected-gradient steps converge.
inline PlantedTask planted_md_task(double lambda0) {
  Matrix a(2, 2);
  a << 20.0, 0.0, 0.0, 2.0;
  const double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
  Matrix r(2, 2);
  r << c, -s, s, c;
  Matrix diag(2, 2);
  diag << 30.0, 0.0, 0.0, 3.0;
  const Matrix b = r * diag * r.transpose();

  const Matrix u = rows_with_moment(a);
  const Matrix v = rows_with_moment(b);
  ContrastActivationSet set;
  set.phi_plus = (v + u) / 2.0;
  set.phi_minus = (v - u) / 2.0;
  set.normalized = true;
  return {set, a, b, lambda0, Direction(md_minimizer(a, b, lambda0))};
}

// Dense scan at step 0.001 over [0, 0.99] of |cos(minimizer(lambda), reference)|.
inline double dense_scan_argmax(const PlantedTask& task, double lo = 0.0, double hi = 0.99) {
  double best = -1.0;
  double best_lambda = lo;
  for (int i = 0; lo + 0.001 * i <= hi + 1e-12; ++i) {
    const double lambda = lo + 0.001 * i;
    const double value = std::abs(md_minimizer(task.a, task.b, lambda).dot(task.reference.vector()));
    if (value > best) {
      best = value;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace fixtures
