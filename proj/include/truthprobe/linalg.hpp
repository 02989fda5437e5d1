#pragma once

#include <Eigen/Dense>

namespace truthprobe {

// Row-major so a matrix's storage matches the on-disk blob layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace truthprobe
