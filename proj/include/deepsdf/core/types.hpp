#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace deepsdf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

enum class Mode { train, eval };

}  // namespace deepsdf
