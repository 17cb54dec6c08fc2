#pragma once

#include <Eigen/Dense>

namespace nilmformer {

using Scalar = double;
using Index = Eigen::Index;

// All sequence data is [positions x channels], row-major, double precision.
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace nilmformer
