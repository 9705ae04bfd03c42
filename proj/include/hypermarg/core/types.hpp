#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace hypermarg {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SparseRM = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Dense oracles refuse inputs larger than this.
inline constexpr Index kDenseLimit = 2048;

}  // namespace hypermarg
