#pragma once

#include <Eigen/Core>

namespace mirror_opt {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Primal iterates live in X, gradients and mirror images in the dual X*. Both are
// stored as plain vectors; the aliases document which space a signature expects.
using PrimalVector = Eigen::VectorXd;
using DualVector = Eigen::VectorXd;

using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

}  // namespace mirror_opt
