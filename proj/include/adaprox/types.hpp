#pragma once

#include <Eigen/Core>

namespace adaprox {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace adaprox
