#pragma once

#include <Eigen/Core>

namespace partopf {

/// Lagrange multipliers for `f + lambda^T c - z_l^T (x - l) - z_u^T (u - x)`.
/// `constraints` has one entry per constraint row; inequality rows
/// (c_j <= 0) and both bound vectors are nonnegative at a KKT point.
struct KktMultipliers {
  Eigen::VectorXd constraints;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

}  // namespace partopf
