#pragma once

#include <vector>

#include <Eigen/Core>

namespace partopf {

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;

  bool operator==(const Inertia&) const = default;
};

/// Bunch-Kaufman LDL^T of a dense symmetric (possibly indefinite) matrix via
/// LAPACK dsytrf. Only the lower triangle of the input is read. The inertia
/// follows from the 1x1 and 2x2 pivot blocks of D.
class SymmetricIndefiniteLdlt {
 public:
  /// Returns false when a pivot is exactly zero or not finite; inertia() is
  /// still valid in that case.
  bool factorize(const Eigen::MatrixXd& a);

  const Inertia& inertia() const { return inertia_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

 private:
  Eigen::MatrixXd factor_;
  std::vector<int> pivots_;
  Inertia inertia_;
};

}  // namespace partopf
