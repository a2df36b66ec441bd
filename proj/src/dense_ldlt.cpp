#include "partopf/dense_ldlt.hpp"

#include <cmath>
#include <stdexcept>

extern "C" {
void dsytrf_(const char* uplo, const int* n, double* a, const int* lda, int* ipiv, double* work,
             const int* lwork, int* info);
void dsytrs_(const char* uplo, const int* n, const int* nrhs, const double* a, const int* lda,
             const int* ipiv, double* b, const int* ldb, int* info);
}

namespace partopf {

bool SymmetricIndefiniteLdlt::factorize(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("matrix must be square");
  const int n = static_cast<int>(a.rows());
  factor_ = a;
  pivots_.assign(static_cast<std::size_t>(n), 0);
  inertia_ = Inertia{};
  if (n == 0) return true;

  const char uplo = 'L';
  int info = 0;
  int lwork = -1;
  double query = 0.0;
  dsytrf_(&uplo, &n, factor_.data(), &n, pivots_.data(), &query, &lwork, &info);
  lwork = std::max(1, static_cast<int>(query));
  std::vector<double> work(static_cast<std::size_t>(lwork));
  dsytrf_(&uplo, &n, factor_.data(), &n, pivots_.data(), work.data(), &lwork, &info);
  if (info < 0) throw std::runtime_error("dsytrf: invalid argument");

  auto classify = [&](double ev) {
    if (ev == 0.0 || !std::isfinite(ev)) {
      ++inertia_.zero;
    } else if (ev > 0.0) {
      ++inertia_.positive;
    } else {
      ++inertia_.negative;
    }
  };
  for (int i = 0; i < n;) {
    if (pivots_[static_cast<std::size_t>(i)] > 0) {
      classify(factor_(i, i));
      ++i;
    } else {
      const double d11 = factor_(i, i);
      const double d21 = factor_(i + 1, i);
      const double d22 = factor_(i + 1, i + 1);
      const double mean = 0.5 * (d11 + d22);
      const double radius = std::hypot(0.5 * (d11 - d22), d21);
      classify(mean + radius);
      classify(mean - radius);
      i += 2;
    }
  }
  return info == 0 && inertia_.zero == 0;
}

Eigen::VectorXd SymmetricIndefiniteLdlt::solve(const Eigen::VectorXd& rhs) const {
  const int n = static_cast<int>(factor_.rows());
  if (rhs.size() != n) throw std::invalid_argument("right-hand side size mismatch");
  Eigen::VectorXd x = rhs;
  if (n == 0) return x;
  const char uplo = 'L';
  const int nrhs = 1;
  int info = 0;
  dsytrs_(&uplo, &n, &nrhs, factor_.data(), &n, pivots_.data(), x.data(), &n, &info);
  if (info != 0) throw std::runtime_error("dsytrs failed");
  return x;
}

}  // namespace partopf
