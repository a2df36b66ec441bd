#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "partopf/kkt.hpp"

namespace partopf {

enum class RowKind { equality, inequality };  // c_j(x) = 0 or c_j(x) <= 0

/// Smooth NLP: min f(x) s.t. c_E(x) = 0, c_I(x) <= 0, lower <= x <= upper.
/// Entries with lower == upper are fixed. Infinite bounds are allowed.
struct NlpSpec {
  Eigen::Index dimension = 0;
  std::vector<RowKind> rows;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  /// Returns f(x); writes the gradient when the pointer is non-null.
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)> objective;
  /// Writes c(x) and, when non-null, its Jacobian (rows x dimension).
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::SparseMatrix<double>*)>
      constraints;
  /// Hessian of objective_factor * f + sum_j multipliers[j] * c_j.
  std::function<Eigen::SparseMatrix<double>(const Eigen::VectorXd&, double, const Eigen::VectorXd&)>
      hessian;

  Eigen::Index row_count() const { return static_cast<Eigen::Index>(rows.size()); }
};

enum class NlpStatus { optimal, max_iter, infeasible_detected };

struct NlpResult {
  Eigen::VectorXd x;
  KktMultipliers multipliers;
  NlpStatus status = NlpStatus::max_iter;
  double kkt_residual = 0.0;
  double objective = 0.0;
  int iterations = 0;
};

struct NlpOptions {
  int max_iter = 200;
  double mu_init = 1.0;
  double mu_factor = 0.2;
  double fraction_to_boundary = 0.995;
  /// Relative distance by which x0 is pushed inside its bounds.
  double bound_push = 1e-2;
  /// Optional multiplier warm start; bound multipliers default to ones.
  std::optional<KktMultipliers> warm_start;
};

struct KktResidual {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;

  double max() const;
};

/// KKT error of (x, m) measured with the evaluators only:
/// stationarity ||grad f + J^T m.constraints - m.lower + m.upper||_inf,
/// feasibility over equality rows, inequality rows and bounds, and
/// complementarity including multiplier sign violations.
KktResidual kkt_residual(const NlpSpec& spec, const Eigen::VectorXd& x, const KktMultipliers& m);

/// Primal-dual interior point with slacks on inequality rows, monotone barrier
/// reduction and inertia-corrected Newton steps. Throws std::invalid_argument
/// when the evaluators return non-finite values at x0.
NlpResult solve_nlp(const NlpSpec& spec, const Eigen::VectorXd& x0, double tol,
                    const NlpOptions& options = {});

}  // namespace partopf
