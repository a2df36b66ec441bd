#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "partopf/kkt.hpp"
#include "partopf/nlp.hpp"
#include "partopf/opf_problem.hpp"
#include "partopf/splitter.hpp"

namespace partopf {

/// Smooth NLP view of an OPF problem: all power-flow rows are equalities.
NlpSpec opf_nlp(const OpfProblem& problem);

/// Centralized solve from the flat start.
NlpResult solve_centralized(const OpfProblem& problem, double tol = 1e-8);

struct AladinParams {
  double rho0 = 500.0;
  double mu0 = 500.0;
  double rho_factor = 1.05;
  double mu_factor = 2.0;
  double rho_max = 1e8;
  double mu_max = 1e8;
  /// Diagonal of Sigma_i per block. Empty selects the identity on blocks that
  /// carry coupling rows and zero on blocks that do not.
  std::vector<Eigen::VectorXd> sigma;
  double eps = 1e-3;
  int max_iter = 500;
  double active_tol = 1e-6;
  double nlp_tol = 1e-8;
  unsigned workers = 0;  // 0 selects the hardware concurrency
};

struct AladinState {
  Eigen::VectorXd y;       // coupled layout
  Eigen::VectorXd lambda;  // one entry per coupling row
  double rho = 0.0;
  double mu = 0.0;
  int iteration = 0;
};

struct LocalStep {
  std::vector<Eigen::VectorXd> x;
  std::vector<KktMultipliers> multipliers;
  std::vector<NlpStatus> status;

  bool degraded() const;
  Eigen::VectorXd stacked() const;
};

struct BlockSensitivity {
  Eigen::VectorXd gradient;         // of f_i only
  Eigen::MatrixXd hessian;          // of f_i + kappa_i^T h_i
  Eigen::MatrixXd active_jacobian;  // equality rows, then active bound rows
  std::vector<Eigen::Index> active_bounds;
};

struct SensitivityData {
  std::vector<BlockSensitivity> blocks;
  std::vector<std::size_t> offsets;  // block start in the stacked vector
};

struct CouplingStep {
  Eigen::VectorXd delta_x;
  Eigen::VectorXd lambda_qp;
  std::vector<double> regularization;  // tau added per block
};

/// Weights Sigma_i actually used for block `i`.
Eigen::VectorXd block_sigma(const CoupledProblem& cp, const AladinParams& params, std::size_t i);

/// Augmented local problem f_i + lambda^T A_i x_i + rho/2 ||x_i - y_i||^2_Sigma.
NlpSpec augmented_nlp(const CoupledProblem& cp, const AladinState& st, const AladinParams& params,
                      std::size_t block);

AladinState initial_state(const CoupledProblem& cp, const AladinParams& params);

/// Solves every augmented block, at most `params.workers` at a time. A block
/// that is not optimal is retried with its objective scaled by
/// 100 / ||grad(x0)||_inf when that is below 1; returned multipliers always
/// refer to the unscaled problem. `warm` holds the previous step, if any.
LocalStep local_step(const CoupledProblem& cp, const AladinState& st, const AladinParams& params,
                     const LocalStep* warm = nullptr);

SensitivityData sensitivities(const CoupledProblem& cp, const LocalStep& step, double active_tol);

/// Coupling QP
///   min 1/2 dx^T H dx + g^T dx + lambda^T s + mu/2 ||s||^2
///   s.t. A (x + dx) - s = b, C dx = 0
/// with s eliminated and C handled through a per-block null-space basis.
/// Each reduced block Hessian is shifted by tau I, tau = 0 or doubling from
/// 1e-8, until positive definite. Throws std::runtime_error naming
/// `iteration` when no shift succeeds.
CouplingStep coupling_qp(const SensitivityData& sd, const SparseMatrix& a, const Eigen::VectorXd& b,
                         const Eigen::VectorXd& lambda, double mu, const Eigen::VectorXd& x_star,
                         int iteration = 0);

CouplingStep coupling_qp(const SensitivityData& sd, const CoupledProblem& cp,
                         const AladinState& st, const Eigen::VectorXd& x_star);

AladinState update_iterates(const AladinState& st, const Eigen::VectorXd& x_star,
                            const CouplingStep& qp, const AladinParams& params);

enum class AladinStatus { converged, iteration_limit };

struct TraceEntry {
  int iteration = 0;
  double consensus_residual = 0.0;  // ||A x* - b||_1
  double primal_residual = 0.0;     // sum_i rho ||Sigma_i (x_i* - y_i)||_1
  double rho = 0.0;
  double mu = 0.0;
  bool degraded = false;  // some local solve stopped short of optimality
};

struct SolveReport {
  AladinStatus status = AladinStatus::iteration_limit;
  int iterations = 0;
  double consensus_residual = 0.0;
  double primal_residual = 0.0;
  double objective = 0.0;  // original cost at the final local solutions
  std::vector<TraceEntry> trace;
  double wall_ms = 0.0;
  Eigen::VectorXd x;  // final local solutions, coupled layout
};

/// Runs the loop of local solves, sensitivities, coupling QP and penalty
/// updates. Convergence is declared after a local step in which every block
/// solved to optimality and both residuals are at most eps.
SolveReport aladin_solve(const CoupledProblem& cp, const AladinParams& params,
                         const std::optional<AladinState>& init = std::nullopt);

}  // namespace partopf
