#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "partopf/kkt.hpp"
#include "partopf/network.hpp"

namespace partopf {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Indices of one bus's entries in an OpfProblem variable vector.
struct BusSlots {
  std::size_t theta = 0;
  std::size_t v = 0;
  std::vector<std::size_t> p;  // active injections: generators, then auxiliary
  std::vector<std::size_t> q;
};

/// AC-OPF over a set of buses. Per bus the layout is (theta, v), followed by
/// (p, q) for each of its generators and, on auxiliary buses, a free (p, q)
/// injection. Power-flow rows come in pairs: 2i is active, 2i+1 reactive.
class OpfProblem {
 public:
  /// `local` holds only the buses of this problem. Buses flagged in
  /// `auxiliary` get a free injection and no cost. Any slack-kind bus in
  /// `local` is pinned to angle 0 and magnitude `slack_voltage`.
  OpfProblem(Network local, std::vector<bool> auxiliary, double slack_voltage);

  std::size_t size() const { return static_cast<std::size_t>(lower_.size()); }
  std::size_t bus_count() const { return net_.buses.size(); }
  std::size_t constraint_count() const { return 2 * net_.buses.size(); }

  const Network& network() const { return net_; }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  const BusSlots& slots(std::size_t bus) const { return slots_[bus]; }
  std::size_t gen_p(std::size_t gen) const { return gen_p_[gen]; }
  std::size_t gen_q(std::size_t gen) const { return gen_q_[gen]; }
  bool auxiliary(std::size_t bus) const { return auxiliary_[bus]; }
  std::optional<std::size_t> slack() const { return slack_; }
  double slack_voltage() const { return slack_voltage_; }

  /// Original-network bus index for each local bus (set by build_opf).
  const std::vector<std::size_t>& source_buses() const { return source_buses_; }
  const std::vector<std::size_t>& source_generators() const { return source_gens_; }
  void set_sources(std::vector<std::size_t> buses, std::vector<std::size_t> gens);

  /// Computed complex injection V_i * conj((Y V)_i) at bus `bus`.
  std::complex<double> injection(const Eigen::VectorXd& x, std::size_t bus) const;

  /// theta = 0, v = 1 (slack at its set-point), generators at bound midpoints,
  /// auxiliary injections 0.
  Eigen::VectorXd flat_start() const;

  // Evaluators; see the free functions below.
  double objective(const Eigen::VectorXd& x, Eigen::VectorXd* gradient) const;
  void power_flow(const Eigen::VectorXd& x, Eigen::VectorXd& residual,
                  SparseMatrix* jacobian) const;
  SparseMatrix hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& row_multipliers,
                       double objective_factor) const;

 private:
  Network net_;
  std::vector<bool> auxiliary_;
  Eigen::SparseMatrix<std::complex<double>, Eigen::RowMajor> ybus_;
  std::vector<BusSlots> slots_;
  std::vector<std::size_t> gen_p_;
  std::vector<std::size_t> gen_q_;
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
  std::optional<std::size_t> slack_;
  double slack_voltage_ = 1.0;
  std::vector<std::size_t> source_buses_;
  std::vector<std::size_t> source_gens_;
};

class DisconnectedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Centralized AC-OPF over `net`, or over the induced sub-network of
/// `bus_subset` (dense indices). Throws DisconnectedError when the subset does
/// not induce a connected subgraph.
OpfProblem build_opf(const Network& net,
                     std::optional<std::span<const std::size_t>> bus_subset = std::nullopt);

struct ObjectiveEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

struct PowerFlowEval {
  Eigen::VectorXd residual;
  SparseMatrix jacobian;
};

/// Generator cost on MW scale and its gradient with respect to the per-unit
/// layout.
ObjectiveEval eval_objective(const OpfProblem& p, const Eigen::VectorXd& z);

PowerFlowEval eval_power_flow(const OpfProblem& p, const Eigen::VectorXd& z);

/// Hessian of f + sum(m.constraints[j] * c_j). Bound multipliers do not
/// contribute. Both triangles are stored.
SparseMatrix eval_lagrangian_hessian(const OpfProblem& p, const Eigen::VectorXd& z,
                                     const KktMultipliers& m);

}  // namespace partopf
