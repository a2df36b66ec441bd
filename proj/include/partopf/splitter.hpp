#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "partopf/graphpart.hpp"
#include "partopf/network.hpp"
#include "partopf/opf_problem.hpp"

namespace partopf {

/// One block of the split problem. Its variables occupy
/// [offset, offset + problem.size()) of the coupled vector.
struct SubProblem {
  std::size_t block = 0;
  OpfProblem problem;
  std::size_t offset = 0;

  std::size_t global(std::size_t local) const { return offset + local; }
};

/// Coupled-vector indices of one auxiliary bus copy.
struct AuxiliaryCopy {
  std::size_t block = 0;
  std::size_t local_bus = 0;
  std::size_t theta = 0;
  std::size_t v = 0;
  std::size_t p = 0;
  std::size_t q = 0;
};

/// A cut branch replaced by two half-branches meeting at auxiliary bus L.
/// `from_side` lives in the block of the branch's from bus.
struct AuxiliaryBusPair {
  std::size_t branch = 0;
  AuxiliaryCopy from_side;
  AuxiliaryCopy to_side;
};

/// Separable OPF with linear consensus coupling A x = b over the stacked
/// sub-problem variables.
struct CoupledProblem {
  OpfProblem central;  // unsplit layout used by lift/merge
  std::vector<SubProblem> subproblems;
  std::vector<AuxiliaryBusPair> pairs;
  SparseMatrix coupling;  // A, 4 rows per pair: v, theta, p, q
  Eigen::VectorXd rhs;    // b (all zero)
  std::size_t total = 0;

  std::vector<std::size_t> bus_block;  // original bus -> block
  std::vector<std::size_t> bus_local;  // original bus -> local bus in its block
  std::vector<std::size_t> gen_block;
  std::vector<std::size_t> gen_local;

  std::size_t coupling_rows() const { return static_cast<std::size_t>(coupling.rows()); }

  /// Slice of a coupled vector belonging to sub-problem `i`.
  Eigen::VectorXd local(const Eigen::VectorXd& x, std::size_t i) const;
};

/// Each cut branch F-T becomes F-L1 (block of F) and L2-T (block of T), each
/// half with r/2, x/2. The tap and shift stay on the from half; the line
/// charging b_c/2 of each end is kept at that end as a bus shunt, which keeps
/// the split network exactly equivalent to the original pi model.
CoupledProblem split_problem(const Network& net, const PartitionMap& partition);

/// Map a point of the unsplit problem into the coupled layout, placing each
/// auxiliary bus at the exact midpoint state of its branch.
Eigen::VectorXd lift_solution(const CoupledProblem& cp, const Eigen::VectorXd& centralized);

struct MergedSolution {
  Eigen::VectorXd centralized;
  double consensus_gap = 0.0;  // ||A x - b||_1
};

MergedSolution merge_solution(const CoupledProblem& cp, const Eigen::VectorXd& coupled);

}  // namespace partopf
