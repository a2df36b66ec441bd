#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "partopf/network.hpp"
#include "partopf/opf_problem.hpp"

namespace partopf {

struct Edge {
  std::size_t u = 0;  // u < v
  std::size_t v = 0;
  double weight = 1.0;

  bool operator==(const Edge&) const = default;
};

/// Undirected graph without self-loops and with at most one edge per pair.
struct WeightedGraph {
  std::size_t vertices = 0;
  std::vector<Edge> edges;

  /// Merges parallel edges by summing their weights; drops self-loops.
  static WeightedGraph from_edges(std::size_t n, std::vector<Edge> edges);

  double total_weight() const;
};

/// Block assignment of every vertex; block ids are dense in 0..k-1.
struct PartitionMap {
  std::size_t k = 0;
  std::vector<std::size_t> assignment;

  std::vector<std::size_t> block_sizes() const;
  std::vector<std::vector<std::size_t>> blocks() const;

  bool operator==(const PartitionMap&) const = default;
};

struct PartitionMetrics {
  double cut_weight = 0.0;
  std::vector<std::size_t> cut_edges;  // indices into WeightedGraph::edges
  double balance = 0.0;                // largest block / ceil(n / k)
};

class PartitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Refinement { local_search, pass_swap };

enum class AffinityMode { ybus, hessian };

/// One vertex per bus, unit weight per in-service branch.
WeightedGraph network_to_graph(const Network& net);

PartitionMap singleton_partition(const WeightedGraph& g);

/// Throws PartitionError when `p` is not a total, dense, non-empty assignment
/// over `g`.
void check_partition(const WeightedGraph& g, const PartitionMap& p);

PartitionMetrics partition_metrics(const WeightedGraph& g, const PartitionMap& p);

/// Multilevel k-way partitioning: heavy-edge matching contraction, greedy
/// region growing on the coarsest graph, then boundary refinement while
/// uncoarsening. Every block stays within (1 + imbalance) * ceil(n / k).
PartitionMap multilevel_partition(const WeightedGraph& g, std::size_t k, double imbalance,
                                  Refinement refinement, std::uint64_t seed);

/// Symmetric nonnegative affinity with zero diagonal. In hessian mode
/// `hessian` must be a Lagrangian Hessian laid out like build_opf(net).
Eigen::MatrixXd build_affinity(const Network& net, AffinityMode mode,
                               const SparseMatrix* hessian = nullptr);

struct SpectralDiagnostics {
  Eigen::VectorXd eigenvalues;  // of the normalized Laplacian, ascending
};

/// Normalized spectral clustering with k-means on the row-normalized
/// eigenvector embedding. No balance constraint; throws PartitionError if a
/// block ends up empty.
PartitionMap spectral_partition(const Eigen::MatrixXd& affinity, std::size_t k, std::uint64_t seed,
                                SpectralDiagnostics* diagnostics = nullptr);

/// Adjusted Rand index between two partitions of the same vertex set.
double adjusted_rand_index(const PartitionMap& a, const PartitionMap& b);

}  // namespace partopf
