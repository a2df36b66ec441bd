#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "partopf/aladin.hpp"
#include "partopf/graphpart.hpp"
#include "partopf/network.hpp"

namespace partopf {

enum class Strategy { multilevel_ls, multilevel_swap, spectral_ybus, spectral_hessian, singleton };

std::string_view strategy_name(Strategy s);
/// Accepts the names returned by strategy_name.
std::optional<Strategy> parse_strategy(std::string_view name);
const std::vector<Strategy>& all_strategies();

struct ParamSet {
  double rho0 = 500.0;
  double mu0 = 500.0;
  double rho_factor = 1.05;
  double mu_factor = 2.0;

  bool operator==(const ParamSet&) const = default;
};

/// Tuned parameters for the bundled cases; (500, 500, 1.05, 2) otherwise.
/// `case_name` is the file stem, e.g. "case39".
ParamSet default_params(std::string_view case_name, std::size_t parts, Strategy s);

/// Every distinct tuned parameter set, in a fixed order.
const std::vector<ParamSet>& default_lattice();

/// Partition of `net` by strategy. `central` is needed for spectral_hessian
/// only. Singleton ignores `parts`.
PartitionMap make_partition(const Network& net, Strategy s, std::size_t parts, std::uint64_t seed,
                            const NlpResult* central = nullptr, double imbalance = 0.03);

struct BenchmarkConfig {
  std::vector<std::string> case_paths;
  std::vector<Strategy> strategies;
  std::vector<std::size_t> parts;
  std::optional<ParamSet> params;  // empty selects default_params per row
  bool grid = false;
  std::vector<ParamSet> lattice;  // grid mode; empty selects default_lattice()
  double tol = 1e-3;
  int max_iter = 500;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  double imbalance = 0.03;
};

enum class RunStatus { converged, iteration_limit, failed };

std::string_view status_name(RunStatus s);

struct BenchmarkRun {
  std::string case_name;
  Strategy strategy = Strategy::multilevel_ls;
  std::size_t parts = 0;
  ParamSet params;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::failed;
  std::string reason;  // set when status is failed
  int iterations = 0;
  double consensus_residual = 0.0;
  double objective = 0.0;
  double objective_gap_rel = 0.0;
  double cut_weight = 0.0;
  double balance = 0.0;
  double wall_ms = 0.0;
  double oracle_ms = 0.0;  // centralized solve reused by spectral_hessian
  PartitionMap partition;
  Eigen::VectorXd x;  // final ALADIN iterate, coupled layout
};

/// Agreement between the two spectral partitions of one (case, parts).
struct SpectralAgreement {
  std::string case_name;
  std::size_t parts = 0;
  double adjusted_rand_index = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRun> rows;  // config order: case, strategy, parts
  std::vector<SpectralAgreement> agreement;
};

/// Runs every (case, strategy, parts) row, at most `workers` concurrently.
/// Grid mode keeps, per row, the converged run with fewest iterations, or the
/// last run when none converged. Row failures are recorded, not thrown.
/// Throws NetworkError when a case file does not load.
BenchmarkReport run_benchmark(const BenchmarkConfig& config);

/// Writes the CSV header and one line per row. `timing` = false writes
/// wall_ms as 0 so that reruns compare byte for byte.
void write_csv(std::ostream& out, const std::vector<BenchmarkRun>& rows, bool timing = true);

void write_agreement_csv(std::ostream& out, const std::vector<SpectralAgreement>& rows);

/// Undirected DOT graph: buses in file order colored by block, then branches
/// in file order with cut branches drawn red.
std::string export_partition_dot(const Network& net, const PartitionMap& p);

}  // namespace partopf
