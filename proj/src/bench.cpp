#include "partopf/bench.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

namespace partopf {

namespace {

constexpr std::array<std::pair<Strategy, std::string_view>, 5> kNames{{
    {Strategy::multilevel_ls, "multilevel-ls"},
    {Strategy::multilevel_swap, "multilevel-swap"},
    {Strategy::spectral_ybus, "spectral-ybus"},
    {Strategy::spectral_hessian, "spectral-hessian"},
    {Strategy::singleton, "singleton"},
}};

struct TunedKey {
  std::string_view name;
  std::size_t parts;
  Strategy strategy;
};

struct Tuned {
  TunedKey key;
  ParamSet params;
};

// Multilevel local search stands in for KaFFPa and pass swapping for METIS.
const std::vector<Tuned>& tuned_table() {
  using S = Strategy;
  static const std::vector<Tuned> table = [] {
    struct Line {
      std::string_view name;
      std::size_t parts;
      ParamSet ml, sh, sy, sw;
    };
    const std::vector<Line> lines{
        {"case9", 2, {500, 500, 1.05, 2}, {500, 500, 1.05, 2}, {500, 500, 1.05, 2}, {500, 500, 1.05, 2}},
        {"case14", 2, {500, 500, 1.05, 2}, {500, 500, 1.05, 2}, {500, 500, 1.05, 2}, {500, 500, 1.05, 2}},
        {"case30", 2, {500, 1000, 1.05, 2}, {500, 500, 1.05, 2}, {500, 500, 1.05, 2}, {500, 1000, 1.05, 2}},
        {"case39", 2, {20, 2000, 1.15, 1.15}, {500, 2000, 1.15, 2}, {500, 2000, 1.15, 2}, {500, 2000, 1.15, 2}},
        {"case57", 2, {1000, 2000, 1.05, 2}, {1000, 2000, 1.05, 2}, {1000, 2000, 1.05, 2}, {100, 100, 1.2, 2}},
        {"case57", 3, {100, 2000, 1.2, 2}, {100, 100, 1.2, 2}, {100, 2000, 1.2, 2}, {500, 2500, 1.05, 1.15}},
        {"case118", 2, {100, 100, 1.2, 2}, {100, 100, 1.2, 2}, {100, 100, 1.2, 2}, {100, 100, 1.2, 2}},
        {"case118", 3, {100, 1000, 1.05, 1.5}, {100, 1000, 1.05, 1.5}, {100, 1000, 1.05, 1.5}, {100, 1000, 1.05, 1.5}},
        {"case118", 4, {500, 1000, 1.05, 1.5}, {500, 1000, 1.2, 1.5}, {500, 1000, 1.1, 1.5}, {500, 1000, 1.1, 2}},
        {"case118", 5, {500, 2000, 1.1, 2}, {500, 2000, 1.1, 1.2}, {500, 2000, 1.1, 1.2}, {500, 2000, 1.1, 1.2}},
        {"case300", 3, {100, 100, 1.1, 2}, {100, 100, 1.1, 2}, {100, 100, 1.1, 2}, {100, 100, 1.05, 1.1}},
        {"case300", 5, {100, 100, 1.1, 2}, {100, 100, 1.1, 2}, {100, 100, 1.1, 2}, {500, 500, 1.05, 2}},
    };
    std::vector<Tuned> out;
    for (const Line& l : lines) {
      out.push_back({{l.name, l.parts, S::multilevel_ls}, l.ml});
      out.push_back({{l.name, l.parts, S::spectral_hessian}, l.sh});
      out.push_back({{l.name, l.parts, S::spectral_ybus}, l.sy});
      out.push_back({{l.name, l.parts, S::multilevel_swap}, l.sw});
    }
    // Singleton rows; parts is unused for them.
    out.push_back({{"case9", 0, S::singleton}, {500, 500, 1.05, 2}});
    out.push_back({{"case14", 0, S::singleton}, {500, 500, 1.05, 2}});
    out.push_back({{"case30", 0, S::singleton}, {50, 250, 1.05, 1.05}});
    out.push_back({{"case39", 0, S::singleton}, {20, 2000, 1.15, 1.15}});
    return out;
  }();
  return table;
}

std::string case_stem(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

template <class F>
void run_parallel(std::size_t count, unsigned workers, F&& task) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> futures;
  for (unsigned w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < count; i = next++) task(i);
    }));
  }
  for (auto& f : futures) f.get();
}

struct CaseData {
  std::string name;
  Network net;
  NlpResult central;
  double central_ms = 0.0;
};

struct RowSpec {
  std::size_t case_index = 0;
  Strategy strategy = Strategy::multilevel_ls;
  std::size_t parts = 0;
};

BenchmarkRun run_row(const CaseData& cd, const RowSpec& spec, const std::vector<ParamSet>& candidates,
                     const BenchmarkConfig& config) {
  BenchmarkRun row;
  row.case_name = cd.name;
  row.strategy = spec.strategy;
  row.parts = spec.parts;
  row.seed = config.seed;
  row.params = candidates.front();
  if (spec.strategy == Strategy::spectral_hessian) row.oracle_ms = cd.central_ms;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (cd.central.status != NlpStatus::optimal) {
      throw std::runtime_error("centralized reference solve did not converge");
    }
    row.partition = make_partition(cd.net, spec.strategy, spec.parts, config.seed, &cd.central,
                                   config.imbalance);
    row.parts = row.partition.k;
    const PartitionMetrics metrics = partition_metrics(network_to_graph(cd.net), row.partition);
    row.cut_weight = metrics.cut_weight;
    row.balance = metrics.balance;
    const CoupledProblem cp = split_problem(cd.net, row.partition);

    std::optional<SolveReport> best;
    std::optional<SolveReport> last;
    for (const ParamSet& ps : candidates) {
      AladinParams prm;
      prm.rho0 = ps.rho0;
      prm.mu0 = ps.mu0;
      prm.rho_factor = ps.rho_factor;
      prm.mu_factor = ps.mu_factor;
      prm.eps = config.tol;
      prm.max_iter = config.max_iter;
      prm.workers = 1;
      SolveReport rep = aladin_solve(cp, prm);
      const bool better = rep.status == AladinStatus::converged &&
                          (!best || rep.iterations < best->iterations);
      if (better) {
        best = rep;
        row.params = ps;
      }
      if (!best) row.params = ps;
      last = std::move(rep);
    }
    const SolveReport& rep = best ? *best : *last;
    row.status = rep.status == AladinStatus::converged ? RunStatus::converged
                                                       : RunStatus::iteration_limit;
    row.iterations = rep.iterations;
    row.consensus_residual = rep.consensus_residual;
    row.objective = rep.objective;
    row.objective_gap_rel =
        std::abs(rep.objective - cd.central.objective) / std::max(1.0, std::abs(cd.central.objective));
    row.x = rep.x;
  } catch (const std::exception& e) {
    row.status = RunStatus::failed;
    row.reason = e.what();
  }
  row.wall_ms = elapsed_ms(start);
  return row;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  for (const auto& [value, name] : kNames) {
    if (value == s) return name;
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (const auto& [value, n] : kNames) {
    if (n == name) return value;
  }
  return std::nullopt;
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> all{Strategy::multilevel_ls, Strategy::multilevel_swap,
                                         Strategy::spectral_ybus, Strategy::spectral_hessian,
                                         Strategy::singleton};
  return all;
}

ParamSet default_params(std::string_view case_name, std::size_t parts, Strategy s) {
  const std::size_t key_parts = s == Strategy::singleton ? 0 : parts;
  for (const Tuned& t : tuned_table()) {
    if (t.key.name == case_name && t.key.parts == key_parts && t.key.strategy == s) return t.params;
  }
  return ParamSet{};
}

const std::vector<ParamSet>& default_lattice() {
  static const std::vector<ParamSet> lattice = [] {
    std::vector<ParamSet> out;
    for (const Tuned& t : tuned_table()) {
      if (std::find(out.begin(), out.end(), t.params) == out.end()) out.push_back(t.params);
    }
    return out;
  }();
  return lattice;
}

PartitionMap make_partition(const Network& net, Strategy s, std::size_t parts, std::uint64_t seed,
                            const NlpResult* central, double imbalance) {
  const WeightedGraph g = network_to_graph(net);
  switch (s) {
    case Strategy::multilevel_ls:
      return multilevel_partition(g, parts, imbalance, Refinement::local_search, seed);
    case Strategy::multilevel_swap:
      return multilevel_partition(g, parts, imbalance, Refinement::pass_swap, seed);
    case Strategy::spectral_ybus:
      return spectral_partition(build_affinity(net, AffinityMode::ybus), parts, seed);
    case Strategy::spectral_hessian: {
      if (central == nullptr) throw std::invalid_argument("spectral-hessian needs a centralized solution");
      const OpfProblem problem = build_opf(net);
      const SparseMatrix h = problem.hessian(central->x, central->multipliers.constraints, 1.0);
      return spectral_partition(build_affinity(net, AffinityMode::hessian, &h), parts, seed);
    }
    case Strategy::singleton:
      return singleton_partition(g);
  }
  throw std::invalid_argument("unknown strategy");
}

std::string_view status_name(RunStatus s) {
  switch (s) {
    case RunStatus::converged:
      return "converged";
    case RunStatus::iteration_limit:
      return "iteration-limit";
    case RunStatus::failed:
      return "failed";
  }
  return "unknown";
}

BenchmarkReport run_benchmark(const BenchmarkConfig& config) {
  std::vector<CaseData> cases(config.case_paths.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    cases[i].net = load_case(config.case_paths[i]);
    cases[i].name = case_stem(config.case_paths[i]);
  }
  run_parallel(cases.size(), config.workers, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    cases[i].central = solve_centralized(build_opf(cases[i].net));
    cases[i].central_ms = elapsed_ms(start);
  });

  std::vector<RowSpec> specs;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    for (Strategy s : config.strategies) {
      if (s == Strategy::singleton) {
        specs.push_back({c, s, cases[c].net.bus_count()});
        continue;
      }
      for (std::size_t k : config.parts) specs.push_back({c, s, k});
    }
  }

  BenchmarkReport report;
  report.rows.resize(specs.size());
  run_parallel(specs.size(), config.workers, [&](std::size_t r) {
    const RowSpec& spec = specs[r];
    const CaseData& cd = cases[spec.case_index];
    std::vector<ParamSet> candidates;
    if (config.grid) {
      candidates = config.lattice.empty() ? default_lattice() : config.lattice;
    } else {
      candidates.push_back(config.params ? *config.params
                                         : default_params(cd.name, spec.parts, spec.strategy));
    }
    report.rows[r] = run_row(cd, spec, candidates, config);
  });

  std::map<std::pair<std::size_t, std::size_t>, std::pair<const BenchmarkRun*, const BenchmarkRun*>> pairs;
  for (std::size_t r = 0; r < specs.size(); ++r) {
    const BenchmarkRun& row = report.rows[r];
    if (row.partition.assignment.empty()) continue;
    auto& slot = pairs[{specs[r].case_index, specs[r].parts}];
    if (row.strategy == Strategy::spectral_ybus) slot.first = &row;
    if (row.strategy == Strategy::spectral_hessian) slot.second = &row;
  }
  for (const auto& [key, slot] : pairs) {
    if (slot.first == nullptr || slot.second == nullptr) continue;
    report.agreement.push_back({cases[key.first].name, key.second,
                                adjusted_rand_index(slot.first->partition, slot.second->partition)});
  }
  return report;
}

void write_csv(std::ostream& out, const std::vector<BenchmarkRun>& rows, bool timing) {
  out << "case,strategy,parts,rho0,mu0,rho_factor,mu_factor,seed,status,iterations,"
         "consensus_residual,objective,objective_gap_rel,cut_weight,balance,wall_ms\n";
  char buf[512];
  for (const BenchmarkRun& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.10g,%.10g,%.10g,%.10g,%llu,%s,%d,%.6e,%.10g,%.6e,%.10g,%.6g,%.1f\n",
                  r.case_name.c_str(), std::string(strategy_name(r.strategy)).c_str(), r.parts,
                  r.params.rho0, r.params.mu0, r.params.rho_factor, r.params.mu_factor,
                  static_cast<unsigned long long>(r.seed), std::string(status_name(r.status)).c_str(),
                  r.iterations, r.consensus_residual, r.objective, r.objective_gap_rel, r.cut_weight,
                  r.balance, timing ? r.wall_ms : 0.0);
    out << buf;
  }
}

void write_agreement_csv(std::ostream& out, const std::vector<SpectralAgreement>& rows) {
  out << "case,parts,adjusted_rand_index\n";
  char buf[256];
  for (const SpectralAgreement& a : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f\n", a.case_name.c_str(), a.parts,
                  a.adjusted_rand_index);
    out << buf;
  }
}

std::string export_partition_dot(const Network& net, const PartitionMap& p) {
  check_partition(network_to_graph(net), p);
  static constexpr std::array<std::string_view, 10> kPalette{
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ostringstream out;
  out << "graph \"" << (net.name.empty() ? "network" : net.name) << "\" {\n";
  out << "  node [shape=circle, style=filled];\n";
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    out << "  n" << i << " [label=\"" << net.buses[i].id << "\", fillcolor=\""
        << kPalette[p.assignment[i] % kPalette.size()] << "\"];\n";
  }
  // One edge per connected bus pair, as in network_to_graph.
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const Branch& br : net.branches) {
    if (!br.in_service || br.from == br.to) continue;
    const auto key = std::minmax(br.from, br.to);
    if (!seen.insert({key.first, key.second}).second) continue;
    out << "  n" << key.first << " -- n" << key.second;
    if (p.assignment[key.first] != p.assignment[key.second]) out << " [color=red, penwidth=2]";
    out << ";\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace partopf
