#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "partopf/bench.hpp"

namespace {

using partopf::Strategy;

std::vector<Strategy> parse_strategies(const std::vector<std::string>& names) {
  std::vector<Strategy> out;
  for (const std::string& n : names) {
    auto s = partopf::parse_strategy(n);
    if (!s) throw CLI::ValidationError("--strategies", "unknown strategy '" + n + "'");
    out.push_back(*s);
  }
  return out;
}

int run(const partopf::BenchmarkConfig& config, const std::string& out_path,
        std::string agreement_path, bool timing) {
  const partopf::BenchmarkReport report = partopf::run_benchmark(config);
  if (out_path.empty() || out_path == "-") {
    partopf::write_csv(std::cout, report.rows, timing);
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    partopf::write_csv(out, report.rows, timing);
    if (agreement_path.empty()) agreement_path = out_path + ".ari.csv";
  }
  if (!report.agreement.empty()) {
    for (const auto& a : report.agreement) {
      std::fprintf(stderr, "ARI spectral-ybus vs spectral-hessian %s k=%zu: %.4f\n",
                   a.case_name.c_str(), a.parts, a.adjusted_rand_index);
    }
    if (!agreement_path.empty()) {
      std::ofstream out(agreement_path);
      if (!out) throw std::runtime_error("cannot write " + agreement_path);
      partopf::write_agreement_csv(out, report.agreement);
    }
  }
  int failed = 0;
  for (const auto& row : report.rows) {
    if (row.status != partopf::RunStatus::failed) continue;
    ++failed;
    std::fprintf(stderr, "row %s %s k=%zu failed: %s\n", row.case_name.c_str(),
                 std::string(partopf::strategy_name(row.strategy)).c_str(), row.parts,
                 row.reason.c_str());
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed AC-OPF benchmark harness"};
  app.require_subcommand(1);

  partopf::BenchmarkConfig config;
  std::vector<std::string> strategy_names{"multilevel-ls", "multilevel-swap", "spectral-ybus",
                                          "spectral-hessian", "singleton"};
  std::optional<double> rho, mu, rho_factor, mu_factor;
  std::string out_path;
  std::string agreement_path;
  bool no_timing = false;

  CLI::App* run_cmd = app.add_subcommand("run", "Partition, split and solve a sweep of cases");
  run_cmd->add_option("--cases", config.case_paths, "MATPOWER case files")->check(CLI::ExistingFile);
  run_cmd->add_option("--strategies", strategy_names, "Partitioning strategies");
  run_cmd->add_option("--parts", config.parts, "Block counts")->check(CLI::PositiveNumber);
  run_cmd->add_option("--rho", rho, "Initial rho");
  run_cmd->add_option("--mu", mu, "Initial mu");
  run_cmd->add_option("--rho-factor", rho_factor, "Per-iteration rho factor");
  run_cmd->add_option("--mu-factor", mu_factor, "Per-iteration mu factor");
  run_cmd->add_flag("--grid", config.grid, "Keep the best run over the tuned parameter lattice");
  run_cmd->add_option("--tol", config.tol, "Termination tolerance")->check(CLI::PositiveNumber);
  run_cmd->add_option("--max-iter", config.max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", config.seed, "Partitioner seed");
  run_cmd->add_option("--workers", config.workers, "Rows solved concurrently");
  run_cmd->add_option("--imbalance", config.imbalance, "Multilevel balance slack")
      ->check(CLI::Range(0.0, 1.0));
  run_cmd->add_option("--out", out_path, "CSV output path, '-' for stdout");
  run_cmd->add_option("--agreement-out", agreement_path,
                      "Spectral agreement CSV (default <out>.ari.csv)");
  run_cmd->add_flag("--no-timing", no_timing, "Write wall_ms as 0");

  std::string draw_case;
  std::string draw_strategy = "multilevel-ls";
  std::size_t draw_parts = 2;
  std::uint64_t draw_seed = 1;
  std::string draw_out;
  CLI::App* draw_cmd = app.add_subcommand("draw", "Export a partition as a DOT graph");
  draw_cmd->add_option("--case", draw_case, "MATPOWER case file")->required()->check(CLI::ExistingFile);
  draw_cmd->add_option("--strategy", draw_strategy, "Partitioning strategy");
  draw_cmd->add_option("--parts", draw_parts, "Block count")->check(CLI::PositiveNumber);
  draw_cmd->add_option("--seed", draw_seed, "Partitioner seed");
  draw_cmd->add_option("--out", draw_out, "DOT output path, '-' for stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      config.strategies = parse_strategies(strategy_names);
      if (rho || mu || rho_factor || mu_factor) {
        partopf::ParamSet ps;
        if (rho) ps.rho0 = *rho;
        if (mu) ps.mu0 = *mu;
        if (rho_factor) ps.rho_factor = *rho_factor;
        if (mu_factor) ps.mu_factor = *mu_factor;
        config.params = ps;
      }
      return run(config, out_path, agreement_path, !no_timing);
    }

    const auto strategy = partopf::parse_strategy(draw_strategy);
    if (!strategy) {
      std::cerr << "unknown strategy '" << draw_strategy << "'\n";
      return 2;
    }
    const partopf::Network net = partopf::load_case(draw_case);
    std::optional<partopf::NlpResult> central;
    if (*strategy == Strategy::spectral_hessian) {
      central = partopf::solve_centralized(partopf::build_opf(net));
    }
    const partopf::PartitionMap p = partopf::make_partition(
        net, *strategy, draw_parts, draw_seed, central ? &*central : nullptr);
    const std::string dot = partopf::export_partition_dot(net, p);
    if (draw_out.empty() || draw_out == "-") {
      std::cout << dot;
    } else {
      std::ofstream out(draw_out);
      if (!out) throw std::runtime_error("cannot write " + draw_out);
      out << dot;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "opfbench: " << e.what() << '\n';
    return 2;
  }
}
