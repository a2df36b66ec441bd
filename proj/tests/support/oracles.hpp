#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "partopf/graphpart.hpp"
#include "partopf/network.hpp"

namespace oracle {

std::string case_path(const std::string& name);

/// Admittance matrix assembled branch by branch into a dense matrix.
Eigen::MatrixXcd dense_ybus(const partopf::Network& net);

/// Central differences with step h * max(1, |x_j|).
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h = 1e-6);
Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h = 1e-6);

/// max |a - b| / max(1, max |b|).
double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Minimum cut weight over all 2-way splits with block sizes floor(n/2) and
/// ceil(n/2), by enumeration.
double brute_force_bisection(const partopf::WeightedGraph& g);

/// Connected random graph: a random spanning tree plus extra edges.
partopf::WeightedGraph random_connected_graph(std::size_t n, std::size_t extra, std::mt19937_64& rng);

/// Coupling QP solved from the full KKT system in (dx, s, lambda_qp, kappa)
/// with a full-pivot LU.
struct DenseQpSolution {
  Eigen::VectorXd delta_x;
  Eigen::VectorXd s;
  Eigen::VectorXd lambda_qp;
};
DenseQpSolution dense_coupling_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g,
                                  const Eigen::MatrixXd& c, const Eigen::MatrixXd& a,
                                  const Eigen::VectorXd& b, const Eigen::VectorXd& lambda,
                                  double mu, const Eigen::VectorXd& x);

/// Minimal reader for undirected DOT graphs: `graph [id] { stmt; ... }` with
/// node statements, `a -- b` edge statements and `[k=v, ...]` attribute lists.
/// Throws std::runtime_error on anything else.
struct DotGraph {
  std::string name;
  std::vector<std::string> nodes;
  std::map<std::string, std::map<std::string, std::string>> node_attrs;
  struct Edge {
    std::string a, b;
    std::map<std::string, std::string> attrs;
  };
  std::vector<Edge> edges;
};
DotGraph parse_dot(const std::string& text);

}  // namespace oracle
