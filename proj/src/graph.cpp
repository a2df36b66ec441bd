#include <algorithm>
#include <map>

#include "partopf/graphpart.hpp"

namespace partopf {

WeightedGraph WeightedGraph::from_edges(std::size_t n, std::vector<Edge> edges) {
  std::map<std::pair<std::size_t, std::size_t>, double> merged;
  for (const Edge& e : edges) {
    if (e.u == e.v) continue;
    if (e.u >= n || e.v >= n) throw std::out_of_range("edge endpoint out of range");
    auto key = std::minmax(e.u, e.v);
    merged[{key.first, key.second}] += e.weight;
  }
  WeightedGraph g;
  g.vertices = n;
  g.edges.reserve(merged.size());
  for (const auto& [key, w] : merged) g.edges.push_back({key.first, key.second, w});
  return g;
}

double WeightedGraph::total_weight() const {
  double w = 0.0;
  for (const Edge& e : edges) w += e.weight;
  return w;
}

std::vector<std::size_t> PartitionMap::block_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t b : assignment) ++sizes.at(b);
  return sizes;
}

std::vector<std::vector<std::size_t>> PartitionMap::blocks() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t v = 0; v < assignment.size(); ++v) out.at(assignment[v]).push_back(v);
  return out;
}

WeightedGraph network_to_graph(const Network& net) {
  std::vector<Edge> edges;
  edges.reserve(net.branches.size());
  for (const Branch& br : net.branches) {
    if (!br.in_service || br.from == br.to) continue;
    edges.push_back({std::min(br.from, br.to), std::max(br.from, br.to), 1.0});
  }
  return WeightedGraph::from_edges(net.buses.size(), std::move(edges));
}

PartitionMap singleton_partition(const WeightedGraph& g) {
  PartitionMap p;
  p.k = g.vertices;
  p.assignment.resize(g.vertices);
  for (std::size_t v = 0; v < g.vertices; ++v) p.assignment[v] = v;
  return p;
}

void check_partition(const WeightedGraph& g, const PartitionMap& p) {
  if (p.assignment.size() != g.vertices) throw PartitionError("assignment is not total");
  if (p.k == 0 && g.vertices > 0) throw PartitionError("partition has no blocks");
  std::vector<std::size_t> sizes(p.k, 0);
  for (std::size_t b : p.assignment) {
    if (b >= p.k) throw PartitionError("block id out of range");
    ++sizes[b];
  }
  for (std::size_t b = 0; b < p.k; ++b) {
    if (sizes[b] == 0) throw PartitionError("block " + std::to_string(b) + " is empty");
  }
}

PartitionMetrics partition_metrics(const WeightedGraph& g, const PartitionMap& p) {
  check_partition(g, p);
  PartitionMetrics m;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const Edge& edge = g.edges[e];
    if (p.assignment[edge.u] != p.assignment[edge.v]) {
      m.cut_weight += edge.weight;
      m.cut_edges.push_back(e);
    }
  }
  auto sizes = p.block_sizes();
  std::size_t largest = sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
  std::size_t ideal = (g.vertices + p.k - 1) / std::max<std::size_t>(p.k, 1);
  m.balance = ideal == 0 ? 0.0 : static_cast<double>(largest) / static_cast<double>(ideal);
  return m;
}

double adjusted_rand_index(const PartitionMap& a, const PartitionMap& b) {
  if (a.assignment.size() != b.assignment.size()) {
    throw std::invalid_argument("partitions cover different vertex sets");
  }
  const std::size_t n = a.assignment.size();
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::vector<double> rows(a.k, 0.0);
  std::vector<double> cols(b.k, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    table[{a.assignment[v], b.assignment[v]}] += 1.0;
    rows.at(a.assignment[v]) += 1.0;
    cols.at(b.assignment[v]) += 1.0;
  }
  double index = 0.0;
  for (const auto& [key, count] : table) index += choose2(count);
  double sum_rows = 0.0;
  double sum_cols = 0.0;
  for (double r : rows) sum_rows += choose2(r);
  for (double c : cols) sum_cols += choose2(c);
  double total = choose2(static_cast<double>(n));
  double expected = total > 0.0 ? sum_rows * sum_cols / total : 0.0;
  double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace partopf
