#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "partopf/graphpart.hpp"

namespace partopf {

namespace {

using Adjacency = std::vector<std::vector<std::pair<std::size_t, double>>>;

struct Level {
  std::vector<long> weight;
  Adjacency adj;
  std::vector<std::size_t> to_coarse;  // filled when this level gets contracted

  std::size_t size() const { return weight.size(); }
};

Level from_graph(const WeightedGraph& g) {
  Level l;
  l.weight.assign(g.vertices, 1);
  l.adj.resize(g.vertices);
  for (const Edge& e : g.edges) {
    l.adj[e.u].emplace_back(e.v, e.weight);
    l.adj[e.v].emplace_back(e.u, e.weight);
  }
  return l;
}

/// Heavy-edge matching (weight descending, ties by lower then upper endpoint)
/// followed by contraction. Returns false when nothing could be matched.
bool contract(Level& fine, Level& coarse, long cap) {
  struct Cand {
    double w;
    std::size_t u;
    std::size_t v;
  };
  std::vector<Cand> cands;
  for (std::size_t u = 0; u < fine.size(); ++u) {
    for (auto [v, w] : fine.adj[u]) {
      if (u < v) cands.push_back({w, u, v});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.w != b.w) return a.w > b.w;
    if (a.u != b.u) return a.u < b.u;
    return a.v < b.v;
  });
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> mate(fine.size(), kNone);
  std::size_t matched = 0;
  for (const Cand& c : cands) {
    if (mate[c.u] != kNone || mate[c.v] != kNone) continue;
    if (fine.weight[c.u] + fine.weight[c.v] > cap) continue;
    mate[c.u] = c.v;
    mate[c.v] = c.u;
    ++matched;
  }
  if (matched == 0) return false;

  fine.to_coarse.assign(fine.size(), kNone);
  std::size_t next = 0;
  for (std::size_t u = 0; u < fine.size(); ++u) {
    if (fine.to_coarse[u] != kNone) continue;
    fine.to_coarse[u] = next;
    if (mate[u] != kNone) fine.to_coarse[mate[u]] = next;
    ++next;
  }
  coarse = Level{};
  coarse.weight.assign(next, 0);
  coarse.adj.resize(next);
  for (std::size_t u = 0; u < fine.size(); ++u) coarse.weight[fine.to_coarse[u]] += fine.weight[u];
  std::vector<double> acc(next, 0.0);
  std::vector<std::size_t> touched;
  std::vector<std::vector<std::size_t>> members(next);
  for (std::size_t u = 0; u < fine.size(); ++u) members[fine.to_coarse[u]].push_back(u);
  for (std::size_t c = 0; c < next; ++c) {
    touched.clear();
    for (std::size_t u : members[c]) {
      for (auto [v, w] : fine.adj[u]) {
        std::size_t cv = fine.to_coarse[v];
        if (cv == c) continue;
        if (acc[cv] == 0.0) touched.push_back(cv);
        acc[cv] += w;
      }
    }
    std::sort(touched.begin(), touched.end());
    for (std::size_t cv : touched) {
      coarse.adj[c].emplace_back(cv, acc[cv]);
      acc[cv] = 0.0;
    }
  }
  return true;
}

/// Mutable partition state over one level.
class Partition {
 public:
  Partition(const Level& level, std::size_t k, long bound)
      : level_(level), k_(k), bound_(bound), part_(level.size(), 0), block_weight_(k, 0),
        block_count_(k, 0) {}

  void assign(std::vector<std::size_t> part) {
    part_ = std::move(part);
    std::fill(block_weight_.begin(), block_weight_.end(), 0);
    std::fill(block_count_.begin(), block_count_.end(), 0);
    for (std::size_t v = 0; v < part_.size(); ++v) {
      block_weight_[part_[v]] += level_.weight[v];
      ++block_count_[part_[v]];
    }
    cut_ = 0.0;
    for (std::size_t u = 0; u < level_.size(); ++u) {
      for (auto [v, w] : level_.adj[u]) {
        if (u < v && part_[u] != part_[v]) cut_ += w;
      }
    }
  }

  const std::vector<std::size_t>& part() const { return part_; }
  double cut() const { return cut_; }
  long bound() const { return bound_; }
  long weight_of(std::size_t b) const { return block_weight_[b]; }
  std::size_t count_of(std::size_t b) const { return block_count_[b]; }

  long overload() const {
    long o = 0;
    for (long w : block_weight_) o += std::max(0L, w - bound_);
    return o;
  }

  double connection(std::size_t v, std::size_t block) const {
    double c = 0.0;
    for (auto [u, w] : level_.adj[v]) {
      if (part_[u] == block) c += w;
    }
    return c;
  }

  double edge_weight(std::size_t u, std::size_t v) const {
    for (auto [x, w] : level_.adj[u]) {
      if (x == v) return w;
    }
    return 0.0;
  }

  /// Cut decrease obtained by moving v to `to`.
  double gain(std::size_t v, std::size_t to) const {
    return connection(v, to) - connection(v, part_[v]);
  }

  void move(std::size_t v, std::size_t to) {
    std::size_t from = part_[v];
    cut_ -= gain(v, to);
    part_[v] = to;
    block_weight_[from] -= level_.weight[v];
    block_weight_[to] += level_.weight[v];
    --block_count_[from];
    ++block_count_[to];
  }

  /// Blocks adjacent to v other than its own.
  std::vector<std::size_t> neighbor_blocks(std::size_t v) const {
    std::vector<std::size_t> out;
    for (auto [u, w] : level_.adj[v]) {
      (void)w;
      if (part_[u] != part_[v] && std::find(out.begin(), out.end(), part_[u]) == out.end()) {
        out.push_back(part_[u]);
      }
    }
    return out;
  }

  const Level& level() const { return level_; }
  std::size_t k() const { return k_; }

 private:
  const Level& level_;
  std::size_t k_;
  long bound_;
  std::vector<std::size_t> part_;
  std::vector<long> block_weight_;
  std::vector<std::size_t> block_count_;
  double cut_ = 0.0;
};

struct Score {
  long overload;
  double cut;
  bool better_than(const Score& o) const {
    if (overload != o.overload) return overload < o.overload;
    return cut < o.cut - 1e-12;
  }
};

Score score(const Partition& p) { return {p.overload(), p.cut()}; }

/// Moves vertices out of overweight blocks into blocks with room, best gain
/// first, never emptying a block.
void rebalance(Partition& p) {
  const Level& lv = p.level();
  for (std::size_t guard = 0; guard < 4 * lv.size() && p.overload() > 0; ++guard) {
    double best_gain = -std::numeric_limits<double>::infinity();
    std::size_t best_v = lv.size();
    std::size_t best_to = 0;
    for (std::size_t v = 0; v < lv.size(); ++v) {
      std::size_t from = p.part()[v];
      if (p.weight_of(from) <= p.bound() || p.count_of(from) <= 1) continue;
      for (std::size_t to = 0; to < p.k(); ++to) {
        if (to == from || p.weight_of(to) + lv.weight[v] > p.bound()) continue;
        double g = p.gain(v, to);
        if (g > best_gain) {
          best_gain = g;
          best_v = v;
          best_to = to;
        }
      }
    }
    if (best_v == lv.size()) break;
    p.move(best_v, best_to);
  }
}

/// k-way Fiduccia-Mattheyses local search: tentative single-vertex moves
/// (temporarily allowed one vertex weight past the bound), rolled back to the
/// best prefix by (overload, cut).
bool local_search_pass(Partition& p, std::mt19937_64& rng) {
  const Level& lv = p.level();
  const std::size_t n = lv.size();
  long slack = *std::max_element(lv.weight.begin(), lv.weight.end());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<char> locked(n, 0);
  std::vector<std::pair<std::size_t, std::size_t>> moves;  // (vertex, previous block)
  Score start = score(p);
  Score best = start;
  std::size_t best_len = 0;
  const std::size_t patience = std::max<std::size_t>(16, n / 4);

  for (std::size_t step = 0; step < n; ++step) {
    double best_gain = -std::numeric_limits<double>::infinity();
    long best_over = std::numeric_limits<long>::max();
    std::size_t mv = n;
    std::size_t mt = 0;
    for (std::size_t v : order) {
      if (locked[v]) continue;
      std::size_t from = p.part()[v];
      if (p.count_of(from) <= 1) continue;
      for (std::size_t to : p.neighbor_blocks(v)) {
        long after_to = p.weight_of(to) + lv.weight[v];
        if (after_to > p.bound() + slack) continue;
        double g = p.gain(v, to);
        long over_delta = std::max(0L, after_to - p.bound()) -
                          std::max(0L, p.weight_of(to) - p.bound()) +
                          std::max(0L, p.weight_of(from) - lv.weight[v] - p.bound()) -
                          std::max(0L, p.weight_of(from) - p.bound());
        if (g > best_gain + 1e-12 || (std::abs(g - best_gain) <= 1e-12 && over_delta < best_over)) {
          best_gain = g;
          best_over = over_delta;
          mv = v;
          mt = to;
        }
      }
    }
    if (mv == n) break;
    moves.emplace_back(mv, p.part()[mv]);
    p.move(mv, mt);
    locked[mv] = 1;
    Score now = score(p);
    if (now.better_than(best)) {
      best = now;
      best_len = moves.size();
    }
    if (moves.size() - best_len > patience) break;
  }
  while (moves.size() > best_len) {
    auto [v, prev] = moves.back();
    moves.pop_back();
    p.move(v, prev);
  }
  return best.better_than(start);
}

/// Kernighan-Lin pass between blocks a and b: locked pairwise swaps, rolled
/// back to the best cumulative gain.
bool swap_pass(Partition& p, std::size_t a, std::size_t b) {
  const Level& lv = p.level();
  const std::size_t n = lv.size();
  std::vector<char> locked(n, 0);
  std::vector<std::pair<std::size_t, std::size_t>> swaps;
  double cum = 0.0;
  double best_cum = 0.0;
  std::size_t best_len = 0;
  Score start = score(p);

  for (;;) {
    std::vector<std::size_t> in_a;
    std::vector<std::size_t> in_b;
    for (std::size_t v = 0; v < n; ++v) {
      if (locked[v]) continue;
      if (p.part()[v] == a) in_a.push_back(v);
      if (p.part()[v] == b) in_b.push_back(v);
    }
    if (in_a.empty() || in_b.empty()) break;
    std::vector<double> da(in_a.size());
    std::vector<double> db(in_b.size());
    for (std::size_t i = 0; i < in_a.size(); ++i) da[i] = p.gain(in_a[i], b);
    for (std::size_t j = 0; j < in_b.size(); ++j) db[j] = p.gain(in_b[j], a);
    double best = -std::numeric_limits<double>::infinity();
    std::size_t bu = n;
    std::size_t bv = n;
    for (std::size_t i = 0; i < in_a.size(); ++i) {
      for (std::size_t j = 0; j < in_b.size(); ++j) {
        std::size_t u = in_a[i];
        std::size_t v = in_b[j];
        long wa = p.weight_of(a) - lv.weight[u] + lv.weight[v];
        long wb = p.weight_of(b) - lv.weight[v] + lv.weight[u];
        bool ok = (wa <= p.bound() || wa <= p.weight_of(a)) && (wb <= p.bound() || wb <= p.weight_of(b));
        if (!ok) continue;
        double g = da[i] + db[j] - 2.0 * p.edge_weight(u, v);
        if (g > best + 1e-12) {
          best = g;
          bu = u;
          bv = v;
        }
      }
    }
    if (bu == n) break;
    p.move(bu, b);
    p.move(bv, a);
    locked[bu] = locked[bv] = 1;
    swaps.emplace_back(bu, bv);
    cum += best;
    if (cum > best_cum + 1e-12) {
      best_cum = cum;
      best_len = swaps.size();
    }
  }
  while (swaps.size() > best_len) {
    auto [u, v] = swaps.back();
    swaps.pop_back();
    p.move(u, a);
    p.move(v, b);
  }
  return score(p).better_than(start);
}

void refine(Partition& p, Refinement mode, std::mt19937_64& rng) {
  rebalance(p);
  constexpr int kMaxRounds = 12;
  for (int round = 0; round < kMaxRounds; ++round) {
    bool improved = false;
    if (mode == Refinement::local_search) {
      improved = local_search_pass(p, rng);
    } else {
      for (std::size_t a = 0; a < p.k(); ++a) {
        for (std::size_t b = a + 1; b < p.k(); ++b) {
          bool adjacent = false;
          const Level& lv = p.level();
          for (std::size_t u = 0; u < lv.size() && !adjacent; ++u) {
            if (p.part()[u] != a) continue;
            for (auto [v, w] : lv.adj[u]) {
              (void)w;
              if (p.part()[v] == b) {
                adjacent = true;
                break;
              }
            }
          }
          if (adjacent && swap_pass(p, a, b)) improved = true;
        }
      }
    }
    if (p.overload() > 0) rebalance(p);
    if (!improved) break;
  }
}

/// Greedy graph growing: blocks 0..k-2 grow from a random seed by strongest
/// connection until they reach their share of the remaining weight.
std::vector<std::size_t> grow_regions(const Level& lv, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = lv.size();
  constexpr std::size_t kFree = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> part(n, kFree);
  long remaining = std::accumulate(lv.weight.begin(), lv.weight.end(), 0L);
  std::size_t unassigned = n;

  for (std::size_t b = 0; b + 1 < k; ++b) {
    long target = static_cast<long>(
        std::llround(static_cast<double>(remaining) / static_cast<double>(k - b)));
    long have = 0;
    std::vector<double> conn(n, 0.0);
    std::vector<char> rejected(n, 0);
    while (have < target && unassigned > (k - b - 1)) {
      std::size_t pick = n;
      double best = 0.0;
      for (std::size_t v = 0; v < n; ++v) {
        if (part[v] != kFree || rejected[v] || conn[v] <= 0.0) continue;
        if (conn[v] > best) {
          best = conn[v];
          pick = v;
        }
      }
      if (pick == n) {
        std::vector<std::size_t> free;
        for (std::size_t v = 0; v < n; ++v) {
          if (part[v] == kFree && !rejected[v]) free.push_back(v);
        }
        if (free.empty()) break;
        pick = free[rng() % free.size()];
      }
      if (have > 0 && have + lv.weight[pick] > target) {
        rejected[pick] = 1;
        continue;
      }
      part[pick] = b;
      have += lv.weight[pick];
      --unassigned;
      for (auto [u, w] : lv.adj[pick]) {
        if (part[u] == kFree) conn[u] += w;
      }
    }
    remaining -= have;
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (part[v] == kFree) part[v] = k - 1;
  }
  // Every block needs at least one vertex.
  std::vector<std::size_t> count(k, 0);
  for (std::size_t b : part) ++count[b];
  for (std::size_t b = 0; b < k; ++b) {
    if (count[b] > 0) continue;
    std::size_t donor = static_cast<std::size_t>(
        std::max_element(count.begin(), count.end()) - count.begin());
    for (std::size_t v = 0; v < n; ++v) {
      if (part[v] == donor) {
        part[v] = b;
        --count[donor];
        ++count[b];
        break;
      }
    }
  }
  return part;
}

}  // namespace

PartitionMap multilevel_partition(const WeightedGraph& g, std::size_t k, double imbalance,
                                  Refinement refinement, std::uint64_t seed) {
  const std::size_t n = g.vertices;
  if (k == 0) throw PartitionError("k must be at least 1");
  if (k > n) throw PartitionError("k exceeds the number of vertices");
  if (!(imbalance >= 0.0 && imbalance <= 1.0)) throw PartitionError("imbalance must lie in [0, 1]");

  PartitionMap out;
  out.k = k;
  out.assignment.assign(n, 0);
  if (k == 1) return out;
  if (k == n) return singleton_partition(g);

  const std::size_t ideal = (n + k - 1) / k;
  const long bound = static_cast<long>(
      std::floor((1.0 + imbalance) * static_cast<double>(ideal) + 1e-9));
  const std::size_t coarse_target = std::max<std::size_t>(30, 2 * k);
  const long cap = std::max(1L, bound / 4);

  std::mt19937_64 rng(seed);
  std::vector<Level> levels;
  levels.push_back(from_graph(g));
  while (levels.back().size() > coarse_target) {
    Level coarse;
    if (!contract(levels.back(), coarse, cap)) break;
    if (coarse.size() * 20 > levels.back().size() * 19) {
      levels.back().to_coarse.clear();
      break;
    }
    levels.push_back(std::move(coarse));
  }

  // Initial partitioning on the coarsest level: best of several seeded tries.
  const Level& top = levels.back();
  constexpr int kTries = 16;
  std::vector<std::size_t> best_part;
  Score best_score{std::numeric_limits<long>::max(), std::numeric_limits<double>::infinity()};
  for (int t = 0; t < kTries; ++t) {
    Partition p(top, k, bound);
    p.assign(grow_regions(top, k, rng));
    refine(p, refinement, rng);
    Score s = score(p);
    if (best_part.empty() || s.better_than(best_score)) {
      best_score = s;
      best_part = p.part();
    }
  }

  // Uncoarsen: project and refine level by level.
  for (std::size_t li = levels.size() - 1; li-- > 0;) {
    const Level& fine = levels[li];
    std::vector<std::size_t> projected(fine.size());
    for (std::size_t v = 0; v < fine.size(); ++v) projected[v] = best_part[fine.to_coarse[v]];
    Partition p(fine, k, bound);
    p.assign(std::move(projected));
    refine(p, refinement, rng);
    best_part = p.part();
  }

  Partition final_state(levels.front(), k, bound);
  final_state.assign(best_part);
  if (final_state.overload() > 0) rebalance(final_state);
  if (final_state.overload() > 0) throw PartitionError("balance bound could not be met");
  out.assignment = final_state.part();
  check_partition(g, out);
  return out;
}

}  // namespace partopf
