#include "partopf/splitter.hpp"

#include <cmath>
#include <complex>

namespace partopf {

namespace {

struct BlockBuilder {
  Network net;
  std::vector<bool> auxiliary;
  std::vector<std::size_t> source_buses;  // original index, or npos for auxiliary buses
  std::vector<std::size_t> source_gens;
};

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

}  // namespace

Eigen::VectorXd CoupledProblem::local(const Eigen::VectorXd& x, std::size_t i) const {
  const SubProblem& sp = subproblems[i];
  return x.segment(static_cast<Eigen::Index>(sp.offset), static_cast<Eigen::Index>(sp.problem.size()));
}

CoupledProblem split_problem(const Network& net, const PartitionMap& partition) {
  WeightedGraph graph = network_to_graph(net);
  check_partition(graph, partition);
  const std::size_t n = net.buses.size();
  const std::size_t k = partition.k;

  std::vector<BlockBuilder> blocks(k);
  std::vector<std::size_t> bus_local(n);
  for (auto& b : blocks) {
    b.net.name = net.name;
    b.net.base_mva = net.base_mva;
  }
  for (std::size_t i = 0; i < n; ++i) {
    BlockBuilder& b = blocks[partition.assignment[i]];
    bus_local[i] = b.net.buses.size();
    b.net.buses.push_back(net.buses[i]);
    b.auxiliary.push_back(false);
    b.source_buses.push_back(i);
  }
  std::vector<std::size_t> gen_block(net.generators.size());
  std::vector<std::size_t> gen_local(net.generators.size());
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    Generator gen = net.generators[g];
    std::size_t blk = partition.assignment[gen.bus];
    BlockBuilder& b = blocks[blk];
    gen.bus = bus_local[gen.bus];
    gen_block[g] = blk;
    gen_local[g] = b.net.generators.size();
    b.net.generators.push_back(gen);
    b.source_gens.push_back(g);
  }

  struct PendingPair {
    std::size_t branch;
    std::size_t from_block, from_bus;
    std::size_t to_block, to_bus;
  };
  std::vector<PendingPair> pending;

  for (std::size_t e = 0; e < net.branches.size(); ++e) {
    const Branch& br = net.branches[e];
    if (!br.in_service) continue;
    std::size_t bf = partition.assignment[br.from];
    std::size_t bt = partition.assignment[br.to];
    if (bf == bt) {
      Branch local = br;
      local.from = bus_local[br.from];
      local.to = bus_local[br.to];
      blocks[bf].net.branches.push_back(local);
      continue;
    }
    const Bus& from_bus = net.buses[br.from];
    const Bus& to_bus = net.buses[br.to];
    Bus aux;
    aux.id = -static_cast<int>(e + 1);
    aux.kind = BusKind::load;
    aux.v_min = std::min(from_bus.v_min / br.tap, to_bus.v_min);
    aux.v_max = std::max(from_bus.v_max / br.tap, to_bus.v_max);

    BlockBuilder& fb = blocks[bf];
    std::size_t l1 = fb.net.buses.size();
    fb.net.buses.push_back(aux);
    fb.auxiliary.push_back(true);
    fb.source_buses.push_back(kNone);
    Branch half_from{bus_local[br.from], l1, br.r / 2.0, br.x / 2.0, 0.0, br.tap, br.shift, true};
    fb.net.branches.push_back(half_from);
    fb.net.buses[bus_local[br.from]].shunt_b += br.b_charge / (2.0 * br.tap * br.tap);

    BlockBuilder& tb = blocks[bt];
    std::size_t l2 = tb.net.buses.size();
    tb.net.buses.push_back(aux);
    tb.auxiliary.push_back(true);
    tb.source_buses.push_back(kNone);
    Branch half_to{l2, bus_local[br.to], br.r / 2.0, br.x / 2.0, 0.0, 1.0, 0.0, true};
    tb.net.branches.push_back(half_to);
    tb.net.buses[bus_local[br.to]].shunt_b += br.b_charge / 2.0;

    pending.push_back({e, bf, l1, bt, l2});
  }

  CoupledProblem cp{build_opf(net), {}, {}, {}, {}, 0, {}, {}, std::move(gen_block),
                    std::move(gen_local)};
  cp.bus_local = bus_local;
  cp.bus_block = partition.assignment;

  const double slack_v = net.slack_voltage();
  std::size_t offset = 0;
  for (std::size_t b = 0; b < k; ++b) {
    BlockBuilder& bb = blocks[b];
    bb.net.reindex();
    OpfProblem prob(std::move(bb.net), std::move(bb.auxiliary), slack_v);
    prob.set_sources(std::move(bb.source_buses), std::move(bb.source_gens));
    std::size_t size = prob.size();
    cp.subproblems.push_back(SubProblem{b, std::move(prob), offset});
    offset += size;
  }
  cp.total = offset;

  auto copy_of = [&](std::size_t block, std::size_t bus) {
    const SubProblem& sp = cp.subproblems[block];
    const BusSlots& s = sp.problem.slots(bus);
    return AuxiliaryCopy{block,           bus, sp.global(s.theta), sp.global(s.v),
                         sp.global(s.p.back()), sp.global(s.q.back())};
  };

  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t r = 0; r < pending.size(); ++r) {
    const PendingPair& pp = pending[r];
    AuxiliaryBusPair pair{pp.branch, copy_of(pp.from_block, pp.from_bus),
                          copy_of(pp.to_block, pp.to_bus)};
    auto row = static_cast<Eigen::Index>(4 * r);
    auto col = [](std::size_t c) { return static_cast<Eigen::Index>(c); };
    trip.emplace_back(row, col(pair.from_side.v), 1.0);
    trip.emplace_back(row, col(pair.to_side.v), -1.0);
    trip.emplace_back(row + 1, col(pair.from_side.theta), 1.0);
    trip.emplace_back(row + 1, col(pair.to_side.theta), -1.0);
    trip.emplace_back(row + 2, col(pair.from_side.p), 1.0);
    trip.emplace_back(row + 2, col(pair.to_side.p), 1.0);
    trip.emplace_back(row + 3, col(pair.from_side.q), 1.0);
    trip.emplace_back(row + 3, col(pair.to_side.q), 1.0);
    cp.pairs.push_back(pair);
  }
  const auto rows = static_cast<Eigen::Index>(4 * pending.size());
  cp.coupling.resize(rows, static_cast<Eigen::Index>(cp.total));
  cp.coupling.setFromTriplets(trip.begin(), trip.end());
  cp.coupling.makeCompressed();
  cp.rhs = Eigen::VectorXd::Zero(rows);
  return cp;
}

Eigen::VectorXd lift_solution(const CoupledProblem& cp, const Eigen::VectorXd& centralized) {
  using C = std::complex<double>;
  const OpfProblem& central = cp.central;
  if (centralized.size() != static_cast<Eigen::Index>(central.size())) {
    throw std::invalid_argument("centralized point does not match the OPF layout");
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cp.total));
  auto idx = [](std::size_t i) { return static_cast<Eigen::Index>(i); };

  for (std::size_t i = 0; i < central.bus_count(); ++i) {
    const SubProblem& sp = cp.subproblems[cp.bus_block[i]];
    const BusSlots& local = sp.problem.slots(cp.bus_local[i]);
    const BusSlots& orig = central.slots(i);
    x[idx(sp.global(local.theta))] = centralized[idx(orig.theta)];
    x[idx(sp.global(local.v))] = centralized[idx(orig.v)];
  }
  for (std::size_t g = 0; g < cp.gen_block.size(); ++g) {
    const SubProblem& sp = cp.subproblems[cp.gen_block[g]];
    x[idx(sp.global(sp.problem.gen_p(cp.gen_local[g])))] = centralized[idx(central.gen_p(g))];
    x[idx(sp.global(sp.problem.gen_q(cp.gen_local[g])))] = centralized[idx(central.gen_q(g))];
  }

  const Network& net = central.network();
  for (const AuxiliaryBusPair& pair : cp.pairs) {
    const Branch& br = net.branches[pair.branch];
    const BusSlots& f = central.slots(br.from);
    const BusSlots& t = central.slots(br.to);
    const double theta_t = centralized[idx(t.theta)];
    // Voltages relative to the to-bus angle keep the arg() call near zero.
    C from_internal = std::polar(centralized[idx(f.v)] / br.tap,
                                 centralized[idx(f.theta)] - br.shift - theta_t);
    C mid = 0.5 * (from_internal + C(centralized[idx(t.v)], 0.0));
    double v_mid = std::abs(mid);
    double theta_mid = theta_t + std::arg(mid);
    for (const AuxiliaryCopy* copy : {&pair.from_side, &pair.to_side}) {
      x[idx(copy->theta)] = theta_mid;
      x[idx(copy->v)] = v_mid;
    }
  }
  for (const AuxiliaryBusPair& pair : cp.pairs) {
    for (const AuxiliaryCopy* copy : {&pair.from_side, &pair.to_side}) {
      const SubProblem& sp = cp.subproblems[copy->block];
      C s = sp.problem.injection(cp.local(x, copy->block), copy->local_bus);
      x[idx(copy->p)] = s.real();
      x[idx(copy->q)] = s.imag();
    }
  }
  return x;
}

MergedSolution merge_solution(const CoupledProblem& cp, const Eigen::VectorXd& coupled) {
  if (coupled.size() != static_cast<Eigen::Index>(cp.total)) {
    throw std::invalid_argument("coupled point does not match the coupled layout");
  }
  const OpfProblem& central = cp.central;
  auto idx = [](std::size_t i) { return static_cast<Eigen::Index>(i); };
  MergedSolution out;
  out.centralized = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(central.size()));
  for (std::size_t i = 0; i < central.bus_count(); ++i) {
    const SubProblem& sp = cp.subproblems[cp.bus_block[i]];
    const BusSlots& local = sp.problem.slots(cp.bus_local[i]);
    const BusSlots& orig = central.slots(i);
    out.centralized[idx(orig.theta)] = coupled[idx(sp.global(local.theta))];
    out.centralized[idx(orig.v)] = coupled[idx(sp.global(local.v))];
  }
  for (std::size_t g = 0; g < cp.gen_block.size(); ++g) {
    const SubProblem& sp = cp.subproblems[cp.gen_block[g]];
    out.centralized[idx(central.gen_p(g))] = coupled[idx(sp.global(sp.problem.gen_p(cp.gen_local[g])))];
    out.centralized[idx(central.gen_q(g))] = coupled[idx(sp.global(sp.problem.gen_q(cp.gen_local[g])))];
  }
  if (cp.coupling.rows() > 0) out.consensus_gap = (cp.coupling * coupled - cp.rhs).lpNorm<1>();
  return out;
}

}  // namespace partopf
