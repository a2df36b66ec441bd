#include "partopf/opf_problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace partopf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Triplets = std::vector<Eigen::Triplet<double>>;

void add_sym(Triplets& t, std::size_t r, std::size_t c, double v) {
  if (v == 0.0) return;
  auto ri = static_cast<Eigen::Index>(r);
  auto ci = static_cast<Eigen::Index>(c);
  t.emplace_back(ri, ci, v);
  if (r != c) t.emplace_back(ci, ri, v);
}

}  // namespace

OpfProblem::OpfProblem(Network local, std::vector<bool> auxiliary, double slack_voltage)
    : net_(std::move(local)), auxiliary_(std::move(auxiliary)), slack_voltage_(slack_voltage) {
  const std::size_t n = net_.buses.size();
  auxiliary_.resize(n, false);
  ybus_ = build_ybus(net_).y;

  std::vector<std::vector<std::size_t>> gens_at(n);
  for (std::size_t g = 0; g < net_.generators.size(); ++g) gens_at[net_.generators[g].bus].push_back(g);

  slots_.resize(n);
  gen_p_.assign(net_.generators.size(), 0);
  gen_q_.assign(net_.generators.size(), 0);
  std::vector<double> lo;
  std::vector<double> hi;
  auto push = [&](double l, double u) {
    lo.push_back(l);
    hi.push_back(u);
    return lo.size() - 1;
  };

  for (std::size_t i = 0; i < n; ++i) {
    const Bus& b = net_.buses[i];
    BusSlots& s = slots_[i];
    bool is_slack = b.kind == BusKind::slack && !slack_;
    if (is_slack) {
      slack_ = i;
      s.theta = push(0.0, 0.0);
      s.v = push(slack_voltage_, slack_voltage_);
    } else {
      s.theta = push(-kInf, kInf);
      s.v = push(b.v_min, b.v_max);
    }
    for (std::size_t g : gens_at[i]) {
      const Generator& gen = net_.generators[g];
      gen_p_[g] = push(gen.p_min, gen.p_max);
      gen_q_[g] = push(gen.q_min, gen.q_max);
      s.p.push_back(gen_p_[g]);
      s.q.push_back(gen_q_[g]);
    }
    if (auxiliary_[i]) {
      s.p.push_back(push(-kInf, kInf));
      s.q.push_back(push(-kInf, kInf));
    }
  }
  lower_ = Eigen::Map<Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  upper_ = Eigen::Map<Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));

  source_buses_.resize(n);
  std::iota(source_buses_.begin(), source_buses_.end(), std::size_t{0});
  source_gens_.resize(net_.generators.size());
  std::iota(source_gens_.begin(), source_gens_.end(), std::size_t{0});
}

void OpfProblem::set_sources(std::vector<std::size_t> buses, std::vector<std::size_t> gens) {
  source_buses_ = std::move(buses);
  source_gens_ = std::move(gens);
}

std::complex<double> OpfProblem::injection(const Eigen::VectorXd& x, std::size_t bus) const {
  const auto i = static_cast<Eigen::Index>(bus);
  const double vi = x[static_cast<Eigen::Index>(slots_[bus].v)];
  const double ti = x[static_cast<Eigen::Index>(slots_[bus].theta)];
  double p = 0.0;
  double q = 0.0;
  for (decltype(ybus_)::InnerIterator it(ybus_, i); it; ++it) {
    const auto k = static_cast<std::size_t>(it.col());
    const double g = it.value().real();
    const double b = it.value().imag();
    const double vk = x[static_cast<Eigen::Index>(slots_[k].v)];
    const double tik = ti - x[static_cast<Eigen::Index>(slots_[k].theta)];
    const double c = std::cos(tik);
    const double s = std::sin(tik);
    p += vi * vk * (g * c + b * s);
    q += vi * vk * (g * s - b * c);
  }
  return {p, q};
}

Eigen::VectorXd OpfProblem::flat_start() const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < bus_count(); ++i) {
    x[static_cast<Eigen::Index>(slots_[i].v)] = (slack_ && *slack_ == i) ? slack_voltage_ : 1.0;
  }
  for (std::size_t g = 0; g < net_.generators.size(); ++g) {
    const Generator& gen = net_.generators[g];
    x[static_cast<Eigen::Index>(gen_p_[g])] = 0.5 * (gen.p_min + gen.p_max);
    x[static_cast<Eigen::Index>(gen_q_[g])] = 0.5 * (gen.q_min + gen.q_max);
  }
  return x;
}

double OpfProblem::objective(const Eigen::VectorXd& x, Eigen::VectorXd* gradient) const {
  const double mva = net_.base_mva;
  if (gradient) gradient->setZero(static_cast<Eigen::Index>(size()));
  double f = 0.0;
  for (std::size_t g = 0; g < net_.generators.size(); ++g) {
    const Generator& gen = net_.generators[g];
    const auto idx = static_cast<Eigen::Index>(gen_p_[g]);
    const double mw = x[idx] * mva;
    f += gen.cost_a * mw * mw + gen.cost_b * mw + gen.cost_c;
    if (gradient) (*gradient)[idx] = (2.0 * gen.cost_a * mw + gen.cost_b) * mva;
  }
  return f;
}

void OpfProblem::power_flow(const Eigen::VectorXd& x, Eigen::VectorXd& residual,
                            SparseMatrix* jacobian) const {
  const std::size_t n = bus_count();
  residual.setZero(static_cast<Eigen::Index>(2 * n));
  Triplets trip;
  if (jacobian) trip.reserve(static_cast<std::size_t>(ybus_.nonZeros()) * 4 + size() * 2);

  auto at = [&](std::size_t idx) { return x[static_cast<Eigen::Index>(idx)]; };

  for (std::size_t i = 0; i < n; ++i) {
    const BusSlots& si = slots_[i];
    const double vi = at(si.v);
    const double ti = at(si.theta);
    const auto rp = static_cast<Eigen::Index>(2 * i);
    const auto rq = rp + 1;
    double p = 0.0;
    double q = 0.0;
    double dp_dvi = 0.0;
    double dq_dvi = 0.0;
    double dp_dti = 0.0;
    double dq_dti = 0.0;
    for (decltype(ybus_)::InnerIterator it(ybus_, static_cast<Eigen::Index>(i)); it; ++it) {
      const auto k = static_cast<std::size_t>(it.col());
      const double g = it.value().real();
      const double b = it.value().imag();
      if (k == i) {
        p += vi * vi * g;
        q -= vi * vi * b;
        dp_dvi += 2.0 * vi * g;
        dq_dvi -= 2.0 * vi * b;
        continue;
      }
      const BusSlots& sk = slots_[k];
      const double vk = at(sk.v);
      const double tik = ti - at(sk.theta);
      const double c = std::cos(tik);
      const double s = std::sin(tik);
      const double a_ik = g * c + b * s;
      const double b_ik = g * s - b * c;
      p += vi * vk * a_ik;
      q += vi * vk * b_ik;
      dp_dvi += vk * a_ik;
      dq_dvi += vk * b_ik;
      dp_dti -= vi * vk * b_ik;
      dq_dti += vi * vk * a_ik;
      if (jacobian) {
        const auto cv = static_cast<Eigen::Index>(sk.v);
        const auto ct = static_cast<Eigen::Index>(sk.theta);
        trip.emplace_back(rp, cv, vi * a_ik);
        trip.emplace_back(rq, cv, vi * b_ik);
        trip.emplace_back(rp, ct, vi * vk * b_ik);
        trip.emplace_back(rq, ct, -vi * vk * a_ik);
      }
    }
    const Bus& bus = net_.buses[i];
    p += bus.p_demand;
    q += bus.q_demand;
    for (std::size_t idx : si.p) p -= at(idx);
    for (std::size_t idx : si.q) q -= at(idx);
    residual[rp] = p;
    residual[rq] = q;
    if (jacobian) {
      const auto cv = static_cast<Eigen::Index>(si.v);
      const auto ct = static_cast<Eigen::Index>(si.theta);
      trip.emplace_back(rp, cv, dp_dvi);
      trip.emplace_back(rq, cv, dq_dvi);
      trip.emplace_back(rp, ct, dp_dti);
      trip.emplace_back(rq, ct, dq_dti);
      for (std::size_t idx : si.p) trip.emplace_back(rp, static_cast<Eigen::Index>(idx), -1.0);
      for (std::size_t idx : si.q) trip.emplace_back(rq, static_cast<Eigen::Index>(idx), -1.0);
    }
  }
  if (jacobian) {
    jacobian->resize(static_cast<Eigen::Index>(2 * n), static_cast<Eigen::Index>(size()));
    jacobian->setFromTriplets(trip.begin(), trip.end());
    jacobian->makeCompressed();
  }
}

SparseMatrix OpfProblem::hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& row_multipliers,
                                 double objective_factor) const {
  const std::size_t n = bus_count();
  const double mva = net_.base_mva;
  Triplets trip;
  trip.reserve(static_cast<std::size_t>(ybus_.nonZeros()) * 12 + net_.generators.size());
  auto at = [&](std::size_t idx) { return x[static_cast<Eigen::Index>(idx)]; };

  if (objective_factor != 0.0) {
    for (std::size_t g = 0; g < net_.generators.size(); ++g) {
      add_sym(trip, gen_p_[g], gen_p_[g],
              objective_factor * 2.0 * net_.generators[g].cost_a * mva * mva);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double lp = row_multipliers[static_cast<Eigen::Index>(2 * i)];
    const double lq = row_multipliers[static_cast<Eigen::Index>(2 * i + 1)];
    if (lp == 0.0 && lq == 0.0) continue;
    const BusSlots& si = slots_[i];
    const double vi = at(si.v);
    const double ti = at(si.theta);
    for (decltype(ybus_)::InnerIterator it(ybus_, static_cast<Eigen::Index>(i)); it; ++it) {
      const auto k = static_cast<std::size_t>(it.col());
      const double g = it.value().real();
      const double b = it.value().imag();
      if (k == i) {
        add_sym(trip, si.v, si.v, 2.0 * (lp * g - lq * b));
        continue;
      }
      const BusSlots& sk = slots_[k];
      const double vk = at(sk.v);
      const double tik = ti - at(sk.theta);
      const double cs = std::cos(tik);
      const double sn = std::sin(tik);
      const double a_ik = g * cs + b * sn;
      const double b_ik = g * sn - b * cs;
      // Weighted term v_i v_k c(theta_i - theta_k) with c = lp*a + lq*b.
      const double c0 = lp * a_ik + lq * b_ik;
      const double c1 = -lp * b_ik + lq * a_ik;  // dc/dtheta_ik
      const double vv = vi * vk;
      add_sym(trip, si.theta, si.theta, -vv * c0);
      add_sym(trip, sk.theta, sk.theta, -vv * c0);
      add_sym(trip, si.theta, sk.theta, vv * c0);
      add_sym(trip, si.theta, si.v, vk * c1);
      add_sym(trip, si.theta, sk.v, vi * c1);
      add_sym(trip, sk.theta, si.v, -vk * c1);
      add_sym(trip, sk.theta, sk.v, -vi * c1);
      add_sym(trip, si.v, sk.v, c0);
    }
  }
  SparseMatrix h(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(size()));
  h.setFromTriplets(trip.begin(), trip.end());
  h.makeCompressed();
  return h;
}

OpfProblem build_opf(const Network& net, std::optional<std::span<const std::size_t>> bus_subset) {
  const std::size_t n = net.buses.size();
  std::vector<std::size_t> keep;
  if (bus_subset) {
    keep.assign(bus_subset->begin(), bus_subset->end());
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    if (keep.empty()) throw DisconnectedError("empty bus subset");
    if (keep.back() >= n) throw std::out_of_range("bus subset index out of range");
  } else {
    keep.resize(n);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
  }

  constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
  std::vector<std::size_t> local_of(n, kAbsent);
  for (std::size_t i = 0; i < keep.size(); ++i) local_of[keep[i]] = i;

  Network local;
  local.name = net.name;
  local.base_mva = net.base_mva;
  for (std::size_t b : keep) local.buses.push_back(net.buses[b]);
  std::vector<std::size_t> gens;
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    if (local_of[net.generators[g].bus] == kAbsent) continue;
    Generator gen = net.generators[g];
    gen.bus = local_of[gen.bus];
    local.generators.push_back(gen);
    gens.push_back(g);
  }
  std::vector<std::vector<std::size_t>> adj(keep.size());
  for (const Branch& br : net.branches) {
    if (!br.in_service) continue;
    std::size_t f = local_of[br.from];
    std::size_t t = local_of[br.to];
    if (f == kAbsent || t == kAbsent) continue;
    Branch b = br;
    b.from = f;
    b.to = t;
    local.branches.push_back(b);
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  local.reindex();

  std::vector<char> seen(keep.size(), 0);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    std::size_t u = q.front();
    q.pop();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        q.push(v);
      }
    }
  }
  if (reached != keep.size()) throw DisconnectedError("bus subset is disconnected");

  OpfProblem p(std::move(local), std::vector<bool>(keep.size(), false), net.slack_voltage());
  p.set_sources(keep, gens);
  return p;
}

ObjectiveEval eval_objective(const OpfProblem& p, const Eigen::VectorXd& z) {
  ObjectiveEval out;
  out.value = p.objective(z, &out.gradient);
  return out;
}

PowerFlowEval eval_power_flow(const OpfProblem& p, const Eigen::VectorXd& z) {
  PowerFlowEval out;
  p.power_flow(z, out.residual, &out.jacobian);
  return out;
}

SparseMatrix eval_lagrangian_hessian(const OpfProblem& p, const Eigen::VectorXd& z,
                                     const KktMultipliers& m) {
  return p.hessian(z, m.constraints, 1.0);
}

}  // namespace partopf
