#include "partopf/aladin.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <future>
#include <stdexcept>
#include <string>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/QR>

namespace partopf {

NlpSpec opf_nlp(const OpfProblem& problem) {
  NlpSpec spec;
  spec.dimension = static_cast<Eigen::Index>(problem.size());
  spec.rows.assign(problem.constraint_count(), RowKind::equality);
  spec.lower = problem.lower();
  spec.upper = problem.upper();
  const OpfProblem* p = &problem;
  spec.objective = [p](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return p->objective(x, g); };
  spec.constraints = [p](const Eigen::VectorXd& x, Eigen::VectorXd& c, SparseMatrix* jac) {
    p->power_flow(x, c, jac);
  };
  spec.hessian = [p](const Eigen::VectorXd& x, double factor, const Eigen::VectorXd& mult) {
    return p->hessian(x, mult, factor);
  };
  return spec;
}

NlpResult solve_centralized(const OpfProblem& problem, double tol) {
  return solve_nlp(opf_nlp(problem), problem.flat_start(), tol);
}

bool LocalStep::degraded() const {
  return std::any_of(status.begin(), status.end(), [](NlpStatus s) { return s != NlpStatus::optimal; });
}

Eigen::VectorXd LocalStep::stacked() const {
  Eigen::Index total = 0;
  for (const auto& xi : x) total += xi.size();
  Eigen::VectorXd out(total);
  Eigen::Index at = 0;
  for (const auto& xi : x) {
    out.segment(at, xi.size()) = xi;
    at += xi.size();
  }
  return out;
}

Eigen::VectorXd block_sigma(const CoupledProblem& cp, const AladinParams& params, std::size_t i) {
  const SubProblem& sp = cp.subproblems[i];
  const auto n = static_cast<Eigen::Index>(sp.problem.size());
  if (!params.sigma.empty()) {
    if (params.sigma.size() != cp.subproblems.size() || params.sigma[i].size() != n) {
      throw std::invalid_argument("sigma does not match the block layout");
    }
    return params.sigma[i];
  }
  bool coupled = false;
  if (cp.coupling.rows() > 0) {
    auto lo = static_cast<Eigen::Index>(sp.offset);
    for (Eigen::Index c = lo; c < lo + n && !coupled; ++c) {
      coupled = cp.coupling.col(c).nonZeros() > 0;
    }
  }
  return coupled ? Eigen::VectorXd::Ones(n) : Eigen::VectorXd::Zero(n);
}

NlpSpec augmented_nlp(const CoupledProblem& cp, const AladinState& st, const AladinParams& params,
                      std::size_t block) {
  const SubProblem& sp = cp.subproblems[block];
  NlpSpec spec = opf_nlp(sp.problem);
  const auto offset = static_cast<Eigen::Index>(sp.offset);
  const Eigen::Index n = spec.dimension;
  Eigen::VectorXd linear = Eigen::VectorXd::Zero(n);
  if (cp.coupling.rows() > 0) {
    linear = (cp.coupling.transpose() * st.lambda).segment(offset, n);
  }
  Eigen::VectorXd y = st.y.segment(offset, n);
  Eigen::VectorXd weight = st.rho * block_sigma(cp, params, block);

  auto base_objective = spec.objective;
  spec.objective = [base_objective, linear, y, weight](const Eigen::VectorXd& x,
                                                       Eigen::VectorXd* g) {
    double f = base_objective(x, g);
    Eigen::VectorXd d = x - y;
    f += linear.dot(x) + 0.5 * d.dot(weight.cwiseProduct(d));
    if (g) *g += linear + weight.cwiseProduct(d);
    return f;
  };
  auto base_hessian = spec.hessian;
  spec.hessian = [base_hessian, weight](const Eigen::VectorXd& x, double factor,
                                        const Eigen::VectorXd& mult) {
    SparseMatrix h = base_hessian(x, factor, mult);
    SparseMatrix d(h.rows(), h.cols());
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index i = 0; i < weight.size(); ++i) {
      if (weight[i] != 0.0) trip.emplace_back(i, i, factor * weight[i]);
    }
    d.setFromTriplets(trip.begin(), trip.end());
    return SparseMatrix(h + d);
  };
  return spec;
}

AladinState initial_state(const CoupledProblem& cp, const AladinParams& params) {
  AladinState st;
  st.y = lift_solution(cp, cp.central.flat_start());
  st.lambda = Eigen::VectorXd::Zero(cp.coupling.rows());
  st.rho = params.rho0;
  st.mu = params.mu0;
  return st;
}

namespace {

/// Objective multiplied by `s`; multipliers of the result are `s` times those
/// of the original problem.
NlpSpec scale_objective(NlpSpec spec, double s) {
  auto f = spec.objective;
  spec.objective = [f, s](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const double v = f(x, g);
    if (g) *g *= s;
    return s * v;
  };
  auto h = spec.hessian;
  spec.hessian = [h, s](const Eigen::VectorXd& x, double factor, const Eigen::VectorXd& mult) {
    return h(x, s * factor, mult);
  };
  return spec;
}

KktMultipliers scaled(KktMultipliers m, double s) {
  m.constraints *= s;
  m.lower *= s;
  m.upper *= s;
  return m;
}

}  // namespace

LocalStep local_step(const CoupledProblem& cp, const AladinState& st, const AladinParams& params,
                     const LocalStep* warm) {
  const std::size_t blocks = cp.subproblems.size();
  LocalStep out;
  out.x.resize(blocks);
  out.multipliers.resize(blocks);
  out.status.resize(blocks);

  auto solve_block = [&](std::size_t i) {
    const SubProblem& sp = cp.subproblems[i];
    const NlpSpec augmented = augmented_nlp(cp, st, params, i);
    Eigen::VectorXd x0 = st.y.segment(static_cast<Eigen::Index>(sp.offset), augmented.dimension);
    NlpOptions opt;
    if (warm != nullptr) {
      opt.warm_start = warm->multipliers[i];
      opt.mu_init = 1e-4;
      opt.bound_push = 1e-8;
    }
    NlpResult r = solve_nlp(augmented, x0, params.nlp_tol, opt);
    if (warm != nullptr && r.status != NlpStatus::optimal) {
      NlpResult cold = solve_nlp(augmented, x0, params.nlp_tol);
      if (cold.status == NlpStatus::optimal || cold.kkt_residual < r.kkt_residual) r = std::move(cold);
    }
    if (r.status != NlpStatus::optimal) {
      // Large cost gradients can put the absolute tolerance below attainable
      // precision; retry with the objective scaled to a unit-order gradient.
      Eigen::VectorXd g0(augmented.dimension);
      augmented.objective(x0, &g0);
      const double g_max = augmented.dimension > 0 ? g0.lpNorm<Eigen::Infinity>() : 0.0;
      if (std::isfinite(g_max) && g_max > 100.0) {
        const double scale = 100.0 / g_max;
        NlpResult s = solve_nlp(scale_objective(augmented, scale), x0, params.nlp_tol);
        if (s.status == NlpStatus::optimal) {
          s.multipliers = scaled(std::move(s.multipliers), 1.0 / scale);
          r = std::move(s);
        }
      }
    }
    out.x[i] = std::move(r.x);
    out.multipliers[i] = std::move(r.multipliers);
    out.status[i] = r.status;
  };

  unsigned workers = params.workers != 0 ? params.workers : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(blocks)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < blocks; ++i) solve_block(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> futures;
  for (unsigned w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < blocks; i = next++) solve_block(i);
    }));
  }
  for (auto& f : futures) f.get();
  return out;
}

SensitivityData sensitivities(const CoupledProblem& cp, const LocalStep& step, double active_tol) {
  SensitivityData sd;
  for (std::size_t i = 0; i < cp.subproblems.size(); ++i) {
    const SubProblem& sp = cp.subproblems[i];
    const OpfProblem& p = sp.problem;
    const Eigen::VectorXd& x = step.x[i];
    BlockSensitivity bs;
    bs.gradient.resize(x.size());
    p.objective(x, &bs.gradient);
    bs.hessian = Eigen::MatrixXd(p.hessian(x, step.multipliers[i].constraints, 1.0));

    Eigen::VectorXd c(static_cast<Eigen::Index>(p.constraint_count()));
    SparseMatrix jac;
    p.power_flow(x, c, &jac);
    for (Eigen::Index v = 0; v < x.size(); ++v) {
      const double lo = p.lower()[v];
      const double hi = p.upper()[v];
      if (lo == hi || std::abs(x[v] - lo) <= active_tol || std::abs(hi - x[v]) <= active_tol) {
        bs.active_bounds.push_back(v);
      }
    }
    const Eigen::Index rows = jac.rows() + static_cast<Eigen::Index>(bs.active_bounds.size());
    bs.active_jacobian = Eigen::MatrixXd::Zero(rows, x.size());
    bs.active_jacobian.topRows(jac.rows()) = Eigen::MatrixXd(jac);
    for (std::size_t r = 0; r < bs.active_bounds.size(); ++r) {
      bs.active_jacobian(jac.rows() + static_cast<Eigen::Index>(r), bs.active_bounds[r]) = 1.0;
    }
    sd.blocks.push_back(std::move(bs));
    sd.offsets.push_back(sp.offset);
  }
  return sd;
}

namespace {

/// Orthonormal basis of the null space of c (rows x n).
Eigen::MatrixXd null_space(const Eigen::MatrixXd& c, Eigen::Index n) {
  if (c.rows() == 0) return Eigen::MatrixXd::Identity(n, n);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(c.transpose());
  qr.setThreshold(1e-12);
  const Eigen::Index rank = qr.rank();
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return q.rightCols(n - rank);
}

}  // namespace

CouplingStep coupling_qp(const SensitivityData& sd, const SparseMatrix& a, const Eigen::VectorXd& b,
                         const Eigen::VectorXd& lambda, double mu, const Eigen::VectorXd& x_star,
                         int iteration) {
  const std::size_t blocks = sd.blocks.size();
  std::vector<Eigen::MatrixXd> basis(blocks);
  std::vector<Eigen::Index> reduced_offset(blocks + 1, 0);
  for (std::size_t i = 0; i < blocks; ++i) {
    const BlockSensitivity& bs = sd.blocks[i];
    basis[i] = null_space(bs.active_jacobian, bs.gradient.size());
    reduced_offset[i + 1] = reduced_offset[i] + basis[i].cols();
  }
  const Eigen::Index nr = reduced_offset[blocks];
  const Eigen::Index m = a.rows();

  CouplingStep out;
  out.regularization.assign(blocks, 0.0);
  Eigen::MatrixXd reduced = Eigen::MatrixXd::Zero(nr, nr);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nr);
  Eigen::MatrixXd az = Eigen::MatrixXd::Zero(m, nr);
  const Eigen::MatrixXd a_dense = Eigen::MatrixXd(a);

  for (std::size_t i = 0; i < blocks; ++i) {
    const BlockSensitivity& bs = sd.blocks[i];
    const Eigen::MatrixXd& z = basis[i];
    const Eigen::Index d = z.cols();
    if (d == 0) continue;
    const auto off = static_cast<Eigen::Index>(sd.offsets[i]);
    const Eigen::Index n = bs.gradient.size();
    Eigen::MatrixXd hr = z.transpose() * bs.hessian * z;
    hr = 0.5 * (hr + hr.transpose()).eval();
    double tau = 0.0;
    for (;;) {
      Eigen::MatrixXd shifted = hr;
      shifted.diagonal().array() += tau;
      Eigen::LLT<Eigen::MatrixXd> llt(shifted);
      if (llt.info() == Eigen::Success) break;
      tau = tau == 0.0 ? 1e-8 : 2.0 * tau;
      if (tau > 1e20) {
        throw std::runtime_error("coupling QP: reduced Hessian of block " + std::to_string(i) +
                                 " not regularizable at iteration " + std::to_string(iteration));
      }
    }
    out.regularization[i] = tau;
    hr.diagonal().array() += tau;
    reduced.block(reduced_offset[i], reduced_offset[i], d, d) = hr;
    rhs.segment(reduced_offset[i], d) = -z.transpose() * bs.gradient;
    if (m > 0) az.middleCols(reduced_offset[i], d) = a_dense.middleCols(off, n) * z;
  }

  if (m > 0) {
    Eigen::VectorXd dual = lambda + mu * (a * x_star - b);
    reduced.noalias() += mu * az.transpose() * az;
    rhs.noalias() -= az.transpose() * dual;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(reduced);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("coupling QP: singular KKT system at iteration " +
                             std::to_string(iteration));
  }
  Eigen::VectorXd d = llt.solve(rhs);

  out.delta_x = Eigen::VectorXd::Zero(x_star.size());
  for (std::size_t i = 0; i < blocks; ++i) {
    const Eigen::MatrixXd& z = basis[i];
    if (z.cols() == 0) continue;
    out.delta_x.segment(static_cast<Eigen::Index>(sd.offsets[i]), z.rows()) =
        z * d.segment(reduced_offset[i], z.cols());
  }
  out.lambda_qp = m > 0 ? Eigen::VectorXd(lambda + mu * (a * (x_star + out.delta_x) - b))
                        : Eigen::VectorXd();
  return out;
}

CouplingStep coupling_qp(const SensitivityData& sd, const CoupledProblem& cp,
                         const AladinState& st, const Eigen::VectorXd& x_star) {
  return coupling_qp(sd, cp.coupling, cp.rhs, st.lambda, st.mu, x_star, st.iteration);
}

AladinState update_iterates(const AladinState& st, const Eigen::VectorXd& x_star,
                            const CouplingStep& qp, const AladinParams& params) {
  AladinState next;
  next.y = x_star + qp.delta_x;
  next.lambda = qp.lambda_qp;
  next.rho = std::min(params.rho_factor * st.rho, params.rho_max);
  next.mu = std::min(params.mu_factor * st.mu, params.mu_max);
  next.iteration = st.iteration + 1;
  return next;
}

SolveReport aladin_solve(const CoupledProblem& cp, const AladinParams& params,
                         const std::optional<AladinState>& init) {
  if (!(params.eps > 0.0) || params.max_iter < 1) {
    throw std::invalid_argument("eps must be positive and max_iter at least 1");
  }
  const auto start = std::chrono::steady_clock::now();
  AladinState st = init ? *init : initial_state(cp, params);
  std::vector<Eigen::VectorXd> sigma;
  for (std::size_t i = 0; i < cp.subproblems.size(); ++i) sigma.push_back(block_sigma(cp, params, i));

  SolveReport report;
  LocalStep previous;
  bool have_previous = false;
  for (int it = 1; it <= params.max_iter; ++it) {
    LocalStep step = local_step(cp, st, params, have_previous ? &previous : nullptr);
    Eigen::VectorXd x = step.stacked();

    TraceEntry entry;
    entry.iteration = it;
    entry.rho = st.rho;
    entry.mu = st.mu;
    entry.degraded = step.degraded();
    if (cp.coupling.rows() > 0) entry.consensus_residual = (cp.coupling * x - cp.rhs).lpNorm<1>();
    for (std::size_t i = 0; i < cp.subproblems.size(); ++i) {
      const SubProblem& sp = cp.subproblems[i];
      Eigen::VectorXd d = step.x[i] - st.y.segment(static_cast<Eigen::Index>(sp.offset), step.x[i].size());
      entry.primal_residual += st.rho * sigma[i].cwiseProduct(d).lpNorm<1>();
    }
    report.trace.push_back(entry);
    report.iterations = it;
    report.consensus_residual = entry.consensus_residual;
    report.primal_residual = entry.primal_residual;
    report.x = x;
    // A degraded step is not a stationary point of the local problems.
    if (!entry.degraded && entry.consensus_residual <= params.eps &&
        entry.primal_residual <= params.eps) {
      report.status = AladinStatus::converged;
      break;
    }
    if (it == params.max_iter) break;

    SensitivityData sd = sensitivities(cp, step, params.active_tol);
    CouplingStep qp = coupling_qp(sd, cp, st, x);
    st = update_iterates(st, x, qp, params);
    previous = std::move(step);
    have_previous = true;
  }

  for (std::size_t i = 0; i < cp.subproblems.size(); ++i) {
    report.objective += cp.subproblems[i].problem.objective(cp.local(report.x, i), nullptr);
  }
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace partopf
