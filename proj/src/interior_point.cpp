#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "partopf/dense_ldlt.hpp"
#include "partopf/nlp.hpp"

namespace partopf {

double KktResidual::max() const { return std::max({stationarity, feasibility, complementarity}); }

KktResidual kkt_residual(const NlpSpec& spec, const Eigen::VectorXd& x, const KktMultipliers& m) {
  const Eigen::Index n = spec.dimension;
  Eigen::VectorXd grad(n);
  spec.objective(x, &grad);
  Eigen::VectorXd c(spec.row_count());
  Eigen::SparseMatrix<double> jac;
  spec.constraints(x, c, &jac);

  KktResidual r;
  Eigen::VectorXd stat = grad - m.lower + m.upper;
  if (spec.row_count() > 0) stat += jac.transpose() * m.constraints;
  r.stationarity = n > 0 ? stat.lpNorm<Eigen::Infinity>() : 0.0;

  for (Eigen::Index j = 0; j < spec.row_count(); ++j) {
    if (spec.rows[static_cast<std::size_t>(j)] == RowKind::equality) {
      r.feasibility = std::max(r.feasibility, std::abs(c[j]));
    } else {
      r.feasibility = std::max(r.feasibility, std::max(0.0, c[j]));
      r.complementarity = std::max({r.complementarity, std::abs(m.constraints[j] * c[j]),
                                    std::max(0.0, -m.constraints[j])});
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    r.feasibility = std::max({r.feasibility, std::max(0.0, spec.lower[i] - x[i]),
                              std::max(0.0, x[i] - spec.upper[i])});
    r.complementarity = std::max({r.complementarity, std::max(0.0, -m.lower[i]),
                                  std::max(0.0, -m.upper[i])});
    if (std::isfinite(spec.lower[i])) {
      r.complementarity = std::max(r.complementarity, std::abs(m.lower[i] * (x[i] - spec.lower[i])));
    }
    if (std::isfinite(spec.upper[i])) {
      r.complementarity = std::max(r.complementarity, std::abs(m.upper[i] * (spec.upper[i] - x[i])));
    }
  }
  return r;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }

/// Working state of the barrier method over w = (free x entries, slacks).
class InteriorPoint {
 public:
  InteriorPoint(const NlpSpec& spec, const Eigen::VectorXd& x0, double tol, const NlpOptions& opt)
      : spec_(spec), tol_(tol), opt_(opt), x_(x0) {
    const Eigen::Index n = spec.dimension;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (spec.lower[i] < spec.upper[i]) {
        free_.push_back(i);
      } else {
        x_[i] = spec.lower[i];
      }
    }
    for (Eigen::Index j = 0; j < spec.row_count(); ++j) {
      if (spec.rows[static_cast<std::size_t>(j)] == RowKind::inequality) ineq_.push_back(j);
    }
    nf_ = static_cast<Eigen::Index>(free_.size());
    nw_ = nf_ + static_cast<Eigen::Index>(ineq_.size());
    m_ = spec.row_count();
    lo_.resize(nw_);
    hi_.resize(nw_);
    for (Eigen::Index k = 0; k < nf_; ++k) {
      lo_[k] = spec.lower[free_[static_cast<std::size_t>(k)]];
      hi_[k] = spec.upper[free_[static_cast<std::size_t>(k)]];
    }
    for (Eigen::Index k = nf_; k < nw_; ++k) {
      lo_[k] = 0.0;
      hi_[k] = kInf;
    }
  }

  NlpResult run();

 private:
  Eigen::VectorXd to_x(const Eigen::VectorXd& w) const {
    Eigen::VectorXd x = x_;
    for (Eigen::Index k = 0; k < nf_; ++k) x[free_[static_cast<std::size_t>(k)]] = w[k];
    return x;
  }

  struct Eval {
    double f = 0.0;
    Eigen::VectorXd grad;  // full x gradient
    Eigen::VectorXd c;     // constraint values incl. slacks
    Eigen::SparseMatrix<double> jac;
  };

  Eval evaluate(const Eigen::VectorXd& w, bool derivatives) const {
    Eval e;
    Eigen::VectorXd x = to_x(w);
    e.grad.resize(spec_.dimension);
    e.f = spec_.objective(x, derivatives ? &e.grad : nullptr);
    e.c.resize(m_);
    spec_.constraints(x, e.c, derivatives ? &e.jac : nullptr);
    for (std::size_t j = 0; j < ineq_.size(); ++j) e.c[ineq_[j]] += w[nf_ + static_cast<Eigen::Index>(j)];
    return e;
  }

  double barrier(const Eigen::VectorXd& w, double f, double mu) const {
    double phi = f;
    for (Eigen::Index k = 0; k < nw_; ++k) {
      if (std::isfinite(lo_[k])) phi -= mu * std::log(w[k] - lo_[k]);
      if (std::isfinite(hi_[k])) phi -= mu * std::log(hi_[k] - w[k]);
    }
    return phi;
  }

  /// Max step in (0, 1] keeping v + a*dv at least (1 - tau) of the way from
  /// its bound.
  double max_step(const Eigen::VectorXd& w, const Eigen::VectorXd& dw, double tau) const {
    double a = 1.0;
    for (Eigen::Index k = 0; k < nw_; ++k) {
      if (std::isfinite(lo_[k]) && dw[k] < 0.0) a = std::min(a, -tau * (w[k] - lo_[k]) / dw[k]);
      if (std::isfinite(hi_[k]) && dw[k] > 0.0) a = std::min(a, tau * (hi_[k] - w[k]) / dw[k]);
    }
    return a;
  }

  static double dual_step(const Eigen::VectorXd& z, const Eigen::VectorXd& dz, double tau) {
    double a = 1.0;
    for (Eigen::Index k = 0; k < z.size(); ++k) {
      if (dz[k] < 0.0) a = std::min(a, -tau * z[k] / dz[k]);
    }
    return a;
  }

  Eigen::MatrixXd dense_jacobian(const Eigen::SparseMatrix<double>& jac) const {
    Eigen::MatrixXd jw = Eigen::MatrixXd::Zero(m_, nw_);
    Eigen::MatrixXd full = Eigen::MatrixXd(jac);
    for (Eigen::Index k = 0; k < nf_; ++k) jw.col(k) = full.col(free_[static_cast<std::size_t>(k)]);
    for (std::size_t j = 0; j < ineq_.size(); ++j) jw(ineq_[j], nf_ + static_cast<Eigen::Index>(j)) = 1.0;
    return jw;
  }

  Eigen::VectorXd reduced_gradient(const Eigen::VectorXd& grad) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nw_);
    for (Eigen::Index k = 0; k < nf_; ++k) g[k] = grad[free_[static_cast<std::size_t>(k)]];
    return g;
  }

  KktMultipliers public_multipliers(const Eigen::VectorXd& w, const Eigen::VectorXd& lambda,
                                    const Eigen::VectorXd& zl, const Eigen::VectorXd& zu) const;

  const NlpSpec& spec_;
  double tol_;
  NlpOptions opt_;
  Eigen::VectorXd x_;  // template holding fixed entries
  std::vector<Eigen::Index> free_;
  std::vector<Eigen::Index> ineq_;
  Eigen::Index nf_ = 0;
  Eigen::Index nw_ = 0;
  Eigen::Index m_ = 0;
  Eigen::VectorXd lo_;
  Eigen::VectorXd hi_;
};

KktMultipliers InteriorPoint::public_multipliers(const Eigen::VectorXd& w,
                                                 const Eigen::VectorXd& lambda,
                                                 const Eigen::VectorXd& zl,
                                                 const Eigen::VectorXd& zu) const {
  const Eigen::Index n = spec_.dimension;
  KktMultipliers m;
  m.constraints = lambda;
  m.lower = Eigen::VectorXd::Zero(n);
  m.upper = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < nf_; ++k) {
    m.lower[free_[static_cast<std::size_t>(k)]] = zl[k];
    m.upper[free_[static_cast<std::size_t>(k)]] = zu[k];
  }
  if (nf_ < n) {
    // Fixed entries: bound multipliers absorb the remaining stationarity.
    Eigen::VectorXd x = to_x(w);
    Eigen::VectorXd grad(n);
    spec_.objective(x, &grad);
    Eigen::VectorXd c(m_);
    Eigen::SparseMatrix<double> jac;
    spec_.constraints(x, c, &jac);
    Eigen::VectorXd g = grad;
    if (m_ > 0) g += jac.transpose() * lambda;
    std::vector<char> is_free(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i : free_) is_free[static_cast<std::size_t>(i)] = 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (is_free[static_cast<std::size_t>(i)]) continue;
      m.lower[i] = std::max(0.0, g[i]);
      m.upper[i] = std::max(0.0, -g[i]);
    }
  }
  return m;
}

NlpResult InteriorPoint::run() {
  const double tau = opt_.fraction_to_boundary;
  const double mu_min = tol_ / 11.0;
  constexpr double kKappaEps = 10.0;
  constexpr double kKappaSigma = 1e10;

  // Initial point strictly inside the bounds.
  const double push = opt_.bound_push;
  Eigen::VectorXd w(nw_);
  for (Eigen::Index k = 0; k < nf_; ++k) {
    double v = x_[free_[static_cast<std::size_t>(k)]];
    double l = lo_[k];
    double u = hi_[k];
    if (std::isfinite(l) && std::isfinite(u)) {
      double pl = std::min(push * std::max(1.0, std::abs(l)), push * (u - l));
      double pu = std::min(push * std::max(1.0, std::abs(u)), push * (u - l));
      v = std::clamp(v, l + pl, u - pu);
    } else if (std::isfinite(l)) {
      v = std::max(v, l + push * std::max(1.0, std::abs(l)));
    } else if (std::isfinite(u)) {
      v = std::min(v, u - push * std::max(1.0, std::abs(u)));
    }
    w[k] = v;
  }
  {
    Eigen::VectorXd x = to_x(w);
    Eigen::VectorXd grad(spec_.dimension);
    double f = spec_.objective(x, &grad);
    Eigen::VectorXd c(m_);
    spec_.constraints(x, c, nullptr);
    if (!std::isfinite(f) || !finite(grad) || !finite(c)) {
      throw std::invalid_argument("evaluators returned non-finite values at the initial point");
    }
    for (std::size_t j = 0; j < ineq_.size(); ++j) {
      w[nf_ + static_cast<Eigen::Index>(j)] = std::max(-c[ineq_[j]], push);
    }
  }

  Eigen::VectorXd zl = Eigen::VectorXd::Zero(nw_);
  Eigen::VectorXd zu = Eigen::VectorXd::Zero(nw_);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m_);
  for (Eigen::Index k = 0; k < nw_; ++k) {
    if (std::isfinite(lo_[k])) zl[k] = 1.0;
    if (std::isfinite(hi_[k])) zu[k] = 1.0;
  }
  bool warm_lambda = false;
  if (opt_.warm_start) {
    const KktMultipliers& ws = *opt_.warm_start;
    if (ws.constraints.size() == m_) {
      lambda = ws.constraints;
      warm_lambda = true;
    }
    if (ws.lower.size() == spec_.dimension && ws.upper.size() == spec_.dimension) {
      for (Eigen::Index k = 0; k < nf_; ++k) {
        Eigen::Index i = free_[static_cast<std::size_t>(k)];
        if (std::isfinite(lo_[k])) zl[k] = std::max(ws.lower[i], 1e-8);
        if (std::isfinite(hi_[k])) zu[k] = std::max(ws.upper[i], 1e-8);
      }
      for (std::size_t j = 0; j < ineq_.size(); ++j) {
        zl[nf_ + static_cast<Eigen::Index>(j)] = std::max(lambda[ineq_[j]], 1e-8);
      }
    }
  }

  double mu = opt_.mu_init;
  double delta_w_last = 0.0;
  SymmetricIndefiniteLdlt ldlt;

  NlpResult best;
  double best_err = kInf;
  int stalled = 0;

  for (int iter = 0; iter <= opt_.max_iter; ++iter) {
    Eval ev = evaluate(w, true);
    Eigen::MatrixXd jw = dense_jacobian(ev.jac);
    Eigen::VectorXd gw = reduced_gradient(ev.grad);

    if (iter == 0 && !warm_lambda && m_ > 0 && nw_ > 0) {
      // Least-squares multiplier estimate.
      Eigen::MatrixXd k0 = Eigen::MatrixXd::Zero(nw_ + m_, nw_ + m_);
      k0.topLeftCorner(nw_, nw_).setIdentity();
      k0.bottomLeftCorner(m_, nw_) = jw;
      k0.bottomRightCorner(m_, m_).diagonal().setConstant(-1e-10);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nw_ + m_);
      rhs.head(nw_) = -(gw - zl + zu);
      ldlt.factorize(k0);
      Eigen::VectorXd sol = ldlt.solve(rhs);
      Eigen::VectorXd est = sol.tail(m_);
      if (est.allFinite()) lambda = est;
      for (std::size_t j = 0; j < ineq_.size(); ++j) lambda[ineq_[j]] = std::max(lambda[ineq_[j]], 1e-8);
    }

    Eigen::VectorXd dist_l(nw_);
    Eigen::VectorXd dist_u(nw_);
    for (Eigen::Index k = 0; k < nw_; ++k) {
      dist_l[k] = std::isfinite(lo_[k]) ? w[k] - lo_[k] : kInf;
      dist_u[k] = std::isfinite(hi_[k]) ? hi_[k] - w[k] : kInf;
    }

    Eigen::VectorXd stat = gw - zl + zu;
    if (m_ > 0) stat += jw.transpose() * lambda;
    auto compl_err = [&](double target) {
      double e = 0.0;
      for (Eigen::Index k = 0; k < nw_; ++k) {
        if (std::isfinite(lo_[k])) e = std::max(e, std::abs(dist_l[k] * zl[k] - target));
        if (std::isfinite(hi_[k])) e = std::max(e, std::abs(dist_u[k] * zu[k] - target));
      }
      return e;
    };
    const double stat_err = nw_ > 0 ? stat.lpNorm<Eigen::Infinity>() : 0.0;
    const double feas_err = m_ > 0 ? ev.c.lpNorm<Eigen::Infinity>() : 0.0;
    const double err0 = std::max({stat_err, feas_err, compl_err(0.0)});

    if (err0 < best_err || best.x.size() == 0) {
      best_err = err0;
      best.x = to_x(w);
      best.multipliers = public_multipliers(w, lambda, zl, zu);
      best.objective = ev.f;
      best.iterations = iter;
    }
    if (err0 <= tol_) {
      NlpResult res;
      res.x = to_x(w);
      res.multipliers = public_multipliers(w, lambda, zl, zu);
      res.kkt_residual = kkt_residual(spec_, res.x, res.multipliers).max();
      res.objective = ev.f;
      res.iterations = iter;
      if (res.kkt_residual <= tol_) {
        res.status = NlpStatus::optimal;
        return res;
      }
    }
    if (iter == opt_.max_iter) break;

    while (mu > mu_min && std::max({stat_err, feas_err, compl_err(mu)}) <= kKappaEps * mu) {
      mu = std::max(mu_min, opt_.mu_factor * mu);
    }

    // Newton system with inertia correction.
    Eigen::SparseMatrix<double> hs = spec_.hessian(to_x(w), 1.0, lambda);
    Eigen::MatrixXd hfull = Eigen::MatrixXd(hs);
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nw_ + m_, nw_ + m_);
    for (Eigen::Index a = 0; a < nf_; ++a) {
      for (Eigen::Index b = 0; b < nf_; ++b) {
        kkt(a, b) = hfull(free_[static_cast<std::size_t>(a)], free_[static_cast<std::size_t>(b)]);
      }
    }
    Eigen::VectorXd sigma = Eigen::VectorXd::Zero(nw_);
    Eigen::VectorXd gphi = gw;
    for (Eigen::Index k = 0; k < nw_; ++k) {
      if (std::isfinite(lo_[k])) {
        sigma[k] += zl[k] / dist_l[k];
        gphi[k] -= mu / dist_l[k];
      }
      if (std::isfinite(hi_[k])) {
        sigma[k] += zu[k] / dist_u[k];
        gphi[k] += mu / dist_u[k];
      }
    }
    kkt.topLeftCorner(nw_, nw_).diagonal() += sigma;
    kkt.bottomLeftCorner(m_, nw_) = jw;
    kkt.topRightCorner(nw_, m_) = jw.transpose();

    Eigen::VectorXd rhs(nw_ + m_);
    rhs.head(nw_) = -(gphi + (m_ > 0 ? Eigen::VectorXd(jw.transpose() * lambda) : Eigen::VectorXd::Zero(nw_)));
    rhs.tail(m_) = -ev.c;

    double delta_w = 0.0;
    double delta_c = 0.0;
    bool factored = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::MatrixXd trial = kkt;
      trial.topLeftCorner(nw_, nw_).diagonal().array() += delta_w;
      trial.bottomRightCorner(m_, m_).diagonal().array() -= delta_c;
      bool ok = ldlt.factorize(trial);
      const Inertia& in = ldlt.inertia();
      if (ok && in.positive == nw_ && in.negative == m_) {
        factored = true;
        break;
      }
      if (in.zero > 0 && delta_c == 0.0) {
        delta_c = 1e-8 * std::pow(mu, 0.25);
        continue;
      }
      if (delta_w == 0.0) {
        delta_w = delta_w_last == 0.0 ? 1e-8 : std::max(1e-20, delta_w_last / 3.0);
      } else {
        delta_w *= 10.0;
      }
      if (delta_w > 1e40) break;
    }
    if (!factored) break;
    if (delta_w > 0.0) delta_w_last = delta_w;

    Eigen::VectorXd sol = ldlt.solve(rhs);
    if (!sol.allFinite()) break;
    // One step of iterative refinement against the corrected matrix.
    {
      Eigen::MatrixXd trial = kkt;
      trial.topLeftCorner(nw_, nw_).diagonal().array() += delta_w;
      trial.bottomRightCorner(m_, m_).diagonal().array() -= delta_c;
      Eigen::VectorXd res = rhs - trial.selfadjointView<Eigen::Lower>() * sol;
      sol += ldlt.solve(res);
    }
    Eigen::VectorXd dw = sol.head(nw_);
    Eigen::VectorXd dlambda = sol.tail(m_);

    Eigen::VectorXd dzl = Eigen::VectorXd::Zero(nw_);
    Eigen::VectorXd dzu = Eigen::VectorXd::Zero(nw_);
    for (Eigen::Index k = 0; k < nw_; ++k) {
      if (std::isfinite(lo_[k])) dzl[k] = mu / dist_l[k] - zl[k] - zl[k] / dist_l[k] * dw[k];
      if (std::isfinite(hi_[k])) dzu[k] = mu / dist_u[k] - zu[k] + zu[k] / dist_u[k] * dw[k];
    }

    const double alpha_max = max_step(w, dw, tau);
    double alpha_dual = std::min(dual_step(zl, dzl, tau), dual_step(zu, dzu, tau));

    // Backtracking with a memoryless filter-type acceptance test.
    const double theta = ev.c.lpNorm<1>();
    const double phi = barrier(w, ev.f, mu);
    const double slope = gphi.dot(dw);
    const double theta_min = 1e-4 * std::max(1.0, theta);
    const double theta_max = 1e4 * std::max(1.0, theta);
    double alpha = alpha_max;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      Eigen::VectorXd wt = w + alpha * dw;
      Eval et = evaluate(wt, false);
      if (std::isfinite(et.f) && et.c.allFinite()) {
        const double theta_t = et.c.lpNorm<1>();
        const double phi_t = barrier(wt, et.f, mu);
        // Comparisons allow for round-off in phi and theta.
        const double phi_slack = 10.0 * std::numeric_limits<double>::epsilon() * std::abs(phi);
        bool ok = false;
        if (theta <= theta_min && slope < 0.0) {
          ok = phi_t - phi <= 1e-4 * alpha * slope + phi_slack;
        } else {
          ok = theta_t <= theta_max && (theta_t <= (1.0 - 1e-5) * theta + 1e-15 ||
                                        phi_t - phi <= -1e-8 * theta + phi_slack);
        }
        if (ok || (alpha * dw.lpNorm<Eigen::Infinity>() <=
                   1e-14 * std::max(1.0, w.lpNorm<Eigen::Infinity>()))) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      alpha = alpha_max;
      ++stalled;
    } else {
      stalled = alpha < 1e-8 ? stalled + 1 : 0;
    }
    if (stalled > 15) {
      NlpResult res = best;
      res.status = feas_err > tol_ ? NlpStatus::infeasible_detected : NlpStatus::max_iter;
      res.kkt_residual = kkt_residual(spec_, res.x, res.multipliers).max();
      return res;
    }

    w += alpha * dw;
    lambda += alpha * dlambda;
    zl += alpha_dual * dzl;
    zu += alpha_dual * dzu;
    for (Eigen::Index k = 0; k < nw_; ++k) {
      if (std::isfinite(lo_[k])) {
        double d = w[k] - lo_[k];
        zl[k] = std::clamp(zl[k], mu / (kKappaSigma * d), kKappaSigma * mu / d);
      }
      if (std::isfinite(hi_[k])) {
        double d = hi_[k] - w[k];
        zu[k] = std::clamp(zu[k], mu / (kKappaSigma * d), kKappaSigma * mu / d);
      }
    }
  }

  NlpResult res = best;
  res.status = NlpStatus::max_iter;
  res.kkt_residual = kkt_residual(spec_, res.x, res.multipliers).max();
  return res;
}

}  // namespace

NlpResult solve_nlp(const NlpSpec& spec, const Eigen::VectorXd& x0, double tol,
                    const NlpOptions& options) {
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (x0.size() != spec.dimension || spec.lower.size() != spec.dimension ||
      spec.upper.size() != spec.dimension) {
    throw std::invalid_argument("dimension mismatch in NLP specification");
  }
  if (!x0.allFinite()) throw std::invalid_argument("initial point is not finite");
  InteriorPoint ip(spec, x0, tol, options);
  return ip.run();
}

}  // namespace partopf
