#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Cholesky>

#include "oracles.hpp"
#include "partopf/aladin.hpp"

using namespace partopf;

namespace {

BlockSensitivity block(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::MatrixXd& c) {
  BlockSensitivity bs;
  bs.hessian = h;
  bs.gradient = g;
  bs.active_jacobian = c;
  return bs;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  return m;
}

CoupledProblem split(const char* name, std::size_t k) {
  const Network net = load_case(oracle::case_path(name));
  return split_problem(net, multilevel_partition(network_to_graph(net), k, 0.03, Refinement::local_search, 1));
}

AladinParams params(double rho, double mu, double rf, double mf) {
  AladinParams p;
  p.rho0 = rho;
  p.mu0 = mu;
  p.rho_factor = rf;
  p.mu_factor = mf;
  p.workers = 1;
  return p;
}

}  // namespace

TEST_CASE("augmented objective adds the multiplier and proximal terms") {
  const CoupledProblem cp = split("case9", 2);
  AladinParams prm = params(500, 500, 1.05, 2);
  AladinState st = initial_state(cp, prm);
  std::mt19937_64 rng(2);
  st.lambda = random_matrix(st.lambda.size(), 1, rng);
  st.rho = 2.0;
  for (std::size_t i = 0; i < cp.subproblems.size(); ++i) {
    CAPTURE(i);
    const SubProblem& sp = cp.subproblems[i];
    const NlpSpec spec = augmented_nlp(cp, st, prm, i);
    const Eigen::VectorXd x = cp.local(st.y, i) + 0.05 * random_matrix(spec.dimension, 1, rng);
    const Eigen::VectorXd y = cp.local(st.y, i);
    const Eigen::VectorXd a_lambda =
        (Eigen::MatrixXd(cp.coupling).transpose() * st.lambda).segment(static_cast<Eigen::Index>(sp.offset), x.size());
    const Eigen::VectorXd sigma = block_sigma(cp, prm, i);
    const double expected = sp.problem.objective(x, nullptr) + a_lambda.dot(x) +
                            0.5 * st.rho * (x - y).dot(sigma.cwiseProduct(x - y));
    CHECK(spec.objective(x, nullptr) == doctest::Approx(expected).epsilon(1e-12));
    Eigen::VectorXd g;
    spec.objective(x, &g);
    const Eigen::VectorXd fd = oracle::fd_gradient([&](const Eigen::VectorXd& z) { return spec.objective(z, nullptr); }, x);
    CHECK(oracle::relative_error(g, fd) <= 1e-6);
  }
}

TEST_CASE("default weights follow coupling") {
  const CoupledProblem one = split("case9", 1);
  CHECK(block_sigma(one, AladinParams{}, 0).cwiseAbs().maxCoeff() == 0.0);
  const CoupledProblem two = split("case9", 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(block_sigma(two, AladinParams{}, i) == Eigen::VectorXd::Ones(block_sigma(two, AladinParams{}, i).size()));
  AladinParams bad;
  bad.sigma = {Eigen::VectorXd::Ones(3)};
  CHECK_THROWS_AS(block_sigma(two, bad, 0), std::invalid_argument);
}

TEST_CASE("case9 local step from the flat start is optimal in both blocks") {
  const CoupledProblem cp = split("case9", 2);
  const AladinParams prm = params(500, 500, 1.05, 2);
  const AladinState st = initial_state(cp, prm);
  const LocalStep step = local_step(cp, st, prm);
  REQUIRE(step.x.size() == 2);
  CHECK_FALSE(step.degraded());
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(step.status[i] == NlpStatus::optimal);
    CHECK(kkt_residual(augmented_nlp(cp, st, prm, i), step.x[i], step.multipliers[i]).max() <= 1e-7);
  }
  const LocalStep again = local_step(cp, st, prm);
  CHECK(again.stacked() == step.stacked());
}

TEST_CASE("sensitivities") {
  const CoupledProblem cp = split("case14", 2);
  const AladinParams prm = params(500, 500, 1.05, 2);
  const AladinState st = initial_state(cp, prm);
  const LocalStep step = local_step(cp, st, prm);
  const SensitivityData sd = sensitivities(cp, step, 1e-6);
  REQUIRE(sd.blocks.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CAPTURE(i);
    const OpfProblem& p = cp.subproblems[i].problem;
    const BlockSensitivity& bs = sd.blocks[i];
    CHECK(sd.offsets[i] == cp.subproblems[i].offset);
    const Eigen::VectorXd fd = oracle::fd_gradient([&](const Eigen::VectorXd& z) { return p.objective(z, nullptr); }, step.x[i]);
    CHECK(oracle::relative_error(bs.gradient, fd) <= 1e-6);
    CHECK((bs.hessian - bs.hessian.transpose()).cwiseAbs().maxCoeff() == 0.0);

    // Activity rule: every equality row plus exactly the bounds within tolerance.
    std::size_t expected_active = 0;
    for (Eigen::Index v = 0; v < step.x[i].size(); ++v) {
      const double x = step.x[i][v];
      expected_active += p.lower()[v] == p.upper()[v] || std::abs(x - p.lower()[v]) <= 1e-6 ||
                         std::abs(p.upper()[v] - x) <= 1e-6;
    }
    CHECK(bs.active_bounds.size() == expected_active);
    CHECK(bs.active_jacobian.rows() ==
          static_cast<Eigen::Index>(p.constraint_count() + expected_active));
  }

  SUBCASE("a point moved onto a bound activates its unit row") {
    LocalStep moved = step;
    const OpfProblem& p = cp.subproblems[0].problem;
    const Eigen::Index v = static_cast<Eigen::Index>(p.gen_p(0));
    const std::size_t before = sensitivities(cp, step, 1e-6).blocks[0].active_bounds.size();
    const bool was_active = std::abs(step.x[0][v] - p.upper()[v]) <= 1e-6 || std::abs(step.x[0][v] - p.lower()[v]) <= 1e-6;
    moved.x[0][v] = p.upper()[v] - 5e-7;
    const BlockSensitivity bs = sensitivities(cp, moved, 1e-6).blocks[0];
    CHECK(bs.active_bounds.size() == before + (was_active ? 0 : 1));
    const Eigen::Index row = bs.active_jacobian.rows() - static_cast<Eigen::Index>(bs.active_bounds.size()) +
                             static_cast<Eigen::Index>(std::find(bs.active_bounds.begin(), bs.active_bounds.end(), v) -
                                                       bs.active_bounds.begin());
    CHECK(bs.active_jacobian.row(row).sum() == 1.0);
    CHECK(bs.active_jacobian(row, v) == 1.0);
  }
  SUBCASE("zero multipliers leave only the cost curvature") {
    LocalStep zero = step;
    for (auto& m : zero.multipliers) m.constraints.setZero();
    const BlockSensitivity bs = sensitivities(cp, zero, 1e-6).blocks[1];
    const OpfProblem& p = cp.subproblems[1].problem;
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(bs.hessian.rows(), bs.hessian.cols());
    const double base = p.network().base_mva;
    for (std::size_t g = 0; g < p.network().generators.size(); ++g) {
      const auto j = static_cast<Eigen::Index>(p.gen_p(g));
      expected(j, j) = 2.0 * p.network().generators[g].cost_a * base * base;
    }
    CHECK((bs.hessian - expected).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("coupling QP analytic cases") {
  SUBCASE("two-variable consensus approaches the projection") {
    SensitivityData sd;
    sd.blocks = {block(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), Eigen::MatrixXd(0, 1)),
                 block(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), Eigen::MatrixXd(0, 1))};
    sd.offsets = {0, 1};
    Eigen::MatrixXd a(1, 2);
    a << 1.0, -1.0;
    const SparseMatrix sa = a.sparseView();
    double previous_gap = 1.0;
    for (double mu : {1.0, 10.0, 1e3, 1e6, 1e9}) {
      CAPTURE(mu);
      const CouplingStep qp = coupling_qp(sd, sa, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), mu,
                                          Eigen::Vector2d(1.0, 0.0));
      const double gap = 1.0 + qp.delta_x[0] - qp.delta_x[1];
      CHECK(gap < previous_gap);
      CHECK(gap == doctest::Approx(1.0 / (1.0 + 2.0 * mu)).epsilon(1e-8));
      previous_gap = gap;
    }
    const CouplingStep limit = coupling_qp(sd, sa, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), 1e12,
                                           Eigen::Vector2d(1.0, 0.0));
    CHECK(limit.delta_x[0] == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(limit.delta_x[1] == doctest::Approx(0.5).epsilon(1e-9));
  }
  SUBCASE("no coupling and no active rows is a Newton step") {
    std::mt19937_64 rng(9);
    const Eigen::MatrixXd m = random_matrix(5, 5, rng);
    const Eigen::MatrixXd h = m * m.transpose() + Eigen::MatrixXd::Identity(5, 5);
    const Eigen::VectorXd g = random_matrix(5, 1, rng);
    SensitivityData sd;
    sd.blocks = {block(h, g, Eigen::MatrixXd(0, 5))};
    sd.offsets = {0};
    const CouplingStep qp = coupling_qp(sd, SparseMatrix(0, 5), Eigen::VectorXd(0), Eigen::VectorXd(0), 1.0,
                                        Eigen::VectorXd::Zero(5));
    CHECK(oracle::relative_error(qp.delta_x, -h.ldlt().solve(g)) <= 1e-10);
    CHECK(qp.lambda_qp.size() == 0);
  }
}

TEST_CASE("coupling QP matches the dense KKT oracle on random instances") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> positive(0.5, 20.0);
  double worst = 0.0;
  double worst_active = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    SensitivityData sd;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(12, 12);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, 12);
    Eigen::VectorXd g(12);
    for (Eigen::Index i = 0; i < 3; ++i) {
      const Eigen::MatrixXd m = random_matrix(4, 4, rng);
      // Indefinite on the full space, positive definite on the null space of its row.
      Eigen::MatrixXd hi = m * m.transpose() + Eigen::MatrixXd::Identity(4, 4);
      const Eigen::MatrixXd ci = random_matrix(1, 4, rng);
      hi -= 0.5 * hi.norm() * (ci.transpose() * ci) / ci.squaredNorm();
      const Eigen::VectorXd gi = random_matrix(4, 1, rng);
      sd.blocks.push_back(block(hi, gi, ci));
      sd.offsets.push_back(static_cast<std::size_t>(4 * i));
      h.block(4 * i, 4 * i, 4, 4) = hi;
      c.block(i, 4 * i, 1, 4) = ci;
      g.segment(4 * i, 4) = gi;
    }
    const Eigen::MatrixXd a = random_matrix(3, 12, rng);
    const Eigen::VectorXd b = random_matrix(3, 1, rng);
    const Eigen::VectorXd lambda = random_matrix(3, 1, rng);
    const Eigen::VectorXd x = random_matrix(12, 1, rng);
    const double mu = positive(rng);

    const CouplingStep qp = coupling_qp(sd, a.sparseView(), b, lambda, mu, x);
    const oracle::DenseQpSolution ref = oracle::dense_coupling_qp(h, g, c, a, b, lambda, mu, x);
    for (double tau : qp.regularization) CHECK(tau == 0.0);
    worst = std::max({worst, oracle::relative_error(qp.delta_x, ref.delta_x),
                      oracle::relative_error(qp.lambda_qp, ref.lambda_qp)});
    worst_active = std::max(worst_active, (c * qp.delta_x).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-8);
  CHECK(worst_active <= 1e-8);
}

TEST_CASE("indefinite reduced Hessian is shifted until positive definite") {
  SensitivityData sd;
  sd.blocks = {block(Eigen::MatrixXd::Constant(1, 1, -3.0), Eigen::VectorXd::Ones(1), Eigen::MatrixXd(0, 1))};
  sd.offsets = {0};
  const CouplingStep qp = coupling_qp(sd, SparseMatrix(0, 1), Eigen::VectorXd(0), Eigen::VectorXd(0), 1.0,
                                      Eigen::VectorXd::Zero(1));
  REQUIRE(qp.regularization.size() == 1);
  CHECK(qp.regularization[0] > 3.0);
  CHECK(qp.regularization[0] < 6.0 + 1e-8);
  CHECK(qp.delta_x[0] == doctest::Approx(-1.0 / (qp.regularization[0] - 3.0)));
}

TEST_CASE("iterate update") {
  AladinState st;
  st.y = Eigen::Vector2d(0.0, 0.0);
  st.lambda = Eigen::VectorXd::Zero(1);
  st.rho = 500.0;
  st.mu = 2000.0;
  st.iteration = 4;
  CouplingStep qp;
  qp.delta_x = Eigen::Vector2d(0.1, -0.2);
  qp.lambda_qp = Eigen::VectorXd::Constant(1, 7.0);
  AladinParams prm;
  prm.rho_factor = 1.05;
  prm.mu_factor = 2.0;
  prm.mu_max = 1e6;
  const AladinState next = update_iterates(st, Eigen::Vector2d(1.0, 2.0), qp, prm);
  CHECK(next.y[0] == doctest::Approx(1.1));
  CHECK(next.y[1] == doctest::Approx(1.8));
  CHECK(next.lambda[0] == 7.0);
  CHECK(next.rho == doctest::Approx(525.0));
  CHECK(next.mu == doctest::Approx(4000.0));
  CHECK(next.iteration == 5);

  st.mu = 8e5;
  CHECK(update_iterates(st, Eigen::Vector2d(1.0, 2.0), qp, prm).mu == 1e6);
}

TEST_CASE("solve without coupling finishes in one iteration") {
  const CoupledProblem cp = split("case9", 1);
  const SolveReport r = aladin_solve(cp, params(500, 500, 1.05, 2));
  CHECK(r.status == AladinStatus::converged);
  CHECK(r.iterations == 1);
  const double central = solve_centralized(cp.central).objective;
  CHECK(r.objective == doctest::Approx(central).epsilon(1e-8));
}

TEST_CASE("case9 bisection converges quickly to the centralized cost") {
  const CoupledProblem cp = split("case9", 2);
  const SolveReport r = aladin_solve(cp, params(500, 500, 1.05, 2));
  REQUIRE(r.status == AladinStatus::converged);
  CHECK(r.iterations <= 10);
  const double central = solve_centralized(cp.central).objective;
  CHECK(std::abs(r.objective - central) / central <= 1e-3);

  // Report values are recomputed from the final iterate.
  CHECK((cp.coupling * r.x - cp.rhs).lpNorm<1>() == doctest::Approx(r.consensus_residual).epsilon(1e-12));
  CHECK(r.consensus_residual <= 1e-3);
  CHECK(r.primal_residual <= 1e-3);
  const MergedSolution m = merge_solution(cp, r.x);
  const Eigen::VectorXd pf = eval_power_flow(cp.central, m.centralized).residual;
  CHECK(pf.cwiseAbs().maxCoeff() <= 1e-2);

  REQUIRE(r.trace.size() == static_cast<std::size_t>(r.iterations));
  for (std::size_t t = 1; t < r.trace.size(); ++t) {
    CHECK(r.trace[t].rho >= r.trace[t - 1].rho);
    CHECK(r.trace[t].mu >= r.trace[t - 1].mu);
  }
  CHECK(aladin_solve(cp, params(500, 500, 1.05, 2)).iterations == r.iterations);
}

TEST_CASE("invalid parameters are rejected") {
  const CoupledProblem cp = split("case9", 2);
  AladinParams prm;
  prm.eps = 0.0;
  CHECK_THROWS_AS(aladin_solve(cp, prm), std::invalid_argument);
  prm = AladinParams{};
  prm.max_iter = 0;
  CHECK_THROWS_AS(aladin_solve(cp, prm), std::invalid_argument);
}
