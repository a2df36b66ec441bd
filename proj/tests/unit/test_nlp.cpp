#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "partopf/aladin.hpp"
#include "partopf/dense_ldlt.hpp"
#include "partopf/nlp.hpp"

using namespace partopf;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::SparseMatrix<double> sparse(const Eigen::MatrixXd& m) { return m.sparseView(); }

// min 1/2 x^T Q x + c^T x with optional bounds and no rows.
NlpSpec quadratic(const Eigen::MatrixXd& q, const Eigen::VectorXd& c, const Eigen::VectorXd& lower,
                  const Eigen::VectorXd& upper) {
  NlpSpec s;
  s.dimension = c.size();
  s.lower = lower;
  s.upper = upper;
  s.objective = [q, c](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = q * x + c;
    return 0.5 * x.dot(q * x) + c.dot(x);
  };
  s.constraints = [n = c.size()](const Eigen::VectorXd&, Eigen::VectorXd& out, Eigen::SparseMatrix<double>* j) {
    out.resize(0);
    if (j) j->resize(0, n);
  };
  s.hessian = [q](const Eigen::VectorXd&, double f, const Eigen::VectorXd&) { return sparse(f * q); };
  return s;
}

Eigen::VectorXd free_bounds(Eigen::Index n, double sign) { return Eigen::VectorXd::Constant(n, sign * kInf); }

}  // namespace

TEST_CASE("scalar with an active lower bound") {
  const NlpSpec s = quadratic(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Zero(1),
                              Eigen::VectorXd::Constant(1, 1.0), free_bounds(1, 1));
  const NlpResult r = solve_nlp(s, Eigen::VectorXd::Constant(1, 3.0), 1e-8);
  REQUIRE(r.status == NlpStatus::optimal);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.multipliers.lower[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(r.objective == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("unconstrained convex quadratic") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    CAPTURE(trial);
    const Eigen::Index n = 6;
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
    const Eigen::MatrixXd q = m * m.transpose() + Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd c(n);
    for (Eigen::Index i = 0; i < n; ++i) c[i] = n01(rng);
    const NlpResult r = solve_nlp(quadratic(q, c, free_bounds(n, -1), free_bounds(n, 1)),
                                  Eigen::VectorXd::Zero(n), 1e-10);
    REQUIRE(r.status == NlpStatus::optimal);
    const Eigen::VectorXd expected = -q.ldlt().solve(c);
    CHECK(oracle::relative_error(r.x, expected) <= 1e-8);
  }
}

TEST_CASE("equality and inequality rows") {
  // min x0^2 + x1^2  s.t.  x0 + x1 = 1,  x0 - 0.2 <= 0.
  NlpSpec s;
  s.dimension = 2;
  s.rows = {RowKind::equality, RowKind::inequality};
  s.lower = free_bounds(2, -1);
  s.upper = free_bounds(2, 1);
  s.objective = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = 2.0 * x;
    return x.squaredNorm();
  };
  s.constraints = [](const Eigen::VectorXd& x, Eigen::VectorXd& c, Eigen::SparseMatrix<double>* j) {
    c = Eigen::Vector2d(x[0] + x[1] - 1.0, x[0] - 0.2);
    if (j) *j = sparse((Eigen::Matrix2d() << 1, 1, 1, 0).finished());
  };
  s.hessian = [](const Eigen::VectorXd&, double f, const Eigen::VectorXd&) {
    return sparse(2.0 * f * Eigen::MatrixXd::Identity(2, 2));
  };
  const NlpResult r = solve_nlp(s, Eigen::VectorXd::Zero(2), 1e-10);
  REQUIRE(r.status == NlpStatus::optimal);
  CHECK(r.x[0] == doctest::Approx(0.2).epsilon(1e-8));
  CHECK(r.x[1] == doctest::Approx(0.8).epsilon(1e-8));
  // Stationarity: 2 x + m0 (1, 1) + m1 (1, 0) = 0.
  CHECK(r.multipliers.constraints[0] == doctest::Approx(-1.6).epsilon(1e-6));
  CHECK(r.multipliers.constraints[1] == doctest::Approx(1.2).epsilon(1e-6));
  CHECK(kkt_residual(s, r.x, r.multipliers).max() <= 1e-8);
}

TEST_CASE("larger proximal weight never moves the solution farther from the anchor") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01(0.0, 1.0);
  int increases = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 5;
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
    const Eigen::MatrixXd q = m * m.transpose();
    Eigen::VectorXd c(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      c[i] = 3.0 * n01(rng);
      y[i] = n01(rng);
    }
    const Eigen::VectorXd lower = Eigen::VectorXd::Constant(n, -1.5);
    const Eigen::VectorXd upper = Eigen::VectorXd::Constant(n, 1.5);
    double previous = kInf;
    for (double rho : {0.1, 1.0, 10.0, 100.0}) {
      const Eigen::MatrixXd qp = q + rho * Eigen::MatrixXd::Identity(n, n);
      const NlpResult r = solve_nlp(quadratic(qp, c - rho * y, lower, upper), y.cwiseMax(lower).cwiseMin(upper), 1e-10);
      REQUIRE(r.status == NlpStatus::optimal);
      const double distance = (r.x - y).norm();
      increases += distance > previous + 1e-8;
      previous = distance;
    }
  }
  CHECK(increases == 0);
}

TEST_CASE("non-finite evaluation at the start point is rejected") {
  NlpSpec s = quadratic(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), free_bounds(1, -1),
                        free_bounds(1, 1));
  s.objective = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = Eigen::VectorXd::Constant(1, 1.0 / x[0]);
    return std::log(x[0]);
  };
  CHECK_THROWS_AS(solve_nlp(s, Eigen::VectorXd::Constant(1, -1.0), 1e-8), std::invalid_argument);
}

TEST_CASE("centralized OPF reaches the reference optima") {
  struct Ref {
    const char* name;
    double cost;
  };
  // The case9 value agrees with an independent SQP solve to 1e-9 relative.
  for (const Ref& ref : {Ref{"case9", 5303.747325}, Ref{"case14", 8081.524743}, Ref{"case30", 575.351683},
                         Ref{"case39", 41872.301345}, Ref{"case57", 41769.998403}}) {
    CAPTURE(ref.name);
    const OpfProblem p = build_opf(load_case(oracle::case_path(ref.name)));
    const NlpResult r = solve_centralized(p);
    REQUIRE(r.status == NlpStatus::optimal);
    CHECK(r.objective == doctest::Approx(ref.cost).epsilon(1e-8));
    // The reported residual is recomputed from the evaluators alone.
    CHECK(kkt_residual(opf_nlp(p), r.x, r.multipliers).max() == doctest::Approx(r.kkt_residual).epsilon(1e-12));
    CHECK(r.kkt_residual <= 1e-8);
  }
}

TEST_CASE("proximal case9 block matches the independent SQP value") {
  const Network net = load_case(oracle::case_path("case9"));
  const CoupledProblem cp = split_problem(net, PartitionMap{1, std::vector<std::size_t>(9, 0)});
  AladinParams params;
  params.sigma = {Eigen::VectorXd::Ones(static_cast<Eigen::Index>(cp.total))};
  AladinState st = initial_state(cp, params);
  st.rho = 500.0;
  const NlpSpec spec = augmented_nlp(cp, st, params, 0);
  const NlpResult r = solve_nlp(spec, st.y, 1e-8);
  REQUIRE(r.status == NlpStatus::optimal);
  CHECK(r.objective == doctest::Approx(5419.254846646).epsilon(1e-5));
  CHECK(kkt_residual(spec, r.x, r.multipliers).max() <= 1e-8);

  SUBCASE("identical inputs give bitwise identical results") {
    const NlpResult again = solve_nlp(spec, st.y, 1e-8);
    CHECK(again.x == r.x);
    CHECK(again.iterations == r.iterations);
  }
  SUBCASE("proximal term never lowers the original cost below the optimum") {
    const OpfProblem central = build_opf(net);
    const double optimum = solve_centralized(central).objective;
    double previous = -kInf;
    for (double rho : {1.0, 10.0, 100.0, 1000.0}) {
      st.rho = rho;
      const NlpResult p = solve_nlp(augmented_nlp(cp, st, params, 0), st.y, 1e-8);
      REQUIRE(p.status == NlpStatus::optimal);
      const double cost = eval_objective(central, p.x).value;
      CHECK(cost >= optimum - 1e-6);
      CHECK(cost >= previous - 1e-6);
      previous = cost;
    }
  }
}

TEST_CASE("symmetric indefinite factorization") {
  SymmetricIndefiniteLdlt ldlt;
  SUBCASE("inertia of a diagonal") {
    const Eigen::Vector4d d(3.0, -1.0, 2.0, -5.0);
    REQUIRE(ldlt.factorize(d.asDiagonal().toDenseMatrix()));
    CHECK(ldlt.inertia() == Inertia{2, 2, 0});
  }
  SUBCASE("saddle point matrix needs 2x2 pivots") {
    Eigen::Matrix3d k;
    k << 0, 1, 0, 1, 0, 1, 0, 1, 1;
    REQUIRE(ldlt.factorize(k));
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(k);
    Inertia expected;
    for (double v : eig.eigenvalues()) (v > 0 ? expected.positive : expected.negative)++;
    CHECK(ldlt.inertia() == expected);
    const Eigen::Vector3d rhs(1.0, 2.0, 3.0);
    CHECK((k * ldlt.solve(rhs) - rhs).norm() <= 1e-12);
  }
  SUBCASE("exactly singular reports a zero pivot") {
    Eigen::Matrix2d k;
    k << 1, 1, 1, 1;
    CHECK_FALSE(ldlt.factorize(k));
    CHECK(ldlt.inertia().zero == 1);
  }
  SUBCASE("random symmetric matrices match eigenvalue signs") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01(0.0, 1.0);
    int mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::MatrixXd m(9, 9);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
      const Eigen::MatrixXd s = m + m.transpose();
      ldlt.factorize(s);
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
      Inertia expected;
      for (Eigen::Index i = 0; i < 9; ++i) (eig.eigenvalues()[i] > 0 ? expected.positive : expected.negative)++;
      mismatches += !(ldlt.inertia() == expected);
    }
    CHECK(mismatches == 0);
  }
}
