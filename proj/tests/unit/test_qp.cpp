#include <doctest.h>

#include <random>

#include "tems/qp.hpp"

using namespace tems;

namespace {

Eigen::SparseMatrix<double> sparse_diag(const Eigen::VectorXd& d) {
  Eigen::SparseMatrix<double> H(d.size(), d.size());
  for (int i = 0; i < d.size(); ++i) H.insert(i, i) = d(i);
  H.makeCompressed();
  return H;
}

QpProblem empty_problem(int n) {
  QpProblem qp;
  qp.g = Eigen::VectorXd::Zero(n);
  qp.lo = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  qp.hi = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  qp.Aeq.resize(0, n);
  qp.Ain.resize(0, n);
  return qp;
}

}  // namespace

TEST_CASE("unconstrained quadratic") {
  QpProblem qp = empty_problem(2);
  qp.H = sparse_diag((Eigen::VectorXd(2) << 2.0, 4.0).finished());
  qp.g << -2.0, -8.0;
  QpSolution s = solve_qp(qp);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.x(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.x(1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s.kkt_residual < 1e-10);
}

TEST_CASE("equality constrained: min x^2 + u^2 s.t. x - u = 1") {
  QpProblem qp = empty_problem(2);
  qp.H = sparse_diag(Eigen::VectorXd::Constant(2, 2.0));
  qp.g.setZero();
  qp.Aeq.resize(1, 2);
  qp.Aeq.insert(0, 0) = 1.0;
  qp.Aeq.insert(0, 1) = -1.0;
  qp.beq = Eigen::VectorXd::Constant(1, 1.0);
  QpSolution s = solve_qp(qp);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.x(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.x(1) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("active inequality: min (x-2)^2 s.t. x <= 1") {
  QpProblem qp = empty_problem(1);
  qp.H = sparse_diag(Eigen::VectorXd::Constant(1, 2.0));
  qp.g = Eigen::VectorXd::Constant(1, -4.0);
  qp.Ain.resize(1, 1);
  qp.Ain.insert(0, 0) = 1.0;
  qp.bin = Eigen::VectorXd::Constant(1, 1.0);
  QpSolution s = solve_qp(qp);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.x(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.lam_in(0) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("inactive inequality leaves the unconstrained optimum") {
  QpProblem qp = empty_problem(1);
  qp.H = sparse_diag(Eigen::VectorXd::Constant(1, 2.0));
  qp.g = Eigen::VectorXd::Constant(1, -4.0);  // optimum at 2
  qp.Ain.resize(1, 1);
  qp.Ain.insert(0, 0) = 1.0;
  qp.bin = Eigen::VectorXd::Constant(1, 5.0);
  QpSolution s = solve_qp(qp);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.x(0) == doctest::Approx(2.0));
  CHECK(s.lam_in(0) == 0.0);
}

TEST_CASE("bound active at the top") {
  QpProblem qp = empty_problem(1);
  qp.H = sparse_diag(Eigen::VectorXd::Constant(1, 2.0));
  qp.g = Eigen::VectorXd::Constant(1, -6.0);  // optimum at 3
  qp.lo(0) = 0.0;
  qp.hi(0) = 2.0;
  QpSolution s = solve_qp(qp);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.x(0) == doctest::Approx(2.0));
  CHECK(s.lam_hi(0) == doctest::Approx(2.0));
  CHECK(s.lam_lo(0) == 0.0);
}

TEST_CASE("random diagonal box QPs match the clamp formula") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(gen() % 6);
    Eigen::VectorXd h(n), g(n), lo(n), hi(n);
    for (int j = 0; j < n; ++j) {
      h(j) = 0.5 + 2.0 * std::abs(unif(gen));
      g(j) = 3.0 * unif(gen);
      lo(j) = -0.5 + 0.3 * unif(gen);
      hi(j) = 0.5 + 0.3 * unif(gen);
    }
    QpProblem qp = empty_problem(n);
    qp.H = sparse_diag(h);
    qp.g = g;
    qp.lo = lo;
    qp.hi = hi;
    QpSolution s = solve_qp(qp);
    REQUIRE(s.status == QpStatus::optimal);
    for (int j = 0; j < n; ++j) {
      const double expect = std::min(hi(j), std::max(lo(j), -g(j) / h(j)));
      CHECK(s.x(j) == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("warm started resolve takes fewer active-set iterations") {
  QpProblem qp = empty_problem(3);
  qp.H = sparse_diag(Eigen::VectorXd::Constant(3, 2.0));
  qp.g << -10.0, -10.0, -10.0;
  qp.lo.setConstant(0.0);
  qp.hi.setConstant(1.0);
  QpWorkingSet ws;
  QpSolution cold = solve_qp(qp, &ws);
  REQUIRE(cold.status == QpStatus::optimal);
  CHECK(cold.x.isApprox(Eigen::VectorXd::Ones(3)));

  qp.g << -9.0, -11.0, -10.5;  // same active set
  QpSolution warm = solve_qp(qp, &ws);
  REQUIRE(warm.status == QpStatus::optimal);
  CHECK(warm.iterations <= cold.iterations);
  CHECK(warm.iterations == 1);
}

TEST_CASE("inconsistent equalities are flagged infeasible") {
  QpProblem qp = empty_problem(1);
  qp.H = sparse_diag(Eigen::VectorXd::Constant(1, 2.0));
  qp.g.setZero();
  qp.Aeq.resize(2, 1);
  qp.Aeq.insert(0, 0) = 1.0;
  qp.Aeq.insert(1, 0) = 1.0;
  qp.beq = (Eigen::VectorXd(2) << 0.0, 1.0).finished();
  QpSolution s = solve_qp(qp);
  CHECK(s.status == QpStatus::infeasible);
}

TEST_CASE("fixed variables via lo == hi") {
  QpProblem qp = empty_problem(2);
  qp.H = sparse_diag(Eigen::VectorXd::Constant(2, 2.0));
  qp.g << -2.0, -2.0;
  qp.lo(0) = qp.hi(0) = 0.25;
  QpSolution s = solve_qp(qp);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.x(0) == doctest::Approx(0.25));
  CHECK(s.x(1) == doctest::Approx(1.0));
}
