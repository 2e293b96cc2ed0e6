#pragma once

// Sparse convex QP solved with a guess-and-verify active set: equality rows
// plus the guessed active inequalities and bounds form a KKT system, solved
// with a sparse LU; the guess is then corrected one constraint at a time
// (add the most violated, drop the most negative multiplier). The working
// set can be kept by the caller between solves, which is what makes the SQP
// loop cheap near a solution.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <vector>

namespace tems {

struct QpProblem {
  // minimize 0.5 x'Hx + g'x
  // s.t. Aeq x = beq, Ain x <= bin, lo <= x <= hi (entries may be +-inf)
  // Ain is row-major because the active-set loop pulls individual rows.
  Eigen::SparseMatrix<double> H;  // n x n, symmetric PSD
  Eigen::VectorXd g;
  Eigen::SparseMatrix<double> Aeq;
  Eigen::VectorXd beq;
  Eigen::SparseMatrix<double, Eigen::RowMajor> Ain;
  Eigen::VectorXd bin;
  Eigen::VectorXd lo, hi;

  int n() const { return static_cast<int>(g.size()); }
  int m_eq() const { return static_cast<int>(beq.size()); }
  int m_in() const { return static_cast<int>(bin.size()); }
};

enum class QpStatus { optimal, iteration_limit, infeasible, singular };

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd lam_eq;          // equality multipliers, free sign
  Eigen::VectorXd lam_in;          // inequality multipliers, >= 0
  Eigen::VectorXd lam_lo, lam_hi;  // bound multipliers, >= 0
  QpStatus status = QpStatus::singular;
  int iterations = 0;
  double kkt_residual = 0.0;
};

// Active-set guess carried across solves. -1/+1 mark a variable fixed at its
// lower/upper bound.
struct QpWorkingSet {
  std::vector<char> ineq_active;
  std::vector<signed char> bound_state;

  void clear(int m_in, int n) {
    ineq_active.assign(m_in, 0);
    bound_state.assign(n, 0);
  }
  bool sized_for(int m_in, int n) const {
    return static_cast<int>(ineq_active.size()) == m_in &&
           static_cast<int>(bound_state.size()) == n;
  }
};

struct QpOptions {
  double feas_tol = 1e-9;
  double dual_tol = 1e-9;
  int max_iter = 0;  // 0 means a size-based default
};

// ws may be null (cold start) or carry the previous active set; it is
// updated in place on exit.
QpSolution solve_qp(const QpProblem& qp, QpWorkingSet* ws = nullptr,
                    const QpOptions& opts = {});

}  // namespace tems
