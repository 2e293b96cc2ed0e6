#pragma once

// SQP solver for smooth NLPs of the form
//   min f(x)  s.t.  c_eq(x) = 0,  c_in(x) <= 0,  lo <= x <= hi.
// Each iteration linearizes the constraints, builds a convex QP from a
// block-structured quasi-Newton Hessian and runs a line search on an l1
// penalty merit. The Lagrangian Hessian is kept as a sum of small dense
// elements (per tree node, per dynamics edge, per constraint row in the OCP
// use) that are BFGS-updated independently; a problem without elements gets
// a single element spanning all variables, which is plain dense BFGS.
//
// Derivatives come from the problem's callbacks when present, otherwise
// central differences. A solver instance keeps its element Hessians and the
// QP working set between solves, which is what makes receding-horizon
// re-solves cheap; multipliers always restart at zero so a solve launched
// exactly at a KKT point returns it untouched.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tems {

struct NlpElement {
  std::vector<int> idx;  // variables this element couples
  // Gradient of the element's share of the Lagrangian, length idx.size().
  std::function<Eigen::VectorXd(const Eigen::VectorXd& x, const Eigen::VectorXd& lam_eq,
                                const Eigen::VectorXd& lam_in)>
      grad;
};

struct NlpProblem {
  int n = 0;
  std::function<double(const Eigen::VectorXd&)> objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eq;    // may be null
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> ineq;  // may be null
  int m_eq = 0;
  int m_in = 0;
  Eigen::VectorXd lo, hi;  // empty means unbounded
  Eigen::VectorXd x0;

  // Optional analytic derivatives (FD otherwise).
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::SparseMatrix<double>(const Eigen::VectorXd&)> eq_jac;
  std::function<Eigen::SparseMatrix<double, Eigen::RowMajor>(const Eigen::VectorXd&)>
      ineq_jac;

  std::vector<NlpElement> elements;

  void finalize();  // fill bounds/m_eq/m_in defaults, sanity checks
};

struct Multipliers {
  Eigen::VectorXd eq;          // free sign
  Eigen::VectorXd ineq;        // >= 0
  Eigen::VectorXd bound_lo;    // >= 0
  Eigen::VectorXd bound_hi;    // >= 0
};

struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;

  double max_residual() const;
  bool within(double tol) const { return max_residual() <= tol; }
};

KktReport check_kkt(const NlpProblem& p, const Eigen::VectorXd& x,
                    const Multipliers& mult);

// Compare the problem's own first derivatives against central differences;
// returns the worst relative mismatch. Used as a self-check on transcribed
// problems and in tests.
double check_gradients(const NlpProblem& p, const Eigen::VectorXd& x,
                       double fd_step = 1e-6);

enum class SolveStatus { optimal, max_iter, infeasible };

const char* to_string(SolveStatus s);

struct NlpSolution {
  Eigen::VectorXd x;
  double objective = 0.0;
  Multipliers multipliers;
  SolveStatus status = SolveStatus::max_iter;
  KktReport kkt;
  int iterations = 0;
  int qp_iterations = 0;
  // Per-row slack values from the elastic relaxation when the linearized
  // constraints could not be met; empty otherwise.
  Eigen::VectorXd infeasibility_slacks;
};

struct SqpOptions {
  double tol = 1e-6;           // inf-norm KKT residual
  int max_iter = 100;
  bool force_fd = false;       // ignore analytic derivatives (self-checks)
  double fd_step = 1e-6;       // relative FD step
  double c1 = 1e-4;            // Armijo constant
  int max_line_search = 30;
  double elastic_penalty = 1e6;
  double hess_floor = 1e-8;    // eigenvalue clamp for element initializers
  double hess_reg = 1e-9;      // diagonal added to the assembled QP Hessian
};

class NlpSolver {
 public:
  explicit NlpSolver(SqpOptions opts = {}) : opts_(opts) {}

  // x_init overrides problem.x0. Warm data is reused when the problem shape
  // (n, element count) matches the previous call, otherwise dropped.
  NlpSolution solve(const NlpProblem& p,
                    const std::optional<Eigen::VectorXd>& x_init = std::nullopt);

  void reset();

  const SqpOptions& options() const { return opts_; }
  SqpOptions& options() { return opts_; }

 private:
  SqpOptions opts_;
  std::vector<Eigen::MatrixXd> elem_hess_;
  std::vector<char> elem_ready_;
  struct WarmShape {
    int n = -1;
    int m_in = -1;
    size_t elements = 0;
  } shape_;
  // Declared in qp.hpp; stored through small vectors to avoid the include.
  std::vector<char> qp_ineq_active_;
  std::vector<signed char> qp_bound_state_;
};

// One-shot convenience.
NlpSolution solve(const NlpProblem& p, const SqpOptions& opts = {});

}  // namespace tems
