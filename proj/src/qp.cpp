#include "tems/qp.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tems {

namespace {

constexpr double kDualReg = 1e-10;

struct Kkt {
  Eigen::SparseMatrix<double> K;   // as factorized (possibly regularized)
  Eigen::SparseMatrix<double> K0;  // unregularized, for refinement
  Eigen::VectorXd rhs;
};

// Assemble the KKT system for the current working set. Row layout:
// [stationarity (n) | equalities | active inequalities | active bounds].
Kkt build_kkt(const QpProblem& qp, const std::vector<int>& act_in,
              const std::vector<int>& act_bnd, const QpWorkingSet& ws,
              bool regularize) {
  const int n = qp.n();
  const int m_eq = qp.m_eq();
  const int na = static_cast<int>(act_in.size());
  const int nb = static_cast<int>(act_bnd.size());
  const int dim = n + m_eq + na + nb;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(qp.H.nonZeros() + 2 * (qp.Aeq.nonZeros() + qp.Ain.nonZeros()) +
                2 * nb + dim);

  for (int k = 0; k < qp.H.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.H, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value());

  for (int k = 0; k < qp.Aeq.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.Aeq, k); it; ++it) {
      const int r = n + static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      trips.emplace_back(r, c, it.value());
      trips.emplace_back(c, r, it.value());
    }

  for (int a = 0; a < na; ++a) {
    const int row = act_in[a];
    const int r = n + m_eq + a;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(qp.Ain, row);
         it; ++it) {
      trips.emplace_back(r, static_cast<int>(it.index()), it.value());
      trips.emplace_back(static_cast<int>(it.index()), r, it.value());
    }
  }

  for (int b = 0; b < nb; ++b) {
    const int j = act_bnd[b];
    const int r = n + m_eq + na + b;
    trips.emplace_back(r, j, 1.0);
    trips.emplace_back(j, r, 1.0);
  }

  Kkt out;
  out.K0.resize(dim, dim);
  out.K0.setFromTriplets(trips.begin(), trips.end());
  if (regularize) {
    for (int k = n; k < dim; ++k) trips.emplace_back(k, k, -kDualReg);
    out.K.resize(dim, dim);
    out.K.setFromTriplets(trips.begin(), trips.end());
  } else {
    out.K = out.K0;
  }

  out.rhs.resize(dim);
  out.rhs.head(n) = -qp.g;
  out.rhs.segment(n, m_eq) = qp.beq;
  for (int a = 0; a < na; ++a) out.rhs(n + m_eq + a) = qp.bin(act_in[a]);
  for (int b = 0; b < nb; ++b) {
    const int j = act_bnd[b];
    out.rhs(n + m_eq + na + b) = ws.bound_state[j] > 0 ? qp.hi(j) : qp.lo(j);
  }
  return out;
}

}  // namespace

QpSolution solve_qp(const QpProblem& qp, QpWorkingSet* ws, const QpOptions& opts) {
  const int n = qp.n();
  const int m_eq = qp.m_eq();
  const int m_in = qp.m_in();

  if (qp.H.rows() != n || qp.H.cols() != n || qp.lo.size() != n || qp.hi.size() != n ||
      (m_eq > 0 && qp.Aeq.cols() != n) || (m_in > 0 && qp.Ain.cols() != n))
    throw std::invalid_argument("solve_qp: inconsistent problem dimensions");

  QpWorkingSet local;
  if (!ws) ws = &local;
  if (!ws->sized_for(m_in, n)) ws->clear(m_in, n);

  // Fixed variables (lo == hi) stay pinned for the whole solve.
  for (int j = 0; j < n; ++j)
    if (qp.lo(j) == qp.hi(j)) ws->bound_state[j] = 1;

  QpSolution sol;
  sol.x = Eigen::VectorXd::Zero(n);
  sol.lam_eq = Eigen::VectorXd::Zero(m_eq);
  sol.lam_in = Eigen::VectorXd::Zero(m_in);
  sol.lam_lo = Eigen::VectorXd::Zero(n);
  sol.lam_hi = Eigen::VectorXd::Zero(n);

  const int cap = opts.max_iter > 0 ? opts.max_iter
                                    : std::max(100, 3 * (m_in + 2 * n) + 10);
  bool restarted = false;

  for (int iter = 1;; ++iter) {
    if (iter > cap) {
      if (!restarted) {
        // One reset from scratch; a stale warm set can thrash.
        restarted = true;
        ws->clear(m_in, n);
        for (int j = 0; j < n; ++j)
          if (qp.lo(j) == qp.hi(j)) ws->bound_state[j] = 1;
        iter = 1;
      } else {
        sol.status = QpStatus::iteration_limit;
        sol.iterations = cap;
        return sol;
      }
    }
    sol.iterations = iter;

    std::vector<int> act_in, act_bnd;
    for (int i = 0; i < m_in; ++i)
      if (ws->ineq_active[i]) act_in.push_back(i);
    for (int j = 0; j < n; ++j)
      if (ws->bound_state[j] != 0) act_bnd.push_back(j);

    Kkt kkt = build_kkt(qp, act_in, act_bnd, *ws, false);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(kkt.K);
    Eigen::VectorXd z;
    if (lu.info() == Eigen::Success) {
      z = lu.solve(kkt.rhs);
    } else {
      // Redundant rows in the working set; regularize the dual block and
      // polish with one refinement step against the true system.
      kkt = build_kkt(qp, act_in, act_bnd, *ws, true);
      lu.compute(kkt.K);
      if (lu.info() != Eigen::Success) {
        sol.status = QpStatus::singular;
        return sol;
      }
      z = lu.solve(kkt.rhs);
      z += lu.solve((kkt.rhs - kkt.K0 * z).eval());
    }

    sol.x = z.head(n);
    sol.lam_eq = z.segment(n, m_eq);
    sol.lam_in.setZero();
    sol.lam_lo.setZero();
    sol.lam_hi.setZero();
    const int na = static_cast<int>(act_in.size());
    for (int a = 0; a < na; ++a) sol.lam_in(act_in[a]) = z(n + m_eq + a);
    for (size_t b = 0; b < act_bnd.size(); ++b) {
      const int j = act_bnd[b];
      const double nu = z(n + m_eq + na + static_cast<int>(b));
      // Row is +e_j in both cases; at an upper bound the multiplier is nu,
      // at a lower bound it is -nu.
      if (ws->bound_state[j] > 0)
        sol.lam_hi(j) = nu;
      else
        sol.lam_lo(j) = -nu;
    }

    // Inconsistent rows survive the regularized solve as an unreduced
    // residual. A droppable member (negative least-squares multiplier) gets
    // removed; if every dual is nonnegative the conflict is real and the QP
    // is infeasible.
    double wset_res = 0.0;
    if (m_eq > 0)
      wset_res = (qp.Aeq * sol.x - qp.beq).cwiseAbs().maxCoeff() /
                 (1.0 + qp.beq.cwiseAbs().maxCoeff());
    for (int i : act_in) {
      const double r = std::abs(qp.Ain.row(i).dot(sol.x) - qp.bin(i));
      wset_res = std::max(wset_res, r / (1.0 + std::abs(qp.bin(i))));
    }
    for (int j : act_bnd) {
      const double b = ws->bound_state[j] > 0 ? qp.hi(j) : qp.lo(j);
      wset_res = std::max(wset_res, std::abs(sol.x(j) - b) / (1.0 + std::abs(b)));
    }
    if (!std::isfinite(wset_res) || wset_res > 1e-6) {
      double worst = -1e-9;
      int drop_i = -1, drop_j = -1;
      for (int i : act_in)
        if (sol.lam_in(i) < worst) {
          worst = sol.lam_in(i);
          drop_i = i;
        }
      for (int j : act_bnd) {
        if (qp.lo(j) == qp.hi(j)) continue;
        const double lam = ws->bound_state[j] > 0 ? sol.lam_hi(j) : sol.lam_lo(j);
        if (lam < worst) {
          worst = lam;
          drop_i = -1;
          drop_j = j;
        }
      }
      if (drop_i >= 0) {
        ws->ineq_active[drop_i] = 0;
        continue;
      }
      if (drop_j >= 0) {
        ws->bound_state[drop_j] = 0;
        continue;
      }
      sol.status = QpStatus::infeasible;
      return sol;
    }

    // Most violated inactive constraint (relative scale).
    double worst_viol = opts.feas_tol;
    int add_in = -1, add_bnd = 0, add_bnd_side = 0;
    Eigen::VectorXd rin;
    if (m_in > 0) rin = qp.Ain * sol.x - qp.bin;
    for (int i = 0; i < m_in; ++i) {
      if (ws->ineq_active[i]) continue;
      const double v = rin(i) / (1.0 + std::abs(qp.bin(i)));
      if (v > worst_viol) {
        worst_viol = v;
        add_in = i;
      }
    }
    for (int j = 0; j < n; ++j) {
      if (ws->bound_state[j] != 0 && qp.lo(j) == qp.hi(j)) continue;
      if (std::isfinite(qp.lo(j)) && ws->bound_state[j] != -1) {
        const double v = (qp.lo(j) - sol.x(j)) / (1.0 + std::abs(qp.lo(j)));
        if (v > worst_viol) {
          worst_viol = v;
          add_in = -1;
          add_bnd = j;
          add_bnd_side = -1;
        }
      }
      if (std::isfinite(qp.hi(j)) && ws->bound_state[j] != 1) {
        const double v = (sol.x(j) - qp.hi(j)) / (1.0 + std::abs(qp.hi(j)));
        if (v > worst_viol) {
          worst_viol = v;
          add_in = -1;
          add_bnd = j;
          add_bnd_side = 1;
        }
      }
    }
    if (add_in >= 0 || add_bnd_side != 0) {
      if (add_in >= 0)
        ws->ineq_active[add_in] = 1;
      else
        ws->bound_state[add_bnd] = static_cast<signed char>(add_bnd_side);
      continue;
    }

    // Feasible; now check multiplier signs and drop the worst offender.
    double worst_dual = -opts.dual_tol;
    int drop_in = -1, drop_bnd = -1;
    for (int i : act_in) {
      if (sol.lam_in(i) < worst_dual) {
        worst_dual = sol.lam_in(i);
        drop_in = i;
      }
    }
    for (int j : act_bnd) {
      if (qp.lo(j) == qp.hi(j)) continue;
      const double lam = ws->bound_state[j] > 0 ? sol.lam_hi(j) : sol.lam_lo(j);
      if (lam < worst_dual) {
        worst_dual = lam;
        drop_in = -1;
        drop_bnd = j;
      }
    }
    if (drop_in >= 0) {
      ws->ineq_active[drop_in] = 0;
      continue;
    }
    if (drop_bnd >= 0) {
      ws->bound_state[drop_bnd] = 0;
      continue;
    }

    // Optimal. Report the residual of the full KKT conditions.
    double res = 0.0;
    Eigen::VectorXd stat = qp.H * sol.x + qp.g;
    if (m_eq > 0) stat += qp.Aeq.transpose() * sol.lam_eq;
    if (m_in > 0) stat += qp.Ain.transpose() * sol.lam_in;
    stat += sol.lam_hi - sol.lam_lo;
    res = stat.cwiseAbs().maxCoeff();
    if (m_eq > 0) res = std::max(res, (qp.Aeq * sol.x - qp.beq).cwiseAbs().maxCoeff());
    for (int i = 0; i < m_in; ++i) {
      res = std::max(res, std::max(0.0, rin(i)));
      res = std::max(res, std::abs(sol.lam_in(i) * rin(i)));
    }
    for (int j = 0; j < n; ++j) {
      if (std::isfinite(qp.lo(j))) {
        res = std::max(res, std::max(0.0, qp.lo(j) - sol.x(j)));
        res = std::max(res, std::abs(sol.lam_lo(j) * (sol.x(j) - qp.lo(j))));
      }
      if (std::isfinite(qp.hi(j))) {
        res = std::max(res, std::max(0.0, sol.x(j) - qp.hi(j)));
        res = std::max(res, std::abs(sol.lam_hi(j) * (qp.hi(j) - sol.x(j))));
      }
    }
    sol.kkt_residual = res;
    sol.status = QpStatus::optimal;
    return sol;
  }
}

}  // namespace tems
