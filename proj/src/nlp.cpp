#include "tems/nlp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "tems/qp.hpp"

namespace tems {

namespace {

constexpr double kInfD = std::numeric_limits<double>::infinity();

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd p = x;
  for (int j = 0; j < x.size(); ++j) {
    const double h = step * std::max(1.0, std::abs(x(j)));
    p(j) = x(j) + h;
    const double fp = f(p);
    p(j) = x(j) - h;
    const double fm = f(p);
    p(j) = x(j);
    g(j) = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd fd_jacobian_dense(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, int m, double step) {
  Eigen::MatrixXd J(m, x.size());
  Eigen::VectorXd p = x;
  for (int j = 0; j < x.size(); ++j) {
    const double h = step * std::max(1.0, std::abs(x(j)));
    p(j) = x(j) + h;
    Eigen::VectorXd fp = f(p);
    p(j) = x(j) - h;
    Eigen::VectorXd fm = f(p);
    p(j) = x(j);
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

// Unified access to first derivatives, analytic or FD.
struct Derivs {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
  std::function<Eigen::SparseMatrix<double>(const Eigen::VectorXd&)> jeq;
  std::function<Eigen::SparseMatrix<double, Eigen::RowMajor>(const Eigen::VectorXd&)> jin;
};

Derivs make_derivs(const NlpProblem& p, bool force_fd, double step) {
  Derivs d;
  if (p.gradient && !force_fd) {
    d.grad = p.gradient;
  } else {
    auto obj = p.objective;
    d.grad = [obj, step](const Eigen::VectorXd& x) { return fd_gradient(obj, x, step); };
  }
  if (p.m_eq > 0) {
    if (p.eq_jac && !force_fd) {
      d.jeq = p.eq_jac;
    } else {
      auto eq = p.eq;
      const int m = p.m_eq;
      d.jeq = [eq, m, step](const Eigen::VectorXd& x) {
        return fd_jacobian_dense(eq, x, m, step).sparseView().eval();
      };
    }
  }
  if (p.m_in > 0) {
    if (p.ineq_jac && !force_fd) {
      d.jin = p.ineq_jac;
    } else {
      auto in = p.ineq;
      const int m = p.m_in;
      d.jin = [in, m, step](const Eigen::VectorXd& x) {
        Eigen::SparseMatrix<double, Eigen::RowMajor> J =
            fd_jacobian_dense(in, x, m, step).sparseView();
        return J;
      };
    }
  }
  return d;
}

KktReport kkt_from_parts(const Eigen::VectorXd& g, const Eigen::VectorXd& ceq,
                         const Eigen::VectorXd& cin,
                         const Eigen::SparseMatrix<double>* Jeq,
                         const Eigen::SparseMatrix<double, Eigen::RowMajor>* Jin,
                         const Multipliers& m, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  KktReport r;
  Eigen::VectorXd stat = g;
  if (Jeq && m.eq.size() > 0) stat += Jeq->transpose() * m.eq;
  if (Jin && m.ineq.size() > 0) stat += Jin->transpose() * m.ineq;
  if (m.bound_hi.size() > 0) stat += m.bound_hi;
  if (m.bound_lo.size() > 0) stat -= m.bound_lo;
  r.stationarity = stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0;

  double primal = 0.0;
  if (ceq.size()) primal = std::max(primal, ceq.cwiseAbs().maxCoeff());
  for (int i = 0; i < cin.size(); ++i) primal = std::max(primal, cin(i));
  for (int j = 0; j < x.size(); ++j) {
    primal = std::max(primal, lo(j) - x(j));
    primal = std::max(primal, x(j) - hi(j));
  }
  r.primal = std::max(primal, 0.0);

  double dual = 0.0;
  for (int i = 0; i < m.ineq.size(); ++i) dual = std::max(dual, -m.ineq(i));
  for (int j = 0; j < m.bound_lo.size(); ++j) dual = std::max(dual, -m.bound_lo(j));
  for (int j = 0; j < m.bound_hi.size(); ++j) dual = std::max(dual, -m.bound_hi(j));
  r.dual = dual;

  double compl_ = 0.0;
  for (int i = 0; i < cin.size() && i < m.ineq.size(); ++i)
    compl_ = std::max(compl_, std::abs(m.ineq(i) * cin(i)));
  for (int j = 0; j < x.size(); ++j) {
    if (m.bound_lo.size() > 0 && std::isfinite(lo(j)))
      compl_ = std::max(compl_, std::abs(m.bound_lo(j) * (x(j) - lo(j))));
    if (m.bound_hi.size() > 0 && std::isfinite(hi(j)))
      compl_ = std::max(compl_, std::abs(m.bound_hi(j) * (hi(j) - x(j))));
  }
  r.complementarity = compl_;
  return r;
}

Eigen::MatrixXd clamp_psd(const Eigen::MatrixXd& H, double floor_ev) {
  Eigen::MatrixXd S = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor_ev).cwiseMin(1e12);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// l1 constraint violation used by the merit function.
double viol_l1(const Eigen::VectorXd& ceq, const Eigen::VectorXd& cin) {
  double v = 0.0;
  for (int i = 0; i < ceq.size(); ++i) v += std::abs(ceq(i));
  for (int i = 0; i < cin.size(); ++i) v += std::max(0.0, cin(i));
  return v;
}

QpSolution solve_elastic(const QpProblem& qp, double penalty) {
  const int n = qp.n();
  const int m_in = qp.m_in();
  QpProblem e;
  std::vector<Eigen::Triplet<double>> ht;
  for (int k = 0; k < qp.H.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.H, k); it; ++it)
      ht.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int i = 0; i < m_in; ++i) ht.emplace_back(n + i, n + i, 1e-8);
  e.H.resize(n + m_in, n + m_in);
  e.H.setFromTriplets(ht.begin(), ht.end());

  e.g.resize(n + m_in);
  e.g.head(n) = qp.g;
  e.g.tail(m_in).setConstant(penalty);

  std::vector<Eigen::Triplet<double>> at;
  for (int k = 0; k < qp.Aeq.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.Aeq, k); it; ++it)
      at.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  e.Aeq.resize(qp.m_eq(), n + m_in);
  e.Aeq.setFromTriplets(at.begin(), at.end());
  e.beq = qp.beq;

  std::vector<Eigen::Triplet<double>> bt;
  for (int i = 0; i < m_in; ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(qp.Ain, i); it;
         ++it)
      bt.emplace_back(i, static_cast<int>(it.index()), it.value());
    bt.emplace_back(i, n + i, -1.0);
  }
  e.Ain.resize(m_in, n + m_in);
  e.Ain.setFromTriplets(bt.begin(), bt.end());
  e.bin = qp.bin;

  e.lo.resize(n + m_in);
  e.hi.resize(n + m_in);
  e.lo.head(n) = qp.lo;
  e.hi.head(n) = qp.hi;
  e.lo.tail(m_in).setZero();
  e.hi.tail(m_in).setConstant(kInfD);

  return solve_qp(e, nullptr);
}

}  // namespace

void NlpProblem::finalize() {
  if (n <= 0) throw std::invalid_argument("NlpProblem: n must be positive");
  if (!objective) throw std::invalid_argument("NlpProblem: objective not set");
  if (x0.size() == 0) x0 = Eigen::VectorXd::Zero(n);
  if (x0.size() != n) throw std::invalid_argument("NlpProblem: x0 has wrong size");
  if (lo.size() == 0) lo = Eigen::VectorXd::Constant(n, -kInfD);
  if (hi.size() == 0) hi = Eigen::VectorXd::Constant(n, kInfD);
  if (lo.size() != n || hi.size() != n)
    throw std::invalid_argument("NlpProblem: bounds have wrong size");
  for (int j = 0; j < n; ++j)
    if (lo(j) > hi(j)) throw std::invalid_argument("NlpProblem: empty bound interval");
  if (eq && m_eq == 0) m_eq = static_cast<int>(eq(x0).size());
  if (ineq && m_in == 0) m_in = static_cast<int>(ineq(x0).size());
  if (m_eq > 0 && !eq) throw std::invalid_argument("NlpProblem: m_eq > 0 without eq");
  if (m_in > 0 && !ineq) throw std::invalid_argument("NlpProblem: m_in > 0 without ineq");
  for (const NlpElement& e : elements) {
    if (!e.grad) throw std::invalid_argument("NlpProblem: element without gradient");
    for (int j : e.idx)
      if (j < 0 || j >= n) throw std::invalid_argument("NlpProblem: element index range");
  }
}

double KktReport::max_residual() const {
  return std::max(std::max(stationarity, primal), std::max(dual, complementarity));
}

KktReport check_kkt(const NlpProblem& problem, const Eigen::VectorXd& x,
                    const Multipliers& mult) {
  NlpProblem p = problem;
  p.finalize();
  Derivs dv = make_derivs(p, false, 1e-6);
  Eigen::VectorXd g = dv.grad(x);
  Eigen::VectorXd ceq = p.m_eq ? p.eq(x) : Eigen::VectorXd();
  Eigen::VectorXd cin = p.m_in ? p.ineq(x) : Eigen::VectorXd();
  Eigen::SparseMatrix<double> Jeq;
  Eigen::SparseMatrix<double, Eigen::RowMajor> Jin;
  if (p.m_eq) Jeq = dv.jeq(x);
  if (p.m_in) Jin = dv.jin(x);
  return kkt_from_parts(g, ceq, cin, p.m_eq ? &Jeq : nullptr, p.m_in ? &Jin : nullptr,
                        mult, x, p.lo, p.hi);
}

double check_gradients(const NlpProblem& problem, const Eigen::VectorXd& x,
                       double fd_step) {
  NlpProblem p = problem;
  p.finalize();
  double worst = 0.0;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
  };
  if (p.gradient) {
    Eigen::VectorXd ga = p.gradient(x);
    Eigen::VectorXd gf = fd_gradient(p.objective, x, fd_step);
    for (int j = 0; j < p.n; ++j) worst = std::max(worst, rel(ga(j), gf(j)));
  }
  if (p.eq_jac && p.m_eq) {
    Eigen::MatrixXd Ja = Eigen::MatrixXd(p.eq_jac(x));
    Eigen::MatrixXd Jf = fd_jacobian_dense(p.eq, x, p.m_eq, fd_step);
    for (int i = 0; i < Ja.rows(); ++i)
      for (int j = 0; j < Ja.cols(); ++j) worst = std::max(worst, rel(Ja(i, j), Jf(i, j)));
  }
  if (p.ineq_jac && p.m_in) {
    Eigen::MatrixXd Ja = Eigen::MatrixXd(p.ineq_jac(x));
    Eigen::MatrixXd Jf = fd_jacobian_dense(p.ineq, x, p.m_in, fd_step);
    for (int i = 0; i < Ja.rows(); ++i)
      for (int j = 0; j < Ja.cols(); ++j) worst = std::max(worst, rel(Ja(i, j), Jf(i, j)));
  }
  return worst;
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

NlpSolution NlpSolver::solve(const NlpProblem& problem,
                             const std::optional<Eigen::VectorXd>& x_init) {
  NlpProblem p = problem;
  p.finalize();
  const int n = p.n;
  const int m_eq = p.m_eq;
  const int m_in = p.m_in;

  // Hessian partition; a problem without one is handled densely.
  std::vector<NlpElement> elems = p.elements;
  Derivs dv = make_derivs(p, opts_.force_fd, opts_.fd_step);
  if (elems.empty()) {
    NlpElement whole;
    whole.idx.resize(n);
    for (int j = 0; j < n; ++j) whole.idx[j] = j;
    whole.grad = [&dv, &p](const Eigen::VectorXd& x, const Eigen::VectorXd& le,
                           const Eigen::VectorXd& li) {
      Eigen::VectorXd g = dv.grad(x);
      if (le.size() > 0 && p.m_eq) g += dv.jeq(x).transpose() * le;
      if (li.size() > 0 && p.m_in) g += dv.jin(x).transpose() * li;
      return g;
    };
    elems.push_back(std::move(whole));
  }

  if (shape_.n != n || shape_.m_in != m_in || shape_.elements != elems.size()) {
    elem_hess_.assign(elems.size(), Eigen::MatrixXd());
    elem_ready_.assign(elems.size(), 0);
    qp_ineq_active_.clear();
    qp_bound_state_.clear();
    shape_ = {n, m_in, elems.size()};
  }

  Eigen::VectorXd x = x_init ? *x_init : p.x0;
  if (x.size() != n) throw std::invalid_argument("NlpSolver: initial point size");
  x = x.cwiseMax(p.lo).cwiseMin(p.hi);

  Multipliers mult;
  mult.eq = Eigen::VectorXd::Zero(m_eq);
  mult.ineq = Eigen::VectorXd::Zero(m_in);
  mult.bound_lo = Eigen::VectorXd::Zero(n);
  mult.bound_hi = Eigen::VectorXd::Zero(n);

  // Element Hessians: exact finite-difference blocks at the start point,
  // clamped PSD. Elements whose share is identically zero here (constraint
  // curvature before any multiplier exists) start at ~0 and grow by BFGS.
  for (size_t e = 0; e < elems.size(); ++e) {
    if (elem_ready_[e]) continue;
    const auto& el = elems[e];
    const int m = static_cast<int>(el.idx.size());
    Eigen::MatrixXd B(m, m);
    Eigen::VectorXd xp = x;
    for (int a = 0; a < m; ++a) {
      const int j = el.idx[a];
      const double h = opts_.fd_step * std::max(1.0, std::abs(x(j)));
      xp(j) = x(j) + h;
      Eigen::VectorXd gp = el.grad(xp, mult.eq, mult.ineq);
      xp(j) = x(j) - h;
      Eigen::VectorXd gm = el.grad(xp, mult.eq, mult.ineq);
      xp(j) = x(j);
      B.col(a) = (gp - gm) / (2.0 * h);
    }
    elem_hess_[e] = clamp_psd(B, opts_.hess_floor);
    elem_ready_[e] = 1;
  }

  QpWorkingSet ws;
  if (static_cast<int>(qp_ineq_active_.size()) == m_in &&
      static_cast<int>(qp_bound_state_.size()) == n) {
    ws.ineq_active = qp_ineq_active_;
    ws.bound_state = qp_bound_state_;
  } else {
    ws.clear(m_in, n);
  }

  NlpSolution out;
  double nu = 1.0;
  int elastic_stall = 0;
  double prev_slack = kInfD;

  double f = 0.0;
  Eigen::VectorXd ceq, cin, g;
  Eigen::SparseMatrix<double> Jeq;
  Eigen::SparseMatrix<double, Eigen::RowMajor> Jin;

  auto evaluate_all = [&](const Eigen::VectorXd& at) {
    f = p.objective(at);
    ceq = m_eq ? p.eq(at) : Eigen::VectorXd();
    cin = m_in ? p.ineq(at) : Eigen::VectorXd();
    g = dv.grad(at);
    if (m_eq) Jeq = dv.jeq(at);
    if (m_in) Jin = dv.jin(at);
  };

  int iter = 0;
  for (; iter < opts_.max_iter; ++iter) {
    evaluate_all(x);
    out.kkt = kkt_from_parts(g, ceq, cin, m_eq ? &Jeq : nullptr, m_in ? &Jin : nullptr,
                             mult, x, p.lo, p.hi);
    if (out.kkt.within(opts_.tol)) {
      out.status = SolveStatus::optimal;
      break;
    }

    // QP subproblem around x.
    QpProblem qp;
    {
      std::vector<Eigen::Triplet<double>> ht;
      for (size_t e = 0; e < elems.size(); ++e) {
        const auto& idx = elems[e].idx;
        const Eigen::MatrixXd& B = elem_hess_[e];
        for (size_t a = 0; a < idx.size(); ++a)
          for (size_t b = 0; b < idx.size(); ++b)
            if (B(a, b) != 0.0) ht.emplace_back(idx[a], idx[b], B(a, b));
      }
      for (int j = 0; j < n; ++j) ht.emplace_back(j, j, opts_.hess_reg);
      qp.H.resize(n, n);
      qp.H.setFromTriplets(ht.begin(), ht.end());
    }
    qp.g = g;
    if (m_eq) {
      qp.Aeq = Jeq;
      qp.beq = -ceq;
    }
    if (m_in) {
      qp.Ain = Jin;
      qp.bin = -cin;
    }
    qp.lo = p.lo - x;
    qp.hi = p.hi - x;

    QpSolution qs = solve_qp(qp, &ws);
    out.qp_iterations += qs.iterations;

    Eigen::VectorXd d;
    Eigen::VectorXd slack;
    if (qs.status == QpStatus::optimal) {
      d = qs.x;
      elastic_stall = 0;
      prev_slack = kInfD;
    } else {
      if (m_in == 0) {
        // Nothing to relax; the linearized equalities are inconsistent.
        out.status = SolveStatus::infeasible;
        break;
      }
      qs = solve_elastic(qp, opts_.elastic_penalty);
      out.qp_iterations += qs.iterations;
      if (qs.status != QpStatus::optimal) {
        out.status = SolveStatus::infeasible;
        break;
      }
      d = qs.x.head(n);
      slack = qs.x.tail(m_in);
      const double s_inf = slack.size() ? slack.cwiseAbs().maxCoeff() : 0.0;
      if (s_inf > 1e-10) {
        // Linearization infeasible at this point. Step anyway; if the slack
        // refuses to shrink, call the problem infeasible and hand the
        // per-row slacks back as the diagnosis.
        if (s_inf >= 0.9 * prev_slack) {
          if (++elastic_stall >= 3) {
            out.status = SolveStatus::infeasible;
            out.infeasibility_slacks = slack;
            break;
          }
        } else {
          elastic_stall = 0;
        }
        prev_slack = s_inf;
      }
    }

    // Multipliers proposed by the QP; merit weight must dominate them.
    Multipliers next;
    next.eq = qs.lam_eq.size() == m_eq ? qs.lam_eq : Eigen::VectorXd::Zero(m_eq);
    next.ineq = Eigen::VectorXd::Zero(m_in);
    for (int i = 0; i < m_in && i < qs.lam_in.size(); ++i) next.ineq(i) = qs.lam_in(i);
    next.bound_lo = Eigen::VectorXd::Zero(n);
    next.bound_hi = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n && j < qs.lam_lo.size(); ++j) {
      next.bound_lo(j) = std::max(0.0, qs.lam_lo(j));
      next.bound_hi(j) = std::max(0.0, qs.lam_hi(j));
    }
    double mult_inf = 0.0;
    if (next.eq.size()) mult_inf = std::max(mult_inf, next.eq.cwiseAbs().maxCoeff());
    if (next.ineq.size()) mult_inf = std::max(mult_inf, next.ineq.maxCoeff());
    if (n) {
      mult_inf = std::max(mult_inf, next.bound_lo.maxCoeff());
      mult_inf = std::max(mult_inf, next.bound_hi.maxCoeff());
    }
    nu = std::max(nu, 1.1 * mult_inf);

    // Called when no progress is possible along d (zero step or failed line
    // search): adopt the QP multipliers, re-judge the KKT conditions, and
    // surface elastic slacks as an infeasibility diagnosis.
    auto finish_stuck = [&]() {
      mult = next;
      out.kkt = kkt_from_parts(g, ceq, cin, m_eq ? &Jeq : nullptr,
                               m_in ? &Jin : nullptr, mult, x, p.lo, p.hi);
      if (slack.size() > 0 && slack.cwiseAbs().maxCoeff() > 1e-8) {
        out.status = SolveStatus::infeasible;
        out.infeasibility_slacks = slack;
      } else {
        out.status =
            out.kkt.within(opts_.tol) ? SolveStatus::optimal : SolveStatus::max_iter;
      }
    };

    const double step_inf = d.size() ? d.cwiseAbs().maxCoeff() : 0.0;
    if (step_inf < 1e-14 * (1.0 + x.cwiseAbs().maxCoeff())) {
      finish_stuck();
      break;
    }

    const double viol0 = viol_l1(ceq, cin);
    const double phi0 = f + nu * viol0;
    double dderiv = g.dot(d) - nu * viol0;

    double alpha = 1.0;
    bool accepted = false;
    double f_trial = 0.0;
    Eigen::VectorXd x_trial;
    for (int ls = 0; ls < opts_.max_line_search; ++ls) {
      x_trial = x + alpha * d;
      f_trial = p.objective(x_trial);
      const Eigen::VectorXd ceq_t = m_eq ? p.eq(x_trial) : Eigen::VectorXd();
      const Eigen::VectorXd cin_t = m_in ? p.ineq(x_trial) : Eigen::VectorXd();
      const double phi = f_trial + nu * viol_l1(ceq_t, cin_t);
      const bool armijo = phi <= phi0 + opts_.c1 * alpha * std::min(dderiv, 0.0);
      const bool any_decrease = phi < phi0 - 1e-14 * (1.0 + std::abs(phi0));
      if (std::isfinite(phi) && (armijo || (dderiv >= 0.0 && any_decrease))) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      finish_stuck();
      break;
    }

    // Damped BFGS on each element, new multipliers on both gradient sides.
    for (size_t e = 0; e < elems.size(); ++e) {
      const auto& idx = elems[e].idx;
      const int m = static_cast<int>(idx.size());
      Eigen::VectorXd s(m);
      for (int a = 0; a < m; ++a) s(a) = x_trial(idx[a]) - x(idx[a]);
      const double s_norm = s.norm();
      if (s_norm < 1e-14 * (1.0 + x.cwiseAbs().maxCoeff())) continue;
      Eigen::VectorXd y =
          elems[e].grad(x_trial, next.eq, next.ineq) - elems[e].grad(x, next.eq, next.ineq);
      Eigen::MatrixXd& B = elem_hess_[e];
      Eigen::VectorXd Bs = B * s;
      const double sBs = s.dot(Bs);
      const double sy = s.dot(y);
      if (sBs <= 1e-14) {
        // Element still at (near) zero curvature; grow it rank-1 if the
        // secant pair is usable.
        if (sy > 1e-12 * s_norm * y.norm()) B += (y * y.transpose()) / sy;
        continue;
      }
      double theta = 1.0;
      if (sy < 0.2 * sBs) theta = 0.8 * sBs / (sBs - sy);
      Eigen::VectorXd yt = theta * y + (1.0 - theta) * Bs;
      const double syt = s.dot(yt);
      if (syt <= 1e-14) continue;
      B += (yt * yt.transpose()) / syt - (Bs * Bs.transpose()) / sBs;
    }

    x = x_trial;
    mult = next;
  }

  if (iter == opts_.max_iter) {
    evaluate_all(x);
    out.kkt = kkt_from_parts(g, ceq, cin, m_eq ? &Jeq : nullptr, m_in ? &Jin : nullptr,
                             mult, x, p.lo, p.hi);
    out.status = out.kkt.within(opts_.tol) ? SolveStatus::optimal : SolveStatus::max_iter;
  }

  out.x = x;
  out.objective = p.objective(x);
  out.multipliers = mult;
  out.iterations = iter;

  qp_ineq_active_ = ws.ineq_active;
  qp_bound_state_ = ws.bound_state;
  return out;
}

void NlpSolver::reset() {
  elem_hess_.clear();
  elem_ready_.clear();
  qp_ineq_active_.clear();
  qp_bound_state_.clear();
  shape_ = WarmShape{};
}

NlpSolution solve(const NlpProblem& p, const SqpOptions& opts) {
  NlpSolver s(opts);
  return s.solve(p);
}

}  // namespace tems
