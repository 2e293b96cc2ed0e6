#include "tems/estimator.hpp"

#include <stdexcept>

#include "tems/nlp.hpp"

namespace tems {

namespace {

double penalty_term(const Eigen::VectorXd& d, const std::optional<Eigen::VectorXd>& prev,
                    const Eigen::MatrixXd& W) {
  if (!prev || W.size() == 0) return 0.0;
  const Eigen::VectorXd e = d - *prev;
  return e.dot(W * e);
}

}  // namespace

EstimateResult estimate_finite(const ModelSpec& model, const Eigen::VectorXd& x_t,
                               const Eigen::VectorXd& u_t, const Eigen::VectorXd& x_next,
                               const RealizationSet& candidates,
                               const std::optional<Eigen::VectorXd>& prev,
                               const Eigen::MatrixXd& W) {
  if (candidates.size() == 0)
    throw std::invalid_argument("estimate_finite: no candidates");

  EstimateResult best;
  bool best_is_prev = false;
  for (int i = 0; i < candidates.size(); ++i) {
    const Eigen::VectorXd& d = candidates.vectors[i];
    const double resid = (x_next - model.step(x_t, u_t, d)).squaredNorm();
    const double total = resid + penalty_term(d, prev, W);
    const bool is_prev = prev && prev->size() == d.size() && (*prev == d);
    const bool take = best.candidate_index < 0 || total < best.penalized_objective ||
                      (total == best.penalized_objective && is_prev && !best_is_prev);
    if (take) {
      best.d_bar = d;
      best.residual = resid;
      best.penalized_objective = total;
      best.candidate_index = i;
      best_is_prev = is_prev;
    }
  }
  best.source = EstimateSource::finite;
  return best;
}

EstimateResult estimate_box(const ModelSpec& model, const Eigen::VectorXd& x_t,
                            const Eigen::VectorXd& u_t, const Eigen::VectorXd& x_next,
                            const UncertaintyDecl& box, const Eigen::VectorXd& prev,
                            const Eigen::MatrixXd& W) {
  box.validate();
  if (prev.size() != box.dim())
    throw std::invalid_argument("estimate_box: prev size mismatch");

  std::vector<int> free_dims;
  for (int i = 0; i < box.dim(); ++i)
    if (box.significant[i]) free_dims.push_back(i);

  auto assemble = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd d = box.nominal;
    for (size_t i = 0; i < free_dims.size(); ++i) d(free_dims[i]) = v(i);
    return d;
  };
  auto finish = [&](const Eigen::VectorXd& d, EstimateSource src, int index) {
    EstimateResult r;
    r.d_bar = d;
    r.residual = (x_next - model.step(x_t, u_t, d)).squaredNorm();
    r.penalized_objective = r.residual + penalty_term(d, prev, W);
    r.source = src;
    r.candidate_index = index;
    return r;
  };

  if (free_dims.empty()) return finish(box.nominal, EstimateSource::box, -1);
  const int n = static_cast<int>(free_dims.size());

  NlpProblem p;
  p.n = n;
  p.lo.resize(n);
  p.hi.resize(n);
  for (int i = 0; i < n; ++i) {
    p.lo(i) = box.lower(free_dims[i]);
    p.hi(i) = box.upper(free_dims[i]);
  }
  p.objective = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd d = assemble(v);
    const Eigen::VectorXd r = x_next - model.step(x_t, u_t, d);
    return r.squaredNorm() + penalty_term(d, prev, W);
  };
  p.gradient = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd d = assemble(v);
    const Eigen::VectorXd r = x_next - model.step(x_t, u_t, d);
    Eigen::MatrixXd Jd;
    model.jacobians(x_t, u_t, d, nullptr, nullptr, &Jd);
    Eigen::VectorXd full = -2.0 * (Jd.transpose() * r);
    if (W.size()) full += 2.0 * (W * (d - prev));
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) g(i) = full(free_dims[i]);
    return g;
  };

  SqpOptions opts;
  opts.tol = 1e-10;
  NlpSolver solver(opts);

  Eigen::VectorXd start_prev(n), start_center(n);
  for (int i = 0; i < n; ++i) {
    start_prev(i) = prev(free_dims[i]);
    start_center(i) = 0.5 * (box.lower(free_dims[i]) + box.upper(free_dims[i]));
  }

  // Keep the best iterate by true objective even when the solver reports
  // max_iter: with a large W the KKT residual floor sits well above tol, but
  // the final iterate is still essentially the minimizer.
  std::optional<Eigen::VectorXd> best;
  double best_obj = 0.0;
  for (const Eigen::VectorXd& start : {start_prev, start_center}) {
    solver.reset();
    NlpSolution sol = solver.solve(p, start);
    if (!sol.x.allFinite()) continue;
    const Eigen::VectorXd v = sol.x.cwiseMax(p.lo).cwiseMin(p.hi);
    const double obj = p.objective(v);
    if (!best || obj < best_obj) {
      best = v;
      best_obj = obj;
    }
  }

  // Vertex + nominal enumeration as a safety net; whichever wins is returned.
  EstimateResult fallback = estimate_finite(model, x_t, u_t, x_next,
                                            sample_box_vertices(box), prev, W);
  if (best && best_obj <= fallback.penalized_objective)
    return finish(assemble(*best), EstimateSource::box, -1);
  fallback.source = EstimateSource::finite;
  return fallback;
}

Eigen::VectorXd propagate_primary(const ModelSpec& model, const Eigen::VectorXd& z_t,
                                  const Eigen::VectorXd& v_t,
                                  const Eigen::VectorXd& d_bar) {
  Eigen::VectorXd z = model.step(z_t, v_t, d_bar);
  if (!z.allFinite())
    throw std::runtime_error("propagate_primary: non-finite primary state");
  return z;
}

}  // namespace tems
