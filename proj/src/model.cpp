#include "tems/model.hpp"

#include <cmath>

namespace tems {

Eigen::VectorXd ModelSpec::step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                const Eigen::VectorXd& d) const {
  if (!dynamics_) throw std::logic_error("ModelSpec: dynamics not set");
  if (x.size() != n_x || u.size() != n_u || d.size() != n_d)
    throw std::invalid_argument("ModelSpec::step: dimension mismatch");
  return dynamics_(x, u, d);
}

DualVector ModelSpec::step_ad(const DualVector& x, const DualVector& u,
                              const DualVector& d) const {
  if (!dynamics_ad_) throw std::logic_error("ModelSpec: AD dynamics not available");
  return dynamics_ad_(x, u, d);
}

namespace {

// Central difference w.r.t. one argument of f(x, u, d).
void fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                 const Eigen::VectorXd& at, Eigen::MatrixXd* J) {
  const int n = static_cast<int>(at.size());
  Eigen::VectorXd p = at;
  for (int j = 0; j < n; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(at(j)));
    p(j) = at(j) + h;
    Eigen::VectorXd fp = f(p);
    p(j) = at(j) - h;
    Eigen::VectorXd fm = f(p);
    p(j) = at(j);
    if (j == 0) J->resize(fp.size(), n);
    J->col(j) = (fp - fm) / (2.0 * h);
  }
}

}  // namespace

void ModelSpec::jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& d, Eigen::MatrixXd* Jx,
                          Eigen::MatrixXd* Ju, Eigen::MatrixXd* Jd) const {
  if (has_ad()) {
    // One AD pass with a combined seed basis covers all three blocks.
    const int dim = n_x + n_u + n_d;
    DualVector xs = seed_vector(x, dim, 0);
    DualVector us = seed_vector(u, dim, n_x);
    DualVector ds = seed_vector(d, dim, n_x + n_u);
    DualVector out = dynamics_ad_(xs, us, ds);
    Eigen::MatrixXd J = jacobian_of(out, dim);
    if (Jx) *Jx = J.leftCols(n_x);
    if (Ju) *Ju = J.middleCols(n_x, n_u);
    if (Jd) *Jd = J.rightCols(n_d);
    return;
  }
  if (Jx) fd_jacobian([&](const Eigen::VectorXd& v) { return dynamics_(v, u, d); }, x, Jx);
  if (Ju) fd_jacobian([&](const Eigen::VectorXd& v) { return dynamics_(x, v, d); }, u, Ju);
  if (Jd) fd_jacobian([&](const Eigen::VectorXd& v) { return dynamics_(x, u, v); }, d, Jd);
}

Eigen::VectorXd ModelSpec::eval_constraints(const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& u) const {
  Eigen::VectorXd g(constraints.size());
  Eigen::VectorXd u_zero;
  for (size_t i = 0; i < constraints.size(); ++i) {
    const ConstraintFn& c = constraints[i];
    if (c.uses_input) {
      if (u.size() != n_u)
        throw std::invalid_argument("eval_constraints: constraint '" + c.name +
                                    "' needs an input");
      g(i) = c.fn(x, u);
    } else {
      // State-only rows must work without an input (terminal states, leaves).
      if (u_zero.size() == 0) u_zero = Eigen::VectorXd::Zero(n_u);
      g(i) = c.fn(x, u.size() == n_u ? u : u_zero);
    }
  }
  return g;
}

void ModelSpec::validate() const {
  if (n_x <= 0 || n_u < 0 || n_d < 0)
    throw std::invalid_argument("ModelSpec: bad dimensions");
  if (!dynamics_) throw std::invalid_argument("ModelSpec: dynamics not set");
  if (static_cast<int>(state_bounds.size()) != n_x)
    throw std::invalid_argument("ModelSpec: state_bounds must have n_x entries");
  if (static_cast<int>(input_bounds.size()) != n_u)
    throw std::invalid_argument("ModelSpec: input_bounds must have n_u entries");
  for (const Interval& b : input_bounds)
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || b.lo > b.hi)
      throw std::invalid_argument("ModelSpec: input bounds must be finite intervals");
  for (const Interval& b : state_bounds)
    if (b.lo > b.hi) throw std::invalid_argument("ModelSpec: empty state bound");
  for (const ConstraintFn& c : constraints)
    if (!c.fn) throw std::invalid_argument("ModelSpec: constraint without callback");
}

Eigen::VectorXd evaluate_constraints(const ModelSpec& model, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& delta) {
  Eigen::VectorXd g = model.eval_constraints(x, u);
  if (delta.size() == 0) return g;
  if (delta.size() != g.size())
    throw std::invalid_argument("evaluate_constraints: delta size mismatch");
  return g + delta;
}

int UncertaintyDecl::significant_count() const {
  int n = 0;
  for (bool s : significant) n += s ? 1 : 0;
  return n;
}

void UncertaintyDecl::validate() const {
  const int n = dim();
  if (lower.size() != n || upper.size() != n ||
      static_cast<int>(significant.size()) != n ||
      static_cast<int>(additive.size()) != n)
    throw std::invalid_argument("UncertaintyDecl: inconsistent sizes");
  for (int i = 0; i < n; ++i) {
    if (lower(i) > upper(i))
      throw std::invalid_argument("UncertaintyDecl: lower > upper");
    if (nominal(i) < lower(i) || nominal(i) > upper(i))
      throw std::invalid_argument("UncertaintyDecl: nominal outside bounds");
  }
}

namespace {

BuiltinModel make_scalar_linear() {
  BuiltinModel b;
  ModelSpec& m = b.model;
  m.name = "scalar_linear";
  m.n_x = 1;
  m.n_u = 1;
  m.n_d = 1;
  m.dt = 1.0;
  m.set_dynamics([](const auto& x, const auto& u, const auto& d) {
    using S = std::decay_t<decltype(x[0])>;
    std::vector<S> out(1);
    out[0] = x[0] + u[0] + d[0];
    return out;
  });
  m.state_bounds = {Interval{}};
  m.input_bounds = {Interval{-1.0, 1.0}};

  b.uncertainty.nominal = Eigen::VectorXd::Zero(1);
  b.uncertainty.lower = Eigen::VectorXd::Constant(1, -0.25);
  b.uncertainty.upper = Eigen::VectorXd::Constant(1, 0.25);
  b.uncertainty.significant = {true};
  b.uncertainty.additive = {true};

  b.default_initial_state = Eigen::VectorXd::Constant(1, 1.0);
  return b;
}

// Two-state isothermal reactor, A -> B with uncertain rate constant and an
// additive disturbance on the product concentration. Euler-discretized:
//   cA+ = cA + dt * (-k cA + u)
//   cB+ = cB + dt * (k cA) + w
// The path constraint cA <= 1.0 is what the tightening machinery protects.
BuiltinModel make_benchmark_reactor() {
  BuiltinModel b;
  ModelSpec& m = b.model;
  m.name = "benchmark_reactor";
  m.n_x = 2;
  m.n_u = 1;
  m.n_d = 2;
  m.dt = 0.1;
  const double dt = m.dt;
  m.set_dynamics([dt](const auto& x, const auto& u, const auto& d) {
    using S = std::decay_t<decltype(x[0])>;
    std::vector<S> out(2);
    out[0] = x[0] + dt * (-d[0] * x[0] + u[0]);
    out[1] = x[1] + dt * (d[0] * x[0]) + d[1];
    return out;
  });
  m.state_bounds = {Interval{}, Interval{}};
  m.input_bounds = {Interval{0.0, 2.0}};
  m.add_constraint("cA_max", false, [](const auto& x, const auto&) {
    using S = std::decay_t<decltype(x[0])>;
    return S(x[0] - 1.0);
  });

  b.uncertainty.nominal = (Eigen::VectorXd(2) << 1.0, 0.0).finished();
  b.uncertainty.lower = (Eigen::VectorXd(2) << 0.5, -0.01).finished();
  b.uncertainty.upper = (Eigen::VectorXd(2) << 1.5, 0.01).finished();
  b.uncertainty.significant = {true, false};
  b.uncertainty.additive = {false, true};

  b.default_initial_state = Eigen::VectorXd::Zero(2);
  return b;
}

// Same reactor with the disturbance split per state, so three uncertain
// dimensions total. Used by the scheme comparison where the plain
// multi-stage baseline branches on everything (27 scenarios) while the
// hierarchical controller keeps only the rate constant in its tree.
BuiltinModel make_benchmark_reactor_3d() {
  BuiltinModel b;
  ModelSpec& m = b.model;
  m.name = "benchmark_reactor_3d";
  m.n_x = 2;
  m.n_u = 1;
  m.n_d = 3;
  m.dt = 0.1;
  const double dt = m.dt;
  m.set_dynamics([dt](const auto& x, const auto& u, const auto& d) {
    using S = std::decay_t<decltype(x[0])>;
    std::vector<S> out(2);
    out[0] = x[0] + dt * (-d[0] * x[0] + u[0]) + d[1];
    out[1] = x[1] + dt * (d[0] * x[0]) + d[2];
    return out;
  });
  m.state_bounds = {Interval{}, Interval{}};
  m.input_bounds = {Interval{0.0, 2.0}};
  m.add_constraint("cA_max", false, [](const auto& x, const auto&) {
    using S = std::decay_t<decltype(x[0])>;
    return S(x[0] - 1.0);
  });

  b.uncertainty.nominal = (Eigen::VectorXd(3) << 1.0, 0.0, 0.0).finished();
  b.uncertainty.lower = (Eigen::VectorXd(3) << 0.5, -0.005, -0.01).finished();
  b.uncertainty.upper = (Eigen::VectorXd(3) << 1.5, 0.005, 0.01).finished();
  b.uncertainty.significant = {true, false, false};
  b.uncertainty.additive = {false, true, true};

  b.default_initial_state = Eigen::VectorXd::Zero(2);
  return b;
}

}  // namespace

BuiltinModel make_builtin_model(const std::string& name) {
  if (name == "scalar_linear") return make_scalar_linear();
  if (name == "benchmark_reactor") return make_benchmark_reactor();
  if (name == "benchmark_reactor_3d") return make_benchmark_reactor_3d();
  throw std::out_of_range("unknown builtin model: " + name);
}

std::vector<std::string> builtin_model_names() {
  return {"benchmark_reactor", "benchmark_reactor_3d", "scalar_linear"};
}

Eigen::VectorXd integrate_rk4(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                        const Eigen::VectorXd&)>& ode,
    const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& d,
    double dt) {
  auto f = [&](const std::vector<double>& xv, const std::vector<double>&,
               const std::vector<double>&) {
    Eigen::Map<const Eigen::VectorXd> xm(xv.data(), xv.size());
    Eigen::VectorXd r = ode(xm, u, d);
    return std::vector<double>(r.data(), r.data() + r.size());
  };
  std::vector<double> xv(x.data(), x.data() + x.size());
  std::vector<double> uv, dv;
  std::vector<double> out = rk4_step(f, xv, uv, dv, dt);
  return Eigen::Map<Eigen::VectorXd>(out.data(), out.size()).eval();
}

}  // namespace tems
