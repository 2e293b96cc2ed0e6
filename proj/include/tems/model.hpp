#pragma once

// Discrete-time model description shared by every controller: dynamics
// x+ = f(x, u, d), box bounds on state and input, and a list of scalar
// inequality constraints g_i(x, u) <= 0. Dynamics and constraints are stored
// twice, once on plain doubles and once on AD scalars; set_dynamics and
// add_constraint take a single generic lambda and instantiate both, so user
// code never writes the pair by hand. Models supplied with only a double
// callback still work, derivatives then fall back to central differences.

#include <Eigen/Core>

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tems/dual.hpp"

namespace tems {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
  double lo = -kInf;
  double hi = kInf;

  bool contains(double v) const { return v >= lo && v <= hi; }
  bool is_subset_of(const Interval& o) const { return lo >= o.lo && hi <= o.hi; }
  double width() const { return hi - lo; }
};

struct ConstraintFn {
  std::string name;
  bool uses_input = false;  // input-dependent rows are skipped at tree leaves
  std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> fn;
  std::function<Dual(const DualVector&, const DualVector&)> fn_ad;  // may be empty
};

using DynamicsFn = std::function<Eigen::VectorXd(
    const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using DynamicsAdFn =
    std::function<DualVector(const DualVector&, const DualVector&, const DualVector&)>;

class ModelSpec {
 public:
  std::string name;
  int n_x = 0;
  int n_u = 0;
  int n_d = 0;
  double dt = 1.0;  // step length the map was discretized with (informational)

  std::vector<Interval> state_bounds;  // X, sized n_x once finalized
  std::vector<Interval> input_bounds;  // U, sized n_u, must be finite
  std::vector<ConstraintFn> constraints;

  // f from a lambda generic over the scalar type:
  //   set_dynamics([](const auto& x, const auto& u, const auto& d) { ... });
  // The lambda must return std::vector<S> with S deduced from its inputs.
  template <class F>
  void set_dynamics(F f) {
    dynamics_ = [f](const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                    const Eigen::VectorXd& d) {
      std::vector<double> xv(x.data(), x.data() + x.size());
      std::vector<double> uv(u.data(), u.data() + u.size());
      std::vector<double> dv(d.data(), d.data() + d.size());
      std::vector<double> out = f(xv, uv, dv);
      return Eigen::Map<Eigen::VectorXd>(out.data(), out.size()).eval();
    };
    dynamics_ad_ = [f](const DualVector& x, const DualVector& u, const DualVector& d) {
      return f(x, u, d);
    };
  }

  // Escape hatch for callers that only have a double-valued map. Jacobians
  // then come from finite differences.
  void set_dynamics_plain(DynamicsFn f) {
    dynamics_ = std::move(f);
    dynamics_ad_ = nullptr;
  }

  template <class F>
  void add_constraint(std::string cname, bool uses_input, F f) {
    ConstraintFn c;
    c.name = std::move(cname);
    c.uses_input = uses_input;
    c.fn = [f](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
      std::vector<double> xv(x.data(), x.data() + x.size());
      std::vector<double> uv(u.data(), u.data() + u.size());
      return f(xv, uv);
    };
    c.fn_ad = [f](const DualVector& x, const DualVector& u) { return f(x, u); };
    constraints.push_back(std::move(c));
  }

  bool has_ad() const { return static_cast<bool>(dynamics_ad_); }

  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& d) const;
  DualVector step_ad(const DualVector& x, const DualVector& u, const DualVector& d) const;

  // Jacobians of f at (x, u, d); any output pointer may be null. AD when
  // available, otherwise central differences.
  void jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                 const Eigen::VectorXd& d, Eigen::MatrixXd* Jx, Eigen::MatrixXd* Ju,
                 Eigen::MatrixXd* Jd) const;

  // Raw g(x, u) stacked in declaration order. For constraints with
  // uses_input = false the input is ignored and may be empty.
  Eigen::VectorXd eval_constraints(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u) const;

  void validate() const;  // dims set, bounds sized, U compact

 private:
  DynamicsFn dynamics_;
  DynamicsAdFn dynamics_ad_;
};

// g(x, u) + delta, the tightened residuals. delta may be empty (treated as
// zero) or sized to the constraint list.
Eigen::VectorXd evaluate_constraints(const ModelSpec& model, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& delta);

// Uncertainty description for d. Significant dimensions get branched in the
// scenario tree; the rest stay pinned at their nominal value. Additive
// dimensions model per-step disturbances, redrawn by the plant every step;
// non-additive ones are parameters fixed for a whole episode.
struct UncertaintyDecl {
  Eigen::VectorXd nominal;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<bool> significant;
  std::vector<bool> additive;

  int dim() const { return static_cast<int>(nominal.size()); }
  int significant_count() const;
  void validate() const;
};

struct BuiltinModel {
  ModelSpec model;
  UncertaintyDecl uncertainty;
  Eigen::VectorXd default_initial_state;
};

// Registered models: "scalar_linear", "benchmark_reactor",
// "benchmark_reactor_3d". Throws std::out_of_range on unknown names.
BuiltinModel make_builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();

// One RK4 step of a continuous-time ODE xdot = f(x, u, d). Generic over the
// scalar so models can wrap it inside set_dynamics.
template <class S, class Ode>
std::vector<S> rk4_step(const Ode& f, const std::vector<S>& x, const std::vector<S>& u,
                        const std::vector<S>& d, double dt) {
  const size_t n = x.size();
  auto axpy = [&](const std::vector<S>& a, const std::vector<S>& k, double h) {
    std::vector<S> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + h * k[i];
    return out;
  };
  std::vector<S> k1 = f(x, u, d);
  std::vector<S> k2 = f(axpy(x, k1, dt / 2), u, d);
  std::vector<S> k3 = f(axpy(x, k2, dt / 2), u, d);
  std::vector<S> k4 = f(axpy(x, k3, dt), u, d);
  std::vector<S> out(n);
  for (size_t i = 0; i < n; ++i)
    out[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

// Double-only convenience used by tests and one-off scripts.
Eigen::VectorXd integrate_rk4(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                        const Eigen::VectorXd&)>& ode,
    const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& d,
    double dt);

}  // namespace tems
