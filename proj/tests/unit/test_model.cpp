#include <doctest.h>

#include <cmath>

#include "tems/model.hpp"

using namespace tems;

TEST_CASE("benchmark reactor step matches hand computation") {
  BuiltinModel b = make_builtin_model("benchmark_reactor");
  b.model.validate();
  CHECK(b.model.n_x == 2);
  CHECK(b.model.n_u == 1);
  CHECK(b.model.n_d == 2);

  Eigen::VectorXd x(2), u(1), d(2);
  x << 0.5, 0.2;
  u << 1.0;
  d << 1.2, 0.005;
  Eigen::VectorXd xn = b.model.step(x, u, d);
  // cA+ = 0.5 + 0.1*(-1.2*0.5 + 1.0) = 0.54
  // cB+ = 0.2 + 0.1*(1.2*0.5) + 0.005 = 0.265
  CHECK(xn(0) == doctest::Approx(0.54).epsilon(1e-12));
  CHECK(xn(1) == doctest::Approx(0.265).epsilon(1e-12));
}

TEST_CASE("model jacobians agree between AD and finite differences") {
  for (const std::string& name : builtin_model_names()) {
    BuiltinModel b = make_builtin_model(name);
    const ModelSpec& m = b.model;
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(m.n_x, 0.3, 0.8);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(m.n_u, 0.7);
    Eigen::VectorXd d = b.uncertainty.nominal;

    Eigen::MatrixXd Jx, Ju, Jd;
    m.jacobians(x, u, d, &Jx, &Ju, &Jd);

    // FD reference straight off the double-valued step.
    auto fd_col = [&](auto&& eval, Eigen::VectorXd v, int j) {
      const double h = 1e-6 * std::max(1.0, std::abs(v(j)));
      Eigen::VectorXd p = v, q = v;
      p(j) += h;
      q(j) -= h;
      return ((eval(p) - eval(q)) / (2.0 * h)).eval();
    };
    for (int j = 0; j < m.n_x; ++j) {
      Eigen::VectorXd c =
          fd_col([&](const Eigen::VectorXd& v) { return m.step(v, u, d); }, x, j);
      CHECK((c - Jx.col(j)).cwiseAbs().maxCoeff() < 1e-6);
    }
    for (int j = 0; j < m.n_u; ++j) {
      Eigen::VectorXd c =
          fd_col([&](const Eigen::VectorXd& v) { return m.step(x, v, d); }, u, j);
      CHECK((c - Ju.col(j)).cwiseAbs().maxCoeff() < 1e-6);
    }
    for (int j = 0; j < m.n_d; ++j) {
      Eigen::VectorXd c =
          fd_col([&](const Eigen::VectorXd& v) { return m.step(x, u, v); }, d, j);
      CHECK((c - Jd.col(j)).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("constraint evaluation and tightening") {
  BuiltinModel b = make_builtin_model("benchmark_reactor");
  Eigen::VectorXd x(2), u(1);
  x << 1.2, 0.0;
  u << 0.5;
  Eigen::VectorXd g = b.model.eval_constraints(x, u);
  REQUIRE(g.size() == 1);
  CHECK(g(0) == doctest::Approx(0.2));

  Eigen::VectorXd delta(1);
  delta << 0.05;
  Eigen::VectorXd gt = evaluate_constraints(b.model, x, u, delta);
  CHECK(gt(0) == doctest::Approx(0.25));

  // State-only constraints evaluate without an input.
  Eigen::VectorXd g2 = b.model.eval_constraints(x, Eigen::VectorXd());
  CHECK(g2(0) == doctest::Approx(0.2));
}

TEST_CASE("rk4 integrates exponential decay to fifth order") {
  auto ode = [](const Eigen::VectorXd& x, const Eigen::VectorXd&,
                const Eigen::VectorXd&) { return (-x).eval(); };
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 1.0);
  Eigen::VectorXd none;

  const double dt = 0.1;
  Eigen::VectorXd x1 = integrate_rk4(ode, x0, none, none, dt);
  const double exact = std::exp(-dt);
  const double err_full = std::abs(x1(0) - exact);
  CHECK(err_full < 1e-7);

  // Halving the step should shrink the one-step error by about 2^5.
  Eigen::VectorXd xh = integrate_rk4(ode, x0, none, none, dt / 2);
  const double err_half = std::abs(xh(0) - std::exp(-dt / 2));
  CHECK(err_full / err_half > 20.0);

  // A model wrapping rk4_step in its dynamics keeps the AD path intact.
  ModelSpec m;
  m.name = "decay";
  m.n_x = 1;
  m.n_u = 0;
  m.n_d = 0;
  m.set_dynamics([dt](const auto& x, const auto& u, const auto& d) {
    using S = std::decay_t<decltype(x[0])>;
    auto f = [](const std::vector<S>& xs, const std::vector<S>&,
                const std::vector<S>&) {
      std::vector<S> r(1);
      r[0] = -1.0 * xs[0];
      return r;
    };
    return rk4_step(f, x, u, d, dt);
  });
  Eigen::MatrixXd Jx;
  m.jacobians(x0, Eigen::VectorXd(), Eigen::VectorXd(), &Jx, nullptr, nullptr);
  CHECK(Jx(0, 0) == doctest::Approx(x1(0)).epsilon(1e-9));  // linear system: J = Phi
}

TEST_CASE("uncertainty declaration validation") {
  BuiltinModel b = make_builtin_model("benchmark_reactor");
  CHECK(b.uncertainty.significant_count() == 1);
  b.uncertainty.validate();

  UncertaintyDecl bad = b.uncertainty;
  bad.nominal(0) = 99.0;  // outside [lower, upper]
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  UncertaintyDecl bad2 = b.uncertainty;
  bad2.significant.pop_back();
  CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
}

TEST_CASE("3d reactor splits the disturbance per state") {
  BuiltinModel b = make_builtin_model("benchmark_reactor_3d");
  CHECK(b.model.n_d == 3);
  CHECK(b.uncertainty.significant_count() == 1);
  Eigen::VectorXd x(2), u(1), d(3);
  x << 0.5, 0.2;
  u << 1.0;
  d << 1.2, 0.002, 0.005;
  Eigen::VectorXd xn = b.model.step(x, u, d);
  CHECK(xn(0) == doctest::Approx(0.542).epsilon(1e-12));
  CHECK(xn(1) == doctest::Approx(0.265).epsilon(1e-12));
}
