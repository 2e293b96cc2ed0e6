#include <doctest.h>

#include <cmath>

#include "tems/nlp.hpp"
#include "tems/rng.hpp"
#include "tems/transcription.hpp"

using namespace tems;

namespace {

RealizationSet scalar_reals(std::initializer_list<double> vals) {
  RealizationSet r;
  for (double v : vals) r.vectors.push_back(Eigen::VectorXd::Constant(1, v));
  r.nominal_index = 0;
  return r;
}

// Scalar integrator OCP on a given tree with cost z^2 + v^2 per stage.
TreeOcp scalar_ocp(std::shared_ptr<const ScenarioTree> tree) {
  BuiltinModel b = make_builtin_model("scalar_linear");
  TreeOcp ocp;
  ocp.tree = std::move(tree);
  ocp.model = std::make_shared<ModelSpec>(b.model);
  ocp.state_box = b.model.state_bounds;
  ocp.input_box = b.model.input_bounds;
  ocp.initial_state = b.default_initial_state;
  ocp.set_stage_cost([](int, const auto& z, const auto& v, const auto&) {
    return z[0] * z[0] + v[0] * v[0];
  });
  return ocp;
}

}  // namespace

TEST_CASE("transcription layout for the s=3, N=2 scalar example") {
  auto tree = std::make_shared<ScenarioTree>(
      ScenarioTree::build(scalar_reals({0.0, -0.25, 0.25}), 2, 1));
  TreeOcp ocp = scalar_ocp(tree);
  TranscribedOcp t = transcribe(ocp);

  // 7 state nodes, 4 of them with inputs: 11 variables, 7 dynamics rows.
  CHECK(t.layout.n_vars == 11);
  CHECK(t.problem.n == 11);
  CHECK(t.problem.m_eq == 7);
  CHECK(t.problem.m_in == 0);

  // Interleaved blocks in BFS node order.
  CHECK(t.layout.state_off == std::vector<int>({0, 2, 4, 6, 8, 9, 10}));
  CHECK(t.layout.input_off == std::vector<int>({1, 3, 5, 7, -1, -1, -1}));
  CHECK(t.layout.has_input(0));
  CHECK(!t.layout.has_input(4));

  CHECK(t.eq_row_node == std::vector<int>({0, 1, 2, 3, 4, 5, 6}));
  CHECK(t.ineq_row_node.empty());

  // Input box lands on the input variables, states stay free.
  for (int j = 0; j < 4; ++j) {
    CHECK(t.problem.lo(t.layout.input_var(j, 0)) == -1.0);
    CHECK(t.problem.hi(t.layout.input_var(j, 0)) == 1.0);
  }
  CHECK(t.problem.lo(t.layout.state_var(0, 0)) == -kInf);
  CHECK(t.problem.hi(t.layout.state_var(6, 0)) == kInf);

  // Root equality pins the initial state at the default guess.
  Eigen::VectorXd g0 = default_guess(ocp, t.layout);
  Eigen::VectorXd r = t.problem.eq(g0);
  CHECK(r.head(1).norm() == 0.0);
  for (int j = 0; j < 7; ++j) CHECK(g0(t.layout.state_off[j]) == 1.0);
}

TEST_CASE("deterministic chain reproduces the hand Riccati solution") {
  // x+ = x + u, x0 = 1, two stages of z^2 + v^2 and terminal z^2. The
  // backward recursion gives v0 = -0.6, z1 = 0.4, v1 = -0.2, z2 = 0.2.
  auto tree =
      std::make_shared<ScenarioTree>(ScenarioTree::build(scalar_reals({0.0}), 2, 1));
  TreeOcp ocp = scalar_ocp(tree);
  ocp.set_terminal_cost([](int, const auto& z) { return z[0] * z[0]; });
  TranscribedOcp t = transcribe(ocp);

  NlpSolver solver;
  NlpSolution sol = solver.solve(t.problem);
  REQUIRE(sol.status == SolveStatus::optimal);

  TreeTrajectory traj = extract_trajectory(t.layout, tree, sol.x);
  CHECK(traj.states[0](0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(traj.inputs[0](0) == doctest::Approx(-0.6).epsilon(1e-6));
  CHECK(traj.states[1](0) == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(traj.inputs[1](0) == doctest::Approx(-0.2).epsilon(1e-6));
  CHECK(traj.states[2](0) == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("branching solve respects tree dynamics and shares the root input") {
  auto tree = std::make_shared<ScenarioTree>(
      ScenarioTree::build(scalar_reals({0.0, -0.25, 0.25}), 2, 1));
  TreeOcp ocp = scalar_ocp(tree);
  TranscribedOcp t = transcribe(ocp);

  NlpSolver solver;
  NlpSolution sol = solver.solve(t.problem);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.objective < t.problem.objective(default_guess(ocp, t.layout)));

  TreeTrajectory traj = extract_trajectory(t.layout, tree, sol.x);
  const double u0 = traj.root_input()(0);
  for (int s = 0; s < tree->num_scenarios(); ++s) {
    CHECK(traj.input_at(s, 0)(0) == u0);  // same variable, not just close
    for (int k = 0; k < 2; ++k) {
      const int child = tree->node_at_stage(s, k + 1);
      const double pred = traj.state_at(s, k)(0) + traj.input_at(s, k)(0) +
                          tree->edge_value(child)(0);
      CHECK(traj.state_at(s, k + 1)(0) == doctest::Approx(pred).epsilon(1e-8));
    }
  }

  // Node coordinates round-trip through the flat vector bitwise.
  Eigen::VectorXd flat = flatten_trajectory(t.layout, traj);
  CHECK(flat == sol.x);
}

TEST_CASE("transcribed reactor derivatives match finite differences") {
  BuiltinModel b = make_builtin_model("benchmark_reactor");
  auto tree = std::make_shared<ScenarioTree>(
      ScenarioTree::build(sample_box_vertices(b.uncertainty), 2, 1));

  TreeOcp ocp;
  ocp.tree = tree;
  ocp.model = std::make_shared<ModelSpec>(b.model);
  ocp.state_box = b.model.state_bounds;
  ocp.input_box = b.model.input_bounds;
  ocp.initial_state = b.default_initial_state;
  ocp.g_delta = Eigen::VectorXd::Constant(1, 0.01);
  ocp.set_stage_cost([](int, const auto& z, const auto& v, const auto& vp) {
    using S = std::decay_t<decltype(z[0])>;
    S c = 4.0 * square(z[1] - 0.6) + 0.125 * square(v[0]);
    if (!vp.empty()) c = c + 0.25 * square(v[0] - vp[0]);
    return c;
  });
  ocp.set_terminal_cost([](int, const auto& z) { return 0.5 * square(z[0]); });

  TranscribedOcp t = transcribe(ocp);
  CHECK(t.problem.m_in == 7);  // cA bound at every node, no input rows

  DetRng rng(71);
  Eigen::VectorXd x = default_guess(ocp, t.layout);
  for (int i = 0; i < x.size(); ++i) x(i) += 0.3 * (rng.uniform() - 0.5);
  CHECK(check_gradients(t.problem, x) < 1e-6);

  // Same check with a previous input installed at the root.
  ocp.prev_input = Eigen::VectorXd::Constant(1, 0.4);
  TranscribedOcp t2 = transcribe(ocp);
  CHECK(check_gradients(t2.problem, x) < 1e-6);
  CHECK(t2.problem.objective(x) > t.problem.objective(x));  // move term kicks in
}

TEST_CASE("constraint rows honor deltas, leaf input skip, and include_g") {
  auto model = std::make_shared<ModelSpec>();
  model->name = "toy";
  model->n_x = 2;
  model->n_u = 1;
  model->n_d = 1;
  model->set_dynamics([](const auto& x, const auto& u, const auto& d) {
    using S = std::decay_t<decltype(x[0])>;
    std::vector<S> out(2);
    out[0] = x[0] + u[0] + d[0];
    out[1] = x[1];
    return out;
  });
  model->state_bounds = {Interval{}, Interval{}};
  model->input_bounds = {Interval{-2.0, 2.0}};
  model->add_constraint("x0_cap", false, [](const auto& x, const auto&) {
    return x[0] - 1.0;
  });
  model->add_constraint("u_below_x1", true, [](const auto& x, const auto& u) {
    return u[0] - x[1];
  });

  auto tree = std::make_shared<ScenarioTree>(
      ScenarioTree::build(scalar_reals({0.0, 0.1}), 2, 1));

  TreeOcp ocp;
  ocp.tree = tree;
  ocp.model = model;
  ocp.state_box = model->state_bounds;
  ocp.input_box = model->input_bounds;
  ocp.initial_state = (Eigen::VectorXd(2) << 0.5, 0.3).finished();
  ocp.g_delta = (Eigen::VectorXd(2) << 0.1, 0.2).finished();
  ocp.set_stage_cost([](int, const auto& z, const auto& v, const auto&) {
    return square(z[0]) + square(v[0]);
  });

  TranscribedOcp t = transcribe(ocp);
  // 5 nodes (1 + 2 + 2), both rows at the 3 non-leaves, state row only at
  // the 2 leaves.
  REQUIRE(t.problem.m_in == 8);
  CHECK(t.ineq_row_node == std::vector<int>({0, 0, 1, 1, 2, 2, 3, 4}));
  CHECK(t.ineq_row_constraint == std::vector<int>({0, 1, 0, 1, 0, 1, 0, 0}));

  Eigen::VectorXd g0 = default_guess(ocp, t.layout);
  Eigen::VectorXd cin = t.problem.ineq(g0);
  for (int q = 0; q < 8; ++q) {
    const double expect = t.ineq_row_constraint[q] == 0 ? 0.5 - 1.0 + 0.1
                                                        : 0.0 - 0.3 + 0.2;
    CHECK(cin(q) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(check_gradients(t.problem, g0) < 1e-6);

  ocp.include_g = false;
  TranscribedOcp bare = transcribe(ocp);
  CHECK(bare.problem.m_in == 0);
  CHECK(bare.ineq_row_node.empty());
}

TEST_CASE("warm shift grafts the realized branch onto the new root") {
  auto tree = std::make_shared<ScenarioTree>(
      ScenarioTree::build(scalar_reals({0.0, -0.25, 0.25}), 2, 1));
  TreeOcp ocp = scalar_ocp(tree);
  TranscribedOcp t = transcribe(ocp);

  Eigen::VectorXd prev(11);
  for (int i = 0; i < 11; ++i) prev(i) = 0.01 * (i + 1);
  const Eigen::VectorXd new_root = Eigen::VectorXd::Constant(1, 0.77);
  Eigen::VectorXd out = shift_tree_guess(t.layout, *tree, prev, 2, new_root);

  const VariableLayout& l = t.layout;
  // Realized branch is node 3 (realization index 2); its tail leaf is 6.
  CHECK(out(l.state_var(0, 0)) == 0.77);
  CHECK(out(l.input_var(0, 0)) == prev(l.input_var(3, 0)));
  for (int j = 1; j <= 3; ++j) {
    CHECK(out(l.state_var(j, 0)) == prev(l.state_var(6, 0)));
    // Old path ran out of inputs at the leaf; last known one is repeated.
    CHECK(out(l.input_var(j, 0)) == prev(l.input_var(3, 0)));
  }
  for (int j = 4; j <= 6; ++j)
    CHECK(out(l.state_var(j, 0)) == prev(l.state_var(6, 0)));
}

TEST_CASE("tree OCP validation rejects malformed setups") {
  auto tree = std::make_shared<ScenarioTree>(
      ScenarioTree::build(scalar_reals({0.0, -0.25, 0.25}), 2, 1));
  TreeOcp ocp = scalar_ocp(tree);
  CHECK_NOTHROW(ocp.validate());

  TreeOcp no_cost = ocp;
  no_cost.stage_cost = nullptr;
  CHECK_THROWS_AS(no_cost.validate(), std::invalid_argument);

  TreeOcp bad_delta = ocp;
  bad_delta.g_delta = Eigen::VectorXd::Zero(3);  // model has no constraints
  CHECK_THROWS_AS(bad_delta.validate(), std::invalid_argument);

  TreeOcp open_input = ocp;
  open_input.input_box = {Interval{}};
  CHECK_THROWS_AS(open_input.validate(), std::invalid_argument);

  TreeOcp bad_x0 = ocp;
  bad_x0.initial_state = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(bad_x0.validate(), std::invalid_argument);
}
