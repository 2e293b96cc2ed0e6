#pragma once

// Direct transcription of an optimal control problem on a scenario tree into
// an NlpProblem. One state block per node, one input block per non-leaf
// node; non-anticipativity is structural (scenarios sharing a node share its
// input variable). Equality rows pin the root state and enforce the
// dynamics along every edge; inequality rows carry the model constraints
// g_i + delta_i <= 0 at every node (input-dependent rows skipped at
// leaves); the state and input boxes become variable bounds.
//
// The objective is sum over non-leaf nodes of weight * stage cost plus the
// plain sum of the terminal cost over leaves. Stage costs see the parent
// input so move penalties can form v - v_parent; at the root that slot is
// the previous applied input when the caller has one, otherwise an empty
// vector, and cost callbacks are expected to skip their move term then.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "tems/dual.hpp"
#include "tems/model.hpp"
#include "tems/nlp.hpp"
#include "tems/scenario_tree.hpp"

namespace tems {

struct TreeOcp {
  std::shared_ptr<const ScenarioTree> tree;
  std::shared_ptr<const ModelSpec> model;

  // Stage cost per non-leaf node (weight applied outside). The node id lets
  // tracking objectives look up per-node references.
  std::function<double(int, const Eigen::VectorXd&, const Eigen::VectorXd&,
                       const Eigen::VectorXd&)>
      stage_cost;
  std::function<Dual(int, const DualVector&, const DualVector&, const DualVector&)>
      stage_cost_ad;

  // Terminal cost per leaf node; both may stay null for a zero terminal.
  std::function<double(int, const Eigen::VectorXd&)> terminal_cost;
  std::function<Dual(int, const DualVector&)> terminal_cost_ad;

  std::vector<Interval> state_box;     // per state dim
  std::vector<Interval> input_box;     // per input dim
  std::vector<Interval> terminal_box;  // empty: same as state_box
  Eigen::VectorXd g_delta;             // per model constraint; empty: zeros
  bool include_g = true;               // tracking problems drop the g rows

  Eigen::VectorXd initial_state;
  std::optional<Eigen::VectorXd> prev_input;

  // Install both scalar instantiations of a generic cost lambda
  //   f(int node, const auto& z, const auto& v, const auto& v_prev).
  template <class F>
  void set_stage_cost(F f) {
    stage_cost = [f](int j, const Eigen::VectorXd& z, const Eigen::VectorXd& v,
                     const Eigen::VectorXd& vp) {
      std::vector<double> zs(z.data(), z.data() + z.size());
      std::vector<double> vs(v.data(), v.data() + v.size());
      std::vector<double> ps(vp.data(), vp.data() + vp.size());
      return f(j, zs, vs, ps);
    };
    stage_cost_ad = [f](int j, const DualVector& z, const DualVector& v,
                        const DualVector& vp) { return f(j, z, v, vp); };
  }

  template <class F>
  void set_terminal_cost(F f) {
    terminal_cost = [f](int j, const Eigen::VectorXd& z) {
      std::vector<double> zs(z.data(), z.data() + z.size());
      return f(j, zs);
    };
    terminal_cost_ad = [f](int j, const DualVector& z) { return f(j, z); };
  }

  void validate() const;
};

struct VariableLayout {
  int n_vars = 0;
  int n_x = 0;
  int n_u = 0;
  std::vector<int> state_off;  // per node id
  std::vector<int> input_off;  // per node id, -1 at leaves

  int state_var(int node, int i) const { return state_off[node] + i; }
  int input_var(int node, int i) const { return input_off[node] + i; }
  bool has_input(int node) const { return input_off[node] >= 0; }
};

// Solution of a tree OCP in node coordinates.
struct TreeTrajectory {
  std::shared_ptr<const ScenarioTree> tree;
  std::vector<Eigen::VectorXd> states;  // per node
  std::vector<Eigen::VectorXd> inputs;  // per node, empty at leaves
  double objective = 0.0;
  SolveStatus status = SolveStatus::max_iter;
  double kkt_residual = 0.0;
  int iterations = 0;

  const Eigen::VectorXd& root_input() const { return inputs.at(0); }
  const Eigen::VectorXd& state_at(int scenario, int stage) const {
    return states.at(tree->node_at_stage(scenario, stage));
  }
  const Eigen::VectorXd& input_at(int scenario, int stage) const {
    return inputs.at(tree->node_at_stage(scenario, stage));
  }
};

struct TranscribedOcp {
  NlpProblem problem;
  VariableLayout layout;
  std::vector<int> eq_row_node;   // owning node of each equality row block
  std::vector<int> ineq_row_node; // node of each g row
  std::vector<int> ineq_row_constraint;
};

TranscribedOcp transcribe(const TreeOcp& ocp);

// Cold-start guess: every state at the initial state, every input at the
// middle of its box (or zero clamped in when a side is infinite).
Eigen::VectorXd default_guess(const TreeOcp& ocp, const VariableLayout& layout);

TreeTrajectory extract_trajectory(const VariableLayout& layout,
                                  const std::shared_ptr<const ScenarioTree>& tree,
                                  const Eigen::VectorXd& x);

Eigen::VectorXd flatten_trajectory(const VariableLayout& layout,
                                   const TreeTrajectory& traj);

// Receding-horizon warm start: graft the subtree under the realized branch
// onto the new root, repeating the deepest values for the fresh last stage.
Eigen::VectorXd shift_tree_guess(const VariableLayout& layout, const ScenarioTree& tree,
                                 const Eigen::VectorXd& prev_solution, int realized,
                                 const Eigen::VectorXd& new_root_state);

}  // namespace tems
