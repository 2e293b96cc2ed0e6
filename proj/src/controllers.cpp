#include "tems/controllers.hpp"

#include <stdexcept>
#include <string>

namespace tems {

namespace {

void require_size(const Eigen::VectorXd& v, int n, const char* what) {
  if (v.size() != 0 && v.size() != n)
    throw std::invalid_argument(std::string(what) + ": wrong size");
}

void require_nonneg(const Eigen::VectorXd& v, const char* what) {
  for (int i = 0; i < v.size(); ++i)
    if (!(v(i) >= 0.0))
      throw std::invalid_argument(std::string(what) + ": negative entry");
}

Eigen::VectorXd or_zeros(const Eigen::VectorXd& v, int n) {
  return v.size() ? v : Eigen::VectorXd::Zero(n);
}

}  // namespace

DeltaSpec DeltaSpec::zeros(const ModelSpec& model) {
  DeltaSpec d;
  d.state_lo = Eigen::VectorXd::Zero(model.n_x);
  d.state_hi = Eigen::VectorXd::Zero(model.n_x);
  d.input_lo = Eigen::VectorXd::Zero(model.n_u);
  d.input_hi = Eigen::VectorXd::Zero(model.n_u);
  d.g = Eigen::VectorXd::Zero(static_cast<int>(model.constraints.size()));
  return d;
}

void DeltaSpec::validate(const ModelSpec& model) const {
  require_size(state_lo, model.n_x, "delta.state_lo");
  require_size(state_hi, model.n_x, "delta.state_hi");
  require_size(input_lo, model.n_u, "delta.input_lo");
  require_size(input_hi, model.n_u, "delta.input_hi");
  require_size(g, static_cast<int>(model.constraints.size()), "delta.g");
  require_nonneg(state_lo, "delta.state_lo");
  require_nonneg(state_hi, "delta.state_hi");
  require_nonneg(input_lo, "delta.input_lo");
  require_nonneg(input_hi, "delta.input_hi");
  require_nonneg(g, "delta.g");
}

std::vector<Interval> tighten_intervals(const std::vector<Interval>& bounds,
                                        const Eigen::VectorXd& lo_delta,
                                        const Eigen::VectorXd& hi_delta) {
  const int n = static_cast<int>(bounds.size());
  const Eigen::VectorXd dl = or_zeros(lo_delta, n);
  const Eigen::VectorXd dh = or_zeros(hi_delta, n);
  if (dl.size() != n || dh.size() != n)
    throw std::invalid_argument("tighten_intervals: delta size mismatch");
  std::vector<Interval> out(bounds.size());
  for (int i = 0; i < n; ++i) {
    out[i].lo = bounds[i].lo + dl(i);
    out[i].hi = bounds[i].hi - dh(i);
    if (out[i].lo > out[i].hi)
      throw std::invalid_argument("tighten_intervals: interval " + std::to_string(i) +
                                  " tightened to empty");
  }
  return out;
}

TightenedSets make_tightened_sets(const ModelSpec& model, const DeltaSpec& delta) {
  delta.validate(model);
  TightenedSets s;
  s.state_box = tighten_intervals(model.state_bounds, delta.state_lo, delta.state_hi);
  s.input_box = tighten_intervals(model.input_bounds, delta.input_lo, delta.input_hi);
  s.terminal_box = s.state_box;
  s.g_delta = or_zeros(delta.g, static_cast<int>(model.constraints.size()));
  for (int i = 0; i < model.n_x; ++i)
    if (!s.state_box[i].is_subset_of(model.state_bounds[i]))
      throw std::logic_error("make_tightened_sets: Z not inside X");
  for (int i = 0; i < model.n_u; ++i)
    if (!s.input_box[i].is_subset_of(model.input_bounds[i]))
      throw std::logic_error("make_tightened_sets: V not inside U");
  return s;
}

void set_economic_cost(TreeOcp& ocp, int product_index, double product_weight,
                       const Eigen::VectorXd& move_penalties) {
  if (ocp.model) {
    if (product_index < 0 || product_index >= ocp.model->n_x)
      throw std::invalid_argument("set_economic_cost: product_index out of range");
    if (move_penalties.size() != ocp.model->n_u)
      throw std::invalid_argument("set_economic_cost: move_penalties size");
  }
  const Eigen::VectorXd mv = move_penalties;
  ocp.set_stage_cost([product_index, product_weight, mv](int, const auto& z,
                                                         const auto& v, const auto& vp) {
    using S = std::decay_t<decltype(z[0])>;
    S c = -product_weight * z[product_index];
    if (!vp.empty())
      for (int i = 0; i < mv.size(); ++i)
        c = c + mv(i) * square(v[i] - vp[i]);
    return c;
  });
}

PrimaryController::PrimaryController(TreeOcp prototype, SqpOptions opts)
    : proto_(std::move(prototype)), solver_(opts) {
  if (proto_.model && proto_.initial_state.size() == 0)
    proto_.initial_state = Eigen::VectorXd::Zero(proto_.model->n_x);
  proto_.validate();
  layout_ = transcribe(proto_).layout;
}

TreeTrajectory PrimaryController::solve(const Eigen::VectorXd& z0,
                                        const std::optional<Eigen::VectorXd>& prev_applied,
                                        int realized_branch) {
  proto_.initial_state = z0;
  proto_.prev_input = prev_applied;
  TranscribedOcp t = transcribe(proto_);

  Eigen::VectorXd guess;
  if (last_x_ && realized_branch >= 0)
    guess = shift_tree_guess(layout_, *proto_.tree, *last_x_, realized_branch, z0);
  else
    guess = default_guess(proto_, layout_);

  NlpSolution sol = solver_.solve(t.problem, guess);
  last_x_ = sol.x;

  TreeTrajectory traj = extract_trajectory(layout_, proto_.tree, sol.x);
  traj.objective = sol.objective;
  traj.status = sol.status;
  traj.kkt_residual = sol.kkt.max_residual();
  traj.iterations = sol.iterations;
  return traj;
}

void PrimaryController::reset() {
  last_x_.reset();
  solver_.reset();
}

void AncillaryWeights::validate(const ModelSpec& model) const {
  if (Q.size() != model.n_x || R.size() != model.n_u || P.size() != model.n_x)
    throw std::invalid_argument("AncillaryWeights: diagonal size mismatch");
  require_nonneg(Q, "ancillary Q");
  require_nonneg(R, "ancillary R");
  require_nonneg(P, "ancillary P");
}

int nominal_scenario(const ScenarioTree& tree) {
  const RealizationSet& rs = tree.realizations();
  if (!rs.nominal_index)
    throw std::invalid_argument("nominal_scenario: realization set has no nominal");
  int node = 0;
  for (int k = 1; k <= tree.horizon(); ++k) {
    const TreeNode& n = tree.node(node);
    node = n.children.size() == 1 ? n.children[0] : tree.child_for(node, *rs.nominal_index);
  }
  for (int s = 0; s < tree.num_scenarios(); ++s)
    if (tree.node_at_stage(s, tree.horizon()) == node) return s;
  throw std::logic_error("nominal_scenario: nominal leaf not indexed");
}

AncillaryController::AncillaryController(std::shared_ptr<const ScenarioTree> tree,
                                         std::shared_ptr<const ModelSpec> model,
                                         AncillaryWeights weights,
                                         std::vector<Interval> input_box,
                                         AncillaryMode mode, SqpOptions opts)
    : primary_tree_(std::move(tree)),
      model_(std::move(model)),
      weights_(std::move(weights)),
      input_box_(std::move(input_box)),
      mode_(mode),
      solver_(opts) {
  if (!primary_tree_ || !model_)
    throw std::invalid_argument("AncillaryController: tree and model required");
  weights_.validate(*model_);
  if (static_cast<int>(input_box_.size()) != model_->n_u)
    throw std::invalid_argument("AncillaryController: input box size");

  if (mode_ == AncillaryMode::full_tree) {
    pred_tree_ = primary_tree_;
  } else {
    nominal_scenario_ = nominal_scenario(*primary_tree_);
    RealizationSet nominal_only;
    nominal_only.vectors = {
        primary_tree_->realizations().vectors.at(
            *primary_tree_->realizations().nominal_index)};
    nominal_only.nominal_index = 0;
    pred_tree_ = std::make_shared<const ScenarioTree>(
        ScenarioTree::build(std::move(nominal_only), primary_tree_->horizon(), 1));
  }
}

AncillaryController::Result AncillaryController::solve(const Eigen::VectorXd& x0,
                                                       const TreeTrajectory& reference) {
  if (!reference.tree || reference.tree->num_nodes() != primary_tree_->num_nodes())
    throw std::invalid_argument("ancillary solve: reference shape mismatch");

  // Per prediction-tree node: the reference state/input it tracks. In
  // full_tree mode ids coincide; the nominal chain reads the nominal path.
  const int nodes = pred_tree_->num_nodes();
  std::vector<Eigen::VectorXd> ref_z(nodes), ref_v(nodes);
  if (mode_ == AncillaryMode::full_tree) {
    ref_z = reference.states;
    ref_v = reference.inputs;
  } else {
    for (int k = 0; k <= pred_tree_->horizon(); ++k) {
      ref_z[k] = reference.state_at(nominal_scenario_, k);
      if (k < pred_tree_->horizon()) ref_v[k] = reference.input_at(nominal_scenario_, k);
    }
  }

  TreeOcp ocp;
  ocp.tree = pred_tree_;
  ocp.model = model_;
  ocp.state_box.assign(model_->n_x, Interval{});  // no state constraints
  ocp.input_box = input_box_;  // original U
  ocp.include_g = false;
  ocp.initial_state = x0;
  const Eigen::VectorXd Q = weights_.Q, R = weights_.R, P = weights_.P;
  ocp.set_stage_cost([Q, R, ref_z, ref_v](int j, const auto& x, const auto& u,
                                          const auto&) {
    using S = std::decay_t<decltype(x[0])>;
    S c(0.0);
    const Eigen::VectorXd& zr = ref_z[j];
    const Eigen::VectorXd& vr = ref_v[j];
    for (int i = 0; i < Q.size(); ++i)
      if (Q(i) != 0.0) c = c + Q(i) * square(x[i] - zr(i));
    for (int i = 0; i < R.size(); ++i)
      if (R(i) != 0.0) c = c + R(i) * square(u[i] - vr(i));
    return c;
  });
  ocp.set_terminal_cost([P, ref_z](int j, const auto& x) {
    using S = std::decay_t<decltype(x[0])>;
    S c(0.0);
    const Eigen::VectorXd& zr = ref_z[j];
    for (int i = 0; i < P.size(); ++i)
      if (P(i) != 0.0) c = c + P(i) * square(x[i] - zr(i));
    return c;
  });

  TranscribedOcp t = transcribe(ocp);

  // Start from the reference itself with the root pinned to the measured
  // state. Under exact tracking this is already the optimum and the solver
  // returns it untouched, so u0 == v0* holds bitwise.
  Eigen::VectorXd guess(t.layout.n_vars);
  for (int j = 0; j < nodes; ++j) {
    guess.segment(t.layout.state_off[j], t.layout.n_x) = ref_z[j];
    if (t.layout.has_input(j)) {
      Eigen::VectorXd v = ref_v[j];
      for (int i = 0; i < t.layout.n_u; ++i)
        v(i) = std::min(input_box_[i].hi, std::max(input_box_[i].lo, v(i)));
      guess.segment(t.layout.input_off[j], t.layout.n_u) = v;
    }
  }
  guess.segment(t.layout.state_off[0], t.layout.n_x) = x0;

  NlpSolution sol = solver_.solve(t.problem, guess);

  Result res;
  res.trajectory = extract_trajectory(t.layout, pred_tree_, sol.x);
  res.trajectory.objective = sol.objective;
  res.trajectory.status = sol.status;
  res.trajectory.kkt_residual = sol.kkt.max_residual();
  res.trajectory.iterations = sol.iterations;
  res.u0 = res.trajectory.root_input();
  res.status = sol.status;
  res.kkt_residual = sol.kkt.max_residual();
  res.iterations = sol.iterations;
  return res;
}

}  // namespace tems
