#include "tems/transcription.hpp"

#include <stdexcept>

namespace tems {

void TreeOcp::validate() const {
  if (!tree) throw std::invalid_argument("TreeOcp: tree not set");
  if (!model) throw std::invalid_argument("TreeOcp: model not set");
  if (!stage_cost || !stage_cost_ad)
    throw std::invalid_argument("TreeOcp: stage cost not set (need both scalar forms)");
  if (static_cast<bool>(terminal_cost) != static_cast<bool>(terminal_cost_ad))
    throw std::invalid_argument("TreeOcp: terminal cost needs both scalar forms");
  const int n_x = model->n_x;
  const int n_u = model->n_u;
  if (static_cast<int>(state_box.size()) != n_x)
    throw std::invalid_argument("TreeOcp: state_box size");
  if (static_cast<int>(input_box.size()) != n_u)
    throw std::invalid_argument("TreeOcp: input_box size");
  if (!terminal_box.empty() && static_cast<int>(terminal_box.size()) != n_x)
    throw std::invalid_argument("TreeOcp: terminal_box size");
  if (g_delta.size() != 0 &&
      g_delta.size() != static_cast<int>(model->constraints.size()))
    throw std::invalid_argument("TreeOcp: g_delta size");
  if (initial_state.size() != n_x)
    throw std::invalid_argument("TreeOcp: initial_state size");
  if (prev_input && prev_input->size() != n_u)
    throw std::invalid_argument("TreeOcp: prev_input size");
  for (const Interval& b : input_box)
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi))
      throw std::invalid_argument("TreeOcp: input box must be compact");
  const int nd = tree->realizations().vectors.empty()
                     ? 0
                     : static_cast<int>(tree->realizations().vectors[0].size());
  if (nd != model->n_d)
    throw std::invalid_argument("TreeOcp: realization dimension != model n_d");
}

namespace {

// Everything the problem closures need, shared so the NlpProblem stays valid
// independently of the TreeOcp the caller built it from.
struct Ctx {
  TreeOcp ocp;
  VariableLayout lay;
  Eigen::VectorXd delta;                      // per-constraint, zero-filled
  std::vector<std::pair<int, int>> g_rows;    // (node, constraint index)
  int m_eq = 0;
};

Eigen::VectorXd node_state(const Ctx& c, const Eigen::VectorXd& x, int j) {
  return x.segment(c.lay.state_off[j], c.lay.n_x);
}

Eigen::VectorXd node_input(const Ctx& c, const Eigen::VectorXd& x, int j) {
  return x.segment(c.lay.input_off[j], c.lay.n_u);
}

// Parent input slot for the stage cost at node j: parent's variables, the
// externally applied previous input at the root, or empty.
Eigen::VectorXd prev_input_for(const Ctx& c, const Eigen::VectorXd& x, int j) {
  const TreeNode& n = c.ocp.tree->node(j);
  if (n.parent >= 0) return node_input(c, x, n.parent);
  if (c.ocp.prev_input) return *c.ocp.prev_input;
  return Eigen::VectorXd();
}

// Gradient of model constraint k at node j over [z; u-if-used], AD when the
// constraint has it and central differences otherwise.
Eigen::VectorXd g_row_gradient(const Ctx& c, const Eigen::VectorXd& x, int j, int k,
                               bool with_u) {
  const ConstraintFn& con = c.ocp.model->constraints[k];
  const VariableLayout& l = c.lay;
  const int dim = l.n_x + (with_u ? l.n_u : 0);
  const Eigen::VectorXd z = node_state(c, x, j);
  const Eigen::VectorXd u =
      l.has_input(j) ? node_input(c, x, j) : Eigen::VectorXd::Zero(l.n_u);
  if (con.fn_ad) {
    DualVector zs = seed_vector(z, dim, 0);
    DualVector us = with_u ? seed_vector(u, dim, l.n_x) : constant_vector(u);
    return con.fn_ad(zs, us).grad_or_zero(dim);
  }
  Eigen::VectorXd gr(dim);
  Eigen::VectorXd zp = z, up = u;
  for (int i = 0; i < l.n_x; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(z(i)));
    zp(i) = z(i) + h;
    const double fp = con.fn(zp, u);
    zp(i) = z(i) - h;
    const double fm = con.fn(zp, u);
    zp(i) = z(i);
    gr(i) = (fp - fm) / (2.0 * h);
  }
  for (int i = 0; with_u && i < l.n_u; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(u(i)));
    up(i) = u(i) + h;
    const double fp = con.fn(z, up);
    up(i) = u(i) - h;
    const double fm = con.fn(z, up);
    up(i) = u(i);
    gr(l.n_x + i) = (fp - fm) / (2.0 * h);
  }
  return gr;
}

}  // namespace

TranscribedOcp transcribe(const TreeOcp& ocp) {
  ocp.validate();

  auto ctx = std::make_shared<Ctx>();
  ctx->ocp = ocp;
  const ScenarioTree& tree = *ctx->ocp.tree;
  const ModelSpec& model = *ctx->ocp.model;
  const int n_x = model.n_x;
  const int n_u = model.n_u;
  const int n_c = static_cast<int>(model.constraints.size());

  VariableLayout& lay = ctx->lay;
  lay.n_x = n_x;
  lay.n_u = n_u;
  lay.state_off.assign(tree.num_nodes(), -1);
  lay.input_off.assign(tree.num_nodes(), -1);
  int off = 0;
  for (int j = 0; j < tree.num_nodes(); ++j) {
    lay.state_off[j] = off;
    off += n_x;
    if (!tree.node(j).is_leaf()) {
      lay.input_off[j] = off;
      off += n_u;
    }
  }
  lay.n_vars = off;

  ctx->m_eq = n_x * tree.num_nodes();
  ctx->delta = ocp.g_delta.size() ? ocp.g_delta : Eigen::VectorXd::Zero(n_c);

  if (ctx->ocp.include_g) {
    for (int j = 0; j < tree.num_nodes(); ++j) {
      const bool leaf = tree.node(j).is_leaf();
      for (int k = 0; k < n_c; ++k) {
        if (leaf && model.constraints[k].uses_input) continue;
        ctx->g_rows.emplace_back(j, k);
      }
    }
  }

  TranscribedOcp out;
  out.layout = lay;
  NlpProblem& p = out.problem;
  p.n = lay.n_vars;
  p.m_eq = ctx->m_eq;
  p.m_in = static_cast<int>(ctx->g_rows.size());

  // Row maps for diagnostics.
  out.eq_row_node.resize(ctx->m_eq);
  for (int j = 0; j < tree.num_nodes(); ++j)
    for (int i = 0; i < n_x; ++i) out.eq_row_node[n_x * j + i] = j;
  for (const auto& [j, k] : ctx->g_rows) {
    out.ineq_row_node.push_back(j);
    out.ineq_row_constraint.push_back(k);
  }

  // Bounds from the boxes.
  p.lo.resize(lay.n_vars);
  p.hi.resize(lay.n_vars);
  for (int j = 0; j < tree.num_nodes(); ++j) {
    const bool leaf = tree.node(j).is_leaf();
    const std::vector<Interval>& sb =
        (leaf && !ctx->ocp.terminal_box.empty()) ? ctx->ocp.terminal_box
                                                 : ctx->ocp.state_box;
    for (int i = 0; i < n_x; ++i) {
      p.lo(lay.state_var(j, i)) = sb[i].lo;
      p.hi(lay.state_var(j, i)) = sb[i].hi;
    }
    if (lay.has_input(j)) {
      for (int i = 0; i < n_u; ++i) {
        p.lo(lay.input_var(j, i)) = ctx->ocp.input_box[i].lo;
        p.hi(lay.input_var(j, i)) = ctx->ocp.input_box[i].hi;
      }
    }
  }

  p.objective = [ctx](const Eigen::VectorXd& x) {
    const ScenarioTree& t = *ctx->ocp.tree;
    double f = 0.0;
    for (int j = 0; j < t.num_nodes(); ++j) {
      const TreeNode& n = t.node(j);
      if (!n.is_leaf()) {
        f += n.weight * ctx->ocp.stage_cost(j, node_state(*ctx, x, j),
                                            node_input(*ctx, x, j),
                                            prev_input_for(*ctx, x, j));
      } else if (ctx->ocp.terminal_cost) {
        f += ctx->ocp.terminal_cost(j, node_state(*ctx, x, j));
      }
    }
    return f;
  };

  p.gradient = [ctx](const Eigen::VectorXd& x) {
    const ScenarioTree& t = *ctx->ocp.tree;
    const VariableLayout& l = ctx->lay;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(l.n_vars);
    for (int j = 0; j < t.num_nodes(); ++j) {
      const TreeNode& n = t.node(j);
      if (!n.is_leaf()) {
        const bool root = n.parent < 0;
        const int dim = l.n_x + l.n_u + (root ? 0 : l.n_u);
        DualVector zs = seed_vector(node_state(*ctx, x, j), dim, 0);
        DualVector vs = seed_vector(node_input(*ctx, x, j), dim, l.n_x);
        DualVector ps = root ? constant_vector(prev_input_for(*ctx, x, j))
                             : seed_vector(node_input(*ctx, x, n.parent), dim,
                                           l.n_x + l.n_u);
        Dual res = ctx->ocp.stage_cost_ad(j, zs, vs, ps);
        Eigen::VectorXd gr = n.weight * res.grad_or_zero(dim);
        for (int i = 0; i < l.n_x; ++i) g(l.state_var(j, i)) += gr(i);
        for (int i = 0; i < l.n_u; ++i) g(l.input_var(j, i)) += gr(l.n_x + i);
        if (!root)
          for (int i = 0; i < l.n_u; ++i)
            g(l.input_var(n.parent, i)) += gr(l.n_x + l.n_u + i);
      } else if (ctx->ocp.terminal_cost_ad) {
        DualVector zs = seed_vector(node_state(*ctx, x, j), l.n_x, 0);
        Dual res = ctx->ocp.terminal_cost_ad(j, zs);
        Eigen::VectorXd gr = res.grad_or_zero(l.n_x);
        for (int i = 0; i < l.n_x; ++i) g(l.state_var(j, i)) += gr(i);
      }
    }
    return g;
  };

  p.eq = [ctx](const Eigen::VectorXd& x) {
    const ScenarioTree& t = *ctx->ocp.tree;
    const ModelSpec& m = *ctx->ocp.model;
    const int nx = ctx->lay.n_x;
    Eigen::VectorXd r(ctx->m_eq);
    r.head(nx) = node_state(*ctx, x, 0) - ctx->ocp.initial_state;
    for (int j = 1; j < t.num_nodes(); ++j) {
      const TreeNode& n = t.node(j);
      r.segment(nx * j, nx) =
          node_state(*ctx, x, j) -
          m.step(node_state(*ctx, x, n.parent), node_input(*ctx, x, n.parent),
                 t.edge_value(j));
    }
    return r;
  };

  p.eq_jac = [ctx](const Eigen::VectorXd& x) {
    const ScenarioTree& t = *ctx->ocp.tree;
    const ModelSpec& m = *ctx->ocp.model;
    const VariableLayout& l = ctx->lay;
    const int nx = l.n_x;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(ctx->m_eq) * (1 + nx + l.n_u));
    for (int i = 0; i < nx; ++i) trips.emplace_back(i, l.state_var(0, i), 1.0);
    for (int j = 1; j < t.num_nodes(); ++j) {
      const TreeNode& n = t.node(j);
      Eigen::MatrixXd Jx, Ju;
      m.jacobians(node_state(*ctx, x, n.parent), node_input(*ctx, x, n.parent),
                  t.edge_value(j), &Jx, &Ju, nullptr);
      const int r0 = nx * j;
      for (int i = 0; i < nx; ++i) {
        trips.emplace_back(r0 + i, l.state_var(j, i), 1.0);
        for (int c = 0; c < nx; ++c)
          if (Jx(i, c) != 0.0)
            trips.emplace_back(r0 + i, l.state_var(n.parent, c), -Jx(i, c));
        for (int c = 0; c < l.n_u; ++c)
          if (Ju(i, c) != 0.0)
            trips.emplace_back(r0 + i, l.input_var(n.parent, c), -Ju(i, c));
      }
    }
    Eigen::SparseMatrix<double> J(ctx->m_eq, l.n_vars);
    J.setFromTriplets(trips.begin(), trips.end());
    return J;
  };

  if (p.m_in > 0) {
    p.ineq = [ctx](const Eigen::VectorXd& x) {
      const ModelSpec& m = *ctx->ocp.model;
      Eigen::VectorXd r(ctx->g_rows.size());
      const Eigen::VectorXd u_zero = Eigen::VectorXd::Zero(ctx->lay.n_u);
      for (size_t q = 0; q < ctx->g_rows.size(); ++q) {
        const auto& [j, k] = ctx->g_rows[q];
        const Eigen::VectorXd u =
            ctx->lay.has_input(j) ? node_input(*ctx, x, j) : u_zero;
        r(q) = m.constraints[k].fn(node_state(*ctx, x, j), u) + ctx->delta(k);
      }
      return r;
    };

    p.ineq_jac = [ctx](const Eigen::VectorXd& x) {
      const ModelSpec& m = *ctx->ocp.model;
      const VariableLayout& l = ctx->lay;
      std::vector<Eigen::Triplet<double>> trips;
      for (size_t q = 0; q < ctx->g_rows.size(); ++q) {
        const auto& [j, k] = ctx->g_rows[q];
        const bool with_u = m.constraints[k].uses_input && l.has_input(j);
        const Eigen::VectorXd gr = g_row_gradient(*ctx, x, j, k, with_u);
        const int row = static_cast<int>(q);
        for (int i = 0; i < l.n_x; ++i)
          if (gr(i) != 0.0) trips.emplace_back(row, l.state_var(j, i), gr(i));
        if (with_u)
          for (int i = 0; i < l.n_u; ++i)
            if (gr(l.n_x + i) != 0.0)
              trips.emplace_back(row, l.input_var(j, i), gr(l.n_x + i));
      }
      Eigen::SparseMatrix<double, Eigen::RowMajor> J(
          static_cast<int>(ctx->g_rows.size()), l.n_vars);
      J.setFromTriplets(trips.begin(), trips.end());
      return J;
    };
  }

  // Hessian partition: one element per node cost, per terminal cost, per
  // dynamics edge, per g row. Cost elements carry the objective curvature;
  // constraint elements carry multiplier-weighted curvature and start near
  // zero, so linear constraints never pay for updates.
  for (int j = 0; j < tree.num_nodes(); ++j) {
    const TreeNode& n = tree.node(j);
    if (!n.is_leaf()) {
      NlpElement e;
      for (int i = 0; i < n_x; ++i) e.idx.push_back(lay.state_var(j, i));
      for (int i = 0; i < n_u; ++i) e.idx.push_back(lay.input_var(j, i));
      const bool root = n.parent < 0;
      if (!root)
        for (int i = 0; i < n_u; ++i) e.idx.push_back(lay.input_var(n.parent, i));
      e.grad = [ctx, j](const Eigen::VectorXd& x, const Eigen::VectorXd&,
                        const Eigen::VectorXd&) {
        const TreeNode& node = ctx->ocp.tree->node(j);
        const VariableLayout& l = ctx->lay;
        const bool rt = node.parent < 0;
        const int dim = l.n_x + l.n_u + (rt ? 0 : l.n_u);
        DualVector zs = seed_vector(node_state(*ctx, x, j), dim, 0);
        DualVector vs = seed_vector(node_input(*ctx, x, j), dim, l.n_x);
        DualVector ps = rt ? constant_vector(prev_input_for(*ctx, x, j))
                           : seed_vector(node_input(*ctx, x, node.parent), dim,
                                         l.n_x + l.n_u);
        Dual res = ctx->ocp.stage_cost_ad(j, zs, vs, ps);
        return (node.weight * res.grad_or_zero(dim)).eval();
      };
      p.elements.push_back(std::move(e));
    } else if (ocp.terminal_cost_ad) {
      NlpElement e;
      for (int i = 0; i < n_x; ++i) e.idx.push_back(lay.state_var(j, i));
      e.grad = [ctx, j](const Eigen::VectorXd& x, const Eigen::VectorXd&,
                        const Eigen::VectorXd&) {
        DualVector zs = seed_vector(node_state(*ctx, x, j), ctx->lay.n_x, 0);
        return ctx->ocp.terminal_cost_ad(j, zs).grad_or_zero(ctx->lay.n_x).eval();
      };
      p.elements.push_back(std::move(e));
    }
  }
  for (int j = 1; j < tree.num_nodes(); ++j) {
    const TreeNode& n = tree.node(j);
    NlpElement e;
    for (int i = 0; i < n_x; ++i) e.idx.push_back(lay.state_var(n.parent, i));
    for (int i = 0; i < n_u; ++i) e.idx.push_back(lay.input_var(n.parent, i));
    for (int i = 0; i < n_x; ++i) e.idx.push_back(lay.state_var(j, i));
    e.grad = [ctx, j](const Eigen::VectorXd& x, const Eigen::VectorXd& lam_eq,
                      const Eigen::VectorXd&) {
      const VariableLayout& l = ctx->lay;
      const TreeNode& node = ctx->ocp.tree->node(j);
      const Eigen::VectorXd lam = lam_eq.size() >= l.n_x * (j + 1)
                                      ? lam_eq.segment(l.n_x * j, l.n_x).eval()
                                      : Eigen::VectorXd::Zero(l.n_x).eval();
      Eigen::MatrixXd Jx, Ju;
      ctx->ocp.model->jacobians(node_state(*ctx, x, node.parent),
                                node_input(*ctx, x, node.parent),
                                ctx->ocp.tree->edge_value(j), &Jx, &Ju, nullptr);
      Eigen::VectorXd g(l.n_x + l.n_u + l.n_x);
      g.head(l.n_x) = -Jx.transpose() * lam;
      g.segment(l.n_x, l.n_u) = -Ju.transpose() * lam;
      g.tail(l.n_x) = lam;
      return g;
    };
    p.elements.push_back(std::move(e));
  }
  for (size_t q = 0; q < ctx->g_rows.size(); ++q) {
    const auto& [j, k] = ctx->g_rows[q];
    const ConstraintFn& con = model.constraints[k];
    const bool with_u = con.uses_input && lay.has_input(j);
    NlpElement e;
    for (int i = 0; i < n_x; ++i) e.idx.push_back(lay.state_var(j, i));
    if (with_u)
      for (int i = 0; i < n_u; ++i) e.idx.push_back(lay.input_var(j, i));
    const int row = static_cast<int>(q);
    e.grad = [ctx, j, k, row, with_u](const Eigen::VectorXd& x, const Eigen::VectorXd&,
                                      const Eigen::VectorXd& lam_in) {
      const int dim = ctx->lay.n_x + (with_u ? ctx->lay.n_u : 0);
      const double mu = lam_in.size() > row ? lam_in(row) : 0.0;
      if (mu == 0.0) return Eigen::VectorXd::Zero(dim).eval();
      return (mu * g_row_gradient(*ctx, x, j, k, with_u)).eval();
    };
    p.elements.push_back(std::move(e));
  }

  p.x0 = default_guess(ocp, lay);
  p.finalize();
  return out;
}

Eigen::VectorXd default_guess(const TreeOcp& ocp, const VariableLayout& layout) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(layout.n_vars);
  const ScenarioTree& tree = *ocp.tree;
  for (int j = 0; j < tree.num_nodes(); ++j) {
    x.segment(layout.state_off[j], layout.n_x) = ocp.initial_state;
    if (layout.has_input(j))
      for (int i = 0; i < layout.n_u; ++i) {
        const Interval& b = ocp.input_box[i];
        const bool finite = std::isfinite(b.lo) && std::isfinite(b.hi);
        x(layout.input_var(j, i)) =
            finite ? 0.5 * (b.lo + b.hi) : std::min(b.hi, std::max(b.lo, 0.0));
      }
  }
  return x;
}

TreeTrajectory extract_trajectory(const VariableLayout& layout,
                                  const std::shared_ptr<const ScenarioTree>& tree,
                                  const Eigen::VectorXd& x) {
  TreeTrajectory t;
  t.tree = tree;
  t.states.resize(tree->num_nodes());
  t.inputs.resize(tree->num_nodes());
  for (int j = 0; j < tree->num_nodes(); ++j) {
    t.states[j] = x.segment(layout.state_off[j], layout.n_x);
    if (layout.has_input(j))
      t.inputs[j] = x.segment(layout.input_off[j], layout.n_u);
  }
  return t;
}

Eigen::VectorXd flatten_trajectory(const VariableLayout& layout,
                                   const TreeTrajectory& traj) {
  Eigen::VectorXd x(layout.n_vars);
  for (size_t j = 0; j < traj.states.size(); ++j) {
    x.segment(layout.state_off[j], layout.n_x) = traj.states[j];
    if (layout.has_input(static_cast<int>(j)))
      x.segment(layout.input_off[j], layout.n_u) = traj.inputs[j];
  }
  return x;
}

Eigen::VectorXd shift_tree_guess(const VariableLayout& layout, const ScenarioTree& tree,
                                 const Eigen::VectorXd& prev_solution, int realized,
                                 const Eigen::VectorXd& new_root_state) {
  Eigen::VectorXd out = prev_solution;
  auto z_of = [&](int j) { return prev_solution.segment(layout.state_off[j], layout.n_x); };
  auto v_of = [&](int j) {
    // Last known input along the path when the mapped node ran off the tree.
    int q = j;
    while (!layout.has_input(q)) q = tree.node(q).parent;
    return prev_solution.segment(layout.input_off[q], layout.n_u);
  };

  // Descend from the child: past the old tree's branching stages (single
  // child) or past its leaves the deepest values repeat.
  auto step_down = [&](int old, int r) {
    const TreeNode& n = tree.node(old);
    if (n.is_leaf()) return old;
    if (n.children.size() == 1) return n.children[0];
    return tree.child_for(old, r);
  };

  std::vector<std::pair<int, int>> stack;  // (new node, mapped old node)
  stack.emplace_back(0, step_down(0, realized));
  while (!stack.empty()) {
    auto [nw, old] = stack.back();
    stack.pop_back();
    out.segment(layout.state_off[nw], layout.n_x) = z_of(old);
    if (layout.has_input(nw))
      out.segment(layout.input_off[nw], layout.n_u) = v_of(old);
    for (int c : tree.node(nw).children)
      stack.emplace_back(c, step_down(old, tree.node(c).edge_realization));
  }
  out.segment(layout.state_off[0], layout.n_x) = new_root_state;
  return out;
}

}  // namespace tems
