#include "tems/scenario_tree.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tems {

RealizationSet sample_box_vertices(const UncertaintyDecl& decl, bool include_nominal,
                                   bool all_dims) {
  decl.validate();
  const int n = decl.dim();

  std::vector<int> dims;  // branched dimensions, in declaration order
  for (int i = 0; i < n; ++i)
    if (all_dims || decl.significant[i]) dims.push_back(i);

  // Per-dimension value lists, nominal first so the all-nominal combination
  // lands at index 0.
  std::vector<std::vector<double>> values(dims.size());
  for (size_t k = 0; k < dims.size(); ++k) {
    const int i = dims[k];
    std::vector<double>& v = values[k];
    auto push_unique = [&v](double val) {
      for (double e : v)
        if (e == val) return;
      v.push_back(val);
    };
    if (include_nominal) push_unique(decl.nominal(i));
    push_unique(decl.lower(i));
    push_unique(decl.upper(i));
  }

  RealizationSet out;
  long long total = 1;
  for (const auto& v : values) total *= static_cast<long long>(v.size());
  out.vectors.reserve(static_cast<size_t>(total));

  std::vector<size_t> idx(dims.size(), 0);
  for (long long c = 0; c < total; ++c) {
    Eigen::VectorXd d = decl.nominal;
    for (size_t k = 0; k < dims.size(); ++k) d(dims[k]) = values[k][idx[k]];
    out.vectors.push_back(std::move(d));
    // odometer, last branched dimension fastest
    for (size_t k = dims.size(); k-- > 0;) {
      if (++idx[k] < values[k].size()) break;
      idx[k] = 0;
    }
  }

  if (include_nominal) out.nominal_index = 0;
  if (dims.empty()) out.nominal_index = 0;  // single nominal realization
  return out;
}

ScenarioTree ScenarioTree::build(RealizationSet realizations, int horizon,
                                 int robust_horizon) {
  if (realizations.size() < 1)
    throw std::invalid_argument("ScenarioTree: empty realization set");
  if (horizon < 1) throw std::invalid_argument("ScenarioTree: horizon must be >= 1");
  if (robust_horizon < 0 || robust_horizon > horizon)
    throw std::invalid_argument("ScenarioTree: robust horizon out of range");

  ScenarioTree t;
  t.N_ = horizon;
  t.NR_ = robust_horizon;
  t.reals_ = std::move(realizations);
  const int s = t.reals_.size();
  const int nominal = t.reals_.nominal_index.value_or(0);

  t.nodes_.reserve(static_cast<size_t>(state_node_count(s, horizon, robust_horizon)));
  TreeNode root;
  root.id = 0;
  // A tree with no branching stages still needs a defined edge value for the
  // tail, take the nominal realization.
  root.edge_realization = robust_horizon == 0 ? nominal : -1;
  t.nodes_.push_back(root);

  // Breadth-first construction, children appended in realization order.
  std::vector<int> frontier = {0};
  for (int stage = 1; stage <= horizon; ++stage) {
    std::vector<int> next;
    const bool branching = stage <= robust_horizon;
    for (int pid : frontier) {
      const int n_children = branching ? s : 1;
      for (int r = 0; r < n_children; ++r) {
        TreeNode c;
        c.id = static_cast<int>(t.nodes_.size());
        c.stage = stage;
        c.parent = pid;
        c.edge_realization = branching ? r : t.nodes_[pid].edge_realization;
        t.nodes_[pid].children.push_back(c.id);
        next.push_back(c.id);
        t.nodes_.push_back(std::move(c));
      }
    }
    frontier = std::move(next);
  }
  t.leaves_ = frontier;

  // Scenario paths, leaf k back to the root.
  t.scenario_paths_.assign(t.leaves_.size(), std::vector<int>(horizon + 1, 0));
  for (size_t k = 0; k < t.leaves_.size(); ++k) {
    int id = t.leaves_[k];
    for (int stage = horizon; stage >= 0; --stage) {
      t.scenario_paths_[k][stage] = id;
      id = t.nodes_[id].parent;
    }
  }

  t.set_probabilities(Eigen::VectorXd::Constant(s, 1.0 / s));
  return t;
}

const Eigen::VectorXd& ScenarioTree::edge_value(int child_id) const {
  const TreeNode& n = nodes_.at(child_id);
  if (n.parent < 0) throw std::invalid_argument("edge_value: root has no edge");
  return reals_.vectors.at(n.edge_realization);
}

int ScenarioTree::child_for(int node_id, int realization) const {
  const TreeNode& n = nodes_.at(node_id);
  if (n.is_leaf()) throw std::invalid_argument("child_for: node is a leaf");
  if (n.children.size() == 1) {
    // Past the robust horizon only the inherited realization is available.
    if (nodes_[n.children[0]].edge_realization != realization)
      throw std::invalid_argument("child_for: realization not available past the robust horizon");
    return n.children[0];
  }
  if (realization < 0 || realization >= static_cast<int>(n.children.size()))
    throw std::invalid_argument("child_for: realization out of range");
  return n.children[realization];
}

void ScenarioTree::set_probabilities(const Eigen::VectorXd& per_realization) {
  if (per_realization.size() != reals_.size())
    throw std::invalid_argument("set_probabilities: wrong size");
  double sum = per_realization.sum();
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("set_probabilities: probabilities must sum to 1");
  for (TreeNode& n : nodes_) {
    if (n.parent < 0) {
      n.weight = 1.0;
    } else {
      const TreeNode& p = nodes_[n.parent];
      n.weight = p.children.size() == 1
                     ? p.weight
                     : p.weight * per_realization(n.edge_realization);
    }
  }
}

long long state_node_count(int s, int horizon, int robust_horizon) {
  long long total = 0;
  long long width = 1;
  for (int k = 0; k <= horizon; ++k) {
    if (k >= 1 && k <= robust_horizon) width *= s;
    total += width;
  }
  return total;
}

unsigned long long naive_scenario_count(int values_per_dim, int n_dims,
                                        int robust_horizon) {
  if (values_per_dim <= 0 || n_dims <= 0 || robust_horizon < 0)
    throw std::invalid_argument("naive_scenario_count: nonpositive argument");
  unsigned long long out = 1;
  const auto v = static_cast<unsigned long long>(values_per_dim);
  for (int k = 0; k < n_dims * robust_horizon; ++k) {
    if (out > std::numeric_limits<unsigned long long>::max() / v)
      throw std::overflow_error("naive_scenario_count: overflow");
    out *= v;
  }
  return out;
}

}  // namespace tems
