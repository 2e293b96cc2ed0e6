#pragma once

// Scenario tree over a finite set of uncertainty realizations. Nodes branch
// on every realization up to the robust horizon and continue single-child
// after it, with the realization of the last branching edge carried along
// the tail. Nodes are stored breadth-first, children in realization order,
// so indices are reproducible across runs.

#include <Eigen/Core>

#include <optional>
#include <vector>

#include "tems/model.hpp"

namespace tems {

struct RealizationSet {
  std::vector<Eigen::VectorXd> vectors;
  std::optional<int> nominal_index;

  int size() const { return static_cast<int>(vectors.size()); }
};

// Cartesian grid over the box of the significant dimensions: per dimension
// the values are [nominal, lower, upper] (nominal skipped when
// include_nominal is false or it coincides with a bound), remaining
// dimensions pinned at nominal. all_dims treats every dimension as
// significant; the plain multi-stage baseline uses that to branch on
// everything.
RealizationSet sample_box_vertices(const UncertaintyDecl& decl,
                                   bool include_nominal = true,
                                   bool all_dims = false);

struct TreeNode {
  int id = 0;
  int stage = 0;
  int parent = -1;            // -1 at the root
  int edge_realization = -1;  // realization on the edge from the parent
  double weight = 0.0;        // probability mass reaching this node
  std::vector<int> children;

  bool is_leaf() const { return children.empty(); }
};

class ScenarioTree {
 public:
  // horizon >= 1, 0 <= robust_horizon <= horizon, at least one realization.
  static ScenarioTree build(RealizationSet realizations, int horizon,
                            int robust_horizon);

  int horizon() const { return N_; }
  int robust_horizon() const { return NR_; }
  int num_realizations() const { return reals_.size(); }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_leaves() const { return static_cast<int>(leaves_.size()); }
  int num_scenarios() const { return num_leaves(); }

  const TreeNode& node(int id) const { return nodes_.at(id); }
  const std::vector<int>& leaves() const { return leaves_; }
  const RealizationSet& realizations() const { return reals_; }

  // Uncertainty value on the edge entering `child_id`.
  const Eigen::VectorXd& edge_value(int child_id) const;

  // Child reached from `node_id` under `realization`. Past the robust
  // horizon nodes have a single child and only the inherited realization is
  // accepted; anything else throws.
  int child_for(int node_id, int realization) const;

  // Node visited at `stage` by scenario (= leaf) number `scenario`.
  int node_at_stage(int scenario, int stage) const {
    return scenario_paths_.at(scenario).at(stage);
  }

  // Re-derive node weights from per-realization probabilities (must sum to
  // one). The default weighting is the uniform case.
  void set_probabilities(const Eigen::VectorXd& per_realization);

 private:
  int N_ = 0;
  int NR_ = 0;
  RealizationSet reals_;
  std::vector<TreeNode> nodes_;
  std::vector<int> leaves_;
  std::vector<std::vector<int>> scenario_paths_;
};

// Closed-form count of tree nodes, sum over stages of s^min(k, N_R).
long long state_node_count(int s, int horizon, int robust_horizon);

// Scenario count if the tree branched on every uncertainty dimension
// separately: values_per_dim^(n_dims * robust_horizon). Throws on overflow.
unsigned long long naive_scenario_count(int values_per_dim, int n_dims,
                                        int robust_horizon);

}  // namespace tems
