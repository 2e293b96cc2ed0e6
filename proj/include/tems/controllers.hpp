#pragma once

// The two controllers of the hierarchical scheme. The primary controller is
// a multi-stage NMPC on the tightened sets; its tree solution is the
// reference the ancillary controller tracks from the measured plant state
// under the original input bounds, with no state constraints at all. Plain
// multi-stage NMPC and tube-based NMPC fall out as configurations: the
// former is the primary controller alone on an all-dimensions tree, the
// latter uses a single-scenario (nominal) primary tree.

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <vector>

#include "tems/model.hpp"
#include "tems/nlp.hpp"
#include "tems/scenario_tree.hpp"
#include "tems/transcription.hpp"

namespace tems {

// Back-off amounts: intervals shrink from each side, scalar constraints get
// g_i + delta_i <= 0. Empty vectors mean zero.
struct DeltaSpec {
  Eigen::VectorXd state_lo, state_hi;  // n_x each
  Eigen::VectorXd input_lo, input_hi;  // n_u each
  Eigen::VectorXd g;                   // n_c

  static DeltaSpec zeros(const ModelSpec& model);
  void validate(const ModelSpec& model) const;  // sizes, nonnegativity
};

// [a, b] with back-offs (lo, hi) becomes [a + lo, b - hi]. Throws when a
// tightened interval comes out empty.
std::vector<Interval> tighten_intervals(const std::vector<Interval>& bounds,
                                        const Eigen::VectorXd& lo_delta,
                                        const Eigen::VectorXd& hi_delta);

// The primary controller's constraint sets.
struct TightenedSets {
  std::vector<Interval> state_box;     // Z
  std::vector<Interval> input_box;     // V
  std::vector<Interval> terminal_box;  // Z_f, defaults to Z
  Eigen::VectorXd g_delta;             // per model constraint
};

// Z from X, V from U, Z_f = Z; checks Z inside X and V inside U per
// dimension.
TightenedSets make_tightened_sets(const ModelSpec& model, const DeltaSpec& delta);

// Economic stage cost -weight * z[product_index] + sum_i move[i] * (v_i -
// v_prev_i)^2; the move term is skipped when no previous input exists (the
// root at t = 0). Terminal cost stays zero.
void set_economic_cost(TreeOcp& ocp, int product_index, double product_weight,
                       const Eigen::VectorXd& move_penalties);

// Multi-stage controller over a TreeOcp prototype. The prototype fixes
// tree, model, costs, and sets; each solve pins the root to z0, threads the
// previous applied input into the move penalty, and warm starts from the
// previous solution shifted along the realized branch.
class PrimaryController {
 public:
  explicit PrimaryController(TreeOcp prototype, SqpOptions opts = primary_defaults());

  // realized_branch: realization index observed since the last solve, used
  // to shift the stored solution; pass -1 to cold start.
  TreeTrajectory solve(const Eigen::VectorXd& z0,
                       const std::optional<Eigen::VectorXd>& prev_applied,
                       int realized_branch);

  void reset();  // drop warm-start memory
  const TreeOcp& prototype() const { return proto_; }
  const VariableLayout& layout() const { return layout_; }

  static SqpOptions primary_defaults() {
    SqpOptions o;
    o.tol = 1e-8;
    return o;
  }

 private:
  TreeOcp proto_;
  NlpSolver solver_;
  VariableLayout layout_;
  std::optional<Eigen::VectorXd> last_x_;
};

enum class AncillaryMode { full_tree, nominal_only };

// Diagonals of the tracking weights: stage (x-z)'Q(x-z) + (u-v)'R(u-v),
// terminal (x-z)'P(x-z). P = 0 reproduces a zero terminal cost.
struct AncillaryWeights {
  Eigen::VectorXd Q, R, P;
  void validate(const ModelSpec& model) const;
};

// Tracking controller: same tree and dynamics as the primary (or the
// nominal chain in nominal_only mode), input bounds from the ORIGINAL set
// U, no state constraints. Always feasible for compact nonempty U.
class AncillaryController {
 public:
  AncillaryController(std::shared_ptr<const ScenarioTree> tree,
                      std::shared_ptr<const ModelSpec> model, AncillaryWeights weights,
                      std::vector<Interval> input_box,
                      AncillaryMode mode = AncillaryMode::full_tree,
                      SqpOptions opts = PrimaryController::primary_defaults());

  struct Result {
    Eigen::VectorXd u0;
    TreeTrajectory trajectory;
    SolveStatus status = SolveStatus::max_iter;
    double kkt_residual = 0.0;
    int iterations = 0;
  };

  // reference: the primary controller's latest tree solution (full shape in
  // full_tree mode; nominal_only only reads its nominal path).
  Result solve(const Eigen::VectorXd& x0, const TreeTrajectory& reference);

  const std::shared_ptr<const ScenarioTree>& prediction_tree() const {
    return pred_tree_;
  }

 private:
  std::shared_ptr<const ScenarioTree> primary_tree_;
  std::shared_ptr<const ScenarioTree> pred_tree_;  // == primary tree or chain
  std::shared_ptr<const ModelSpec> model_;
  AncillaryWeights weights_;
  std::vector<Interval> input_box_;
  AncillaryMode mode_;
  NlpSolver solver_;
  int nominal_scenario_ = 0;
};

// Scenario following the nominal realization at every branching stage.
// Requires the tree's realization set to carry a nominal index.
int nominal_scenario(const ScenarioTree& tree);

}  // namespace tems
