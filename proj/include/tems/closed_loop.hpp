#pragma once

// Closed-loop execution: one episode steps a simulated plant under a chosen
// control scheme (TEMS, plain multi-stage, or tube NMPC), the batch runner
// fans episodes over a parametric uncertainty grid, and the comparison
// reduces batches of several schemes into one table. Violations are always
// measured against the ORIGINAL constraint sets, never the tightened ones,
// so the numbers mean the same thing for every scheme.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tems/controllers.hpp"
#include "tems/estimator.hpp"
#include "tems/model.hpp"
#include "tems/rng.hpp"
#include "tems/scenario_tree.hpp"
#include "tems/transcription.hpp"

namespace tems {

// A step counts as violating once it exceeds this; keeps honest zeros from
// solver-tolerance dust.
constexpr double kViolationTol = 1e-9;

// How the plant draws the additive uncertainty dimensions each step. The
// extreme modes hold them at a bound (no RNG consumed) and exist for
// calibration; parametric dimensions always stay at their episode value.
enum class AdditiveMode { random, all_lower, all_upper };

// Episode termination: target reached (x[state_index] >= threshold, checked
// after each measurement) or the step cap. state_index -1 disables the
// target and the episode runs exactly max_steps inputs.
struct StopRule {
  int max_steps = 40;
  int state_index = -1;
  double threshold = 0.0;
};

// The simulated plant of one episode: the parametric (non-additive) part of
// d is frozen at true_parametric, additive dimensions are redrawn every
// step. Identical seeds reproduce identical disturbance sequences.
struct PlantSim {
  std::shared_ptr<const ModelSpec> model;
  UncertaintyDecl uncertainty;
  Eigen::VectorXd true_parametric;  // full n_d; additive entries ignored
  AdditiveMode additive_mode = AdditiveMode::random;
  StopRule stop;

  void validate() const;
  Eigen::VectorXd disturbance(DetRng& rng) const;
  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                       DetRng& rng) const;
};

enum class SchemeKind { tems, multi_stage, tube };
enum class EstimatorKind { finite, box };

const char* to_string(SchemeKind k);

// Uncertainty estimator used inside the loop. finite picks from candidates
// (defaults to the primary tree's realizations when left empty); box solves
// over the declared box. W regularizes toward the previous estimate.
struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::finite;
  RealizationSet candidates;  // finite mode; empty means tree realizations
  UncertaintyDecl box;        // box mode
  Eigen::MatrixXd W;          // may stay 0x0 for no regularization
};

// Everything one episode needs to instantiate its controllers. The
// prototype carries the tree, model, costs and (tightened) sets; for
// multi_stage the ancillary and estimator parts are ignored and the primary
// is fed the measured state directly.
struct SchemeConfig {
  std::string name = "tems";
  SchemeKind kind = SchemeKind::tems;
  TreeOcp prototype;
  AncillaryWeights ancillary;
  AncillaryMode ancillary_mode = AncillaryMode::full_tree;
  EstimatorConfig estimator;
  SqpOptions primary_opts = PrimaryController::primary_defaults();
  SqpOptions ancillary_opts = PrimaryController::primary_defaults();
};

// Per-episode results. Violation entries are NaN where undefined (input
// dependent rows at the terminal state).
struct EpisodeSummary {
  int index = 0;
  uint64_t seed = 0;
  Eigen::VectorXd true_parametric;
  int steps = 0;  // applied inputs
  bool reached_target = false;
  std::string error;               // nonempty when the episode aborted
  Eigen::VectorXd max_violation;   // per constraint row, over all steps
  Eigen::VectorXi violating_steps; // per constraint row, count above tol
  double primary_ms = 0.0;         // summed wall clock
  double ancillary_ms = 0.0;
  int solves = 0;           // closed-loop steps that ran the controllers
  int sqp_iterations = 0;   // both controllers combined
};

// Full record of one episode. States run 0..T, inputs 0..T-1; d_bar[t] is
// the estimate for the transition into x(t) (entry 0 empty, multi_stage all
// empty); violations has one row per state, columns are the model's g rows
// followed by the state-box rows.
struct ClosedLoopTrace {
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> z;
  std::vector<Eigen::VectorXd> u;
  std::vector<Eigen::VectorXd> v;  // primary root inputs; z propagates with these
  std::vector<Eigen::VectorXd> d_bar;
  Eigen::MatrixXd violations;
  std::vector<double> primary_ms;    // aligned with u; NaN where no solve ran
  std::vector<double> ancillary_ms;  // aligned with u
  EpisodeSummary summary;

  int steps() const { return static_cast<int>(u.size()); }
};

// Column labels for the violation rows: constraint names, then "x[i]" box
// rows.
std::vector<std::string> violation_labels(const ModelSpec& model);

// max(0, g_i(x, u)) for every model constraint followed by the state-box
// excess per dimension. u == nullptr marks input-dependent rows NaN (the
// terminal state has no input).
Eigen::VectorXd constraint_violations(const ModelSpec& model, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd* u);

// Reduce a trace's violation matrix and timings into the summary fields
// (max per row, counts above tol, time totals). Seed and grid bookkeeping
// stay untouched.
void summarize_trace(ClosedLoopTrace& trace, double tol = kViolationTol);

// Realization closest to d in Euclidean distance, lowest index on ties.
int nearest_realization(const RealizationSet& reals, const Eigen::VectorXd& d);

// One closed-loop episode. t=0 solves the primary from x0 and applies its
// root input directly; every later step measures, estimates the uncertainty
// over the last transition, propagates the primary state, re-solves the
// primary from it and tracks with the ancillary. Primary infeasibility ends
// the episode with the diagnostic in summary.error.
ClosedLoopTrace run_episode(const PlantSim& plant, const SchemeConfig& scheme,
                            const Eigen::VectorXd& x0, uint64_t seed);

// Uniform Cartesian grid over the parametric dimensions (declaration
// order). count 1 places the point at nominal, otherwise the bounds are
// included. seeds_per_point repeats each grid point with distinct derived
// seeds.
struct BatchGrid {
  std::vector<int> counts;
  int seeds_per_point = 1;

  int episodes(const UncertaintyDecl& decl) const;
  std::vector<Eigen::VectorXd> points(const UncertaintyDecl& decl) const;
};

// Template the batch runner stamps one PlantSim per episode from. Empty x0
// falls back to the model's default via the caller (kept explicit here).
struct PlantTemplate {
  std::shared_ptr<const ModelSpec> model;
  UncertaintyDecl uncertainty;
  AdditiveMode additive_mode = AdditiveMode::random;
  StopRule stop;
  Eigen::VectorXd x0;
};

// Runs one episode per grid point and repeat, each with seed
// derive_seed(master_seed, episode_index), dispatched over `workers`
// threads (<= 0 picks the hardware count). Episode errors land in the
// summary, they never abort the batch. on_trace, when set, is invoked from
// worker threads with each finished episode's trace; the callback must be
// thread safe. limit >= 0 keeps only the first `limit` episodes of the
// enumeration, with unchanged per-episode seeds.
std::vector<EpisodeSummary> run_batch_grid(
    const PlantTemplate& plant, const SchemeConfig& scheme, const BatchGrid& grid,
    uint64_t master_seed, int workers = 0,
    const std::function<void(const ClosedLoopTrace&)>& on_trace = nullptr,
    int limit = -1);

// One comparison row per scheme, reduced over the same grid and the same
// derived seeds so disturbance sequences match across schemes.
struct SchemeMetrics {
  std::string name;
  int scenarios = 0;
  int episodes = 0;
  int failed = 0;
  double avg_steps = 0.0;                // over completed episodes
  Eigen::VectorXi violating_episodes;    // per constraint row
  Eigen::VectorXd max_violation;         // per constraint row, batch-wide
  double avg_solve_ms = 0.0;             // per closed-loop iteration
};

struct ComparisonTable {
  std::vector<std::string> constraint_labels;
  std::vector<SchemeMetrics> rows;
};

SchemeMetrics reduce_batch(const std::string& name, int scenarios,
                           const std::vector<EpisodeSummary>& summaries);

ComparisonTable compare_schemes(const std::vector<SchemeConfig>& schemes,
                                const PlantTemplate& plant, const BatchGrid& grid,
                                uint64_t master_seed, int workers = 0);

}  // namespace tems
