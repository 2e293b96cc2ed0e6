#pragma once

// Simulation-based constraint tightening. Run the closed loop with the
// primary on the ORIGINAL sets, record the worst violation of every
// original constraint over an uncertainty grid with extreme and random
// additive sequences, back off by safety_factor times that maximum (rounded
// up at a fixed precision), then re-run and enlarge until the violations
// disappear or the round budget runs out.

#include <Eigen/Core>

#include <cstdint>

#include "tems/closed_loop.hpp"
#include "tems/controllers.hpp"

namespace tems {

struct CalibrationOptions {
  double safety_factor = 1.0;
  double precision = 1e-9;  // rounding grid for the deltas
  int max_rounds = 5;       // total closed-loop grid passes, baseline included
  uint64_t master_seed = 1;
  int workers = 0;
};

// Violation counts against the original constraints after a grid of
// episodes. Rows follow violation_labels: g rows, then state-box rows.
struct VerificationReport {
  Eigen::VectorXi violating_episodes;
  Eigen::VectorXi violating_steps;
  Eigen::VectorXd max_violation;
  int episodes = 0;
  int failed = 0;

  bool clean() const {
    return violating_steps.size() == 0 || violating_steps.maxCoeff() == 0;
  }
};

struct TighteningReport {
  // Worst violations of the untightened baseline pass, side-resolved for
  // the state box.
  Eigen::VectorXd baseline_g_max;
  Eigen::VectorXd baseline_state_lo_max;
  Eigen::VectorXd baseline_state_hi_max;

  DeltaSpec delta_initial;  // safety_factor * baseline, rounded up
  // Final recommendation. With max_rounds >= 2 the last pass ran with this
  // delta applied; max_rounds 1 returns the classic single-pass result
  // without a confirming rerun.
  DeltaSpec delta;
  double safety_factor = 1.0;
  double precision = 1e-9;
  int rounds = 0;    // passes actually run
  int episodes = 0;  // across all rounds and additive modes
  int failed = 0;

  // Outcome of the last pass, which ran with `delta` applied (with
  // max_rounds 1 it is the baseline pass under delta zero).
  VerificationReport verification;
};

// Smallest multiple of `precision` at or above safety * violation (up to
// one part in 1e12, so exact grid hits do not round an extra step up).
double round_up_delta(double violation, double safety, double precision);

// Rebuild the scheme's primary sets from the model's original ones
// tightened by `delta`; replaces state, input, terminal boxes and g_delta.
SchemeConfig apply_delta(const SchemeConfig& scheme, const DeltaSpec& delta);

// The scheme must come in untightened (original sets, zero g_delta); the
// report's delta is ready for apply_delta. Episode failures are counted,
// never fatal.
TighteningReport calibrate_tightening(const SchemeConfig& scheme_untightened,
                                      const PlantTemplate& plant,
                                      const BatchGrid& grid,
                                      const CalibrationOptions& opts = {});

// Re-run a (tightened) scheme on the grid with fresh seeds and report
// per-constraint counts against the original sets. Uses the extreme
// additive modes plus the random one, like calibration.
VerificationReport verify_tightening(const SchemeConfig& scheme,
                                     const PlantTemplate& plant, const BatchGrid& grid,
                                     uint64_t master_seed, int workers = 0);

}  // namespace tems
