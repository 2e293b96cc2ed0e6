#include <doctest.h>

#include <cmath>

#include "tems/calibration.hpp"

using namespace tems;

namespace {

// Scalar integrator pushed against a cap at 0.5 under additive noise the
// tree only covers at three points: the estimator mismatch (up to 0.125)
// makes the plant overshoot the plan, which is exactly what calibration has
// to absorb.
struct CapRig {
  std::shared_ptr<ModelSpec> model;
  std::shared_ptr<ScenarioTree> tree;
  SchemeConfig scheme;
  PlantTemplate tmpl;

  explicit CapRig(bool cap_as_g_row, bool frozen = false) {
    BuiltinModel b = make_builtin_model("scalar_linear");
    if (cap_as_g_row) {
      b.model.add_constraint("cap", false,
                             [](const auto& x, const auto&) { return x[0] - 0.5; });
    } else {
      b.model.state_bounds = {Interval{-kInf, 0.5}};
    }
    if (frozen) {
      b.uncertainty.lower.setZero();
      b.uncertainty.upper.setZero();
      b.uncertainty.additive = {false};
    }
    model = std::make_shared<ModelSpec>(b.model);
    tree = std::make_shared<ScenarioTree>(
        ScenarioTree::build(sample_box_vertices(b.uncertainty), 3, 1));

    TreeOcp& p = scheme.prototype;
    p.tree = tree;
    p.model = model;
    p.set_stage_cost([](int, const auto& z, const auto& v, const auto&) {
      return -z[0] + 0.01 * square(v[0]);
    });
    p.state_box = model->state_bounds;
    p.input_box = model->input_bounds;

    scheme.ancillary.Q = Eigen::VectorXd::Ones(1);
    scheme.ancillary.R = Eigen::VectorXd::Constant(1, 5.0);  // sloppy tracking on purpose
    scheme.ancillary.P = Eigen::VectorXd::Ones(1);

    tmpl.model = model;
    tmpl.uncertainty = b.uncertainty;
    tmpl.stop.max_steps = 12;
    tmpl.x0 = Eigen::VectorXd::Zero(1);
  }
};

BatchGrid small_grid() {
  BatchGrid g;  // the scalar uncertainty is purely additive: no counts
  g.seeds_per_point = 6;
  return g;
}

}  // namespace

TEST_CASE("delta rounding goes up at the configured precision") {
  CHECK(round_up_delta(0.3, 1.0, 1e-9) == doctest::Approx(0.3).epsilon(1e-8));
  CHECK(round_up_delta(0.3, 1.0, 1e-9) >= 0.3 - 1e-15);
  CHECK(round_up_delta(0.3, 1.5, 1e-9) == doctest::Approx(0.45).epsilon(1e-8));
  CHECK(round_up_delta(0.0, 1.5, 1e-9) == 0.0);
  CHECK(round_up_delta(-1.0, 1.5, 1e-9) == 0.0);
  // Exact grid hits stay put, everything else moves to the next step.
  CHECK(round_up_delta(5e-9, 1.0, 1e-9) == doctest::Approx(5e-9).epsilon(1e-6));
  CHECK(round_up_delta(0.0123, 1.0, 1e-3) == doctest::Approx(0.013));
  CHECK(round_up_delta(1e-15, 1.0, 1e-9) == doctest::Approx(1e-9));
}

TEST_CASE("apply_delta rebuilds the sets from the originals") {
  CapRig rig(false);
  DeltaSpec d = DeltaSpec::zeros(*rig.model);
  d.state_hi(0) = 0.1;

  SchemeConfig tightened = apply_delta(rig.scheme, d);
  CHECK(tightened.prototype.state_box[0].hi == doctest::Approx(0.4));
  CHECK(tightened.prototype.state_box[0].lo == -kInf);
  CHECK(tightened.prototype.input_box[0].lo == -1.0);
  CHECK(tightened.prototype.input_box[0].hi == 1.0);
  CHECK(tightened.prototype.terminal_box[0].hi == doctest::Approx(0.4));

  // Applying to the already tightened scheme does not compound: the deltas
  // are absolute against the model's original sets.
  SchemeConfig again = apply_delta(tightened, d);
  CHECK(again.prototype.state_box[0].hi == doctest::Approx(0.4));
}

TEST_CASE("calibration reports are reproducible and arithmetically consistent") {
  CapRig rig(false);
  CalibrationOptions opts;
  opts.max_rounds = 1;
  opts.master_seed = 42;

  TighteningReport rep = calibrate_tightening(rig.scheme, rig.tmpl, small_grid(), opts);
  CHECK(rep.rounds == 1);
  CHECK(rep.episodes == 18);  // 6 seeds, three additive modes
  CHECK(rep.failed == 0);
  REQUIRE(rep.baseline_state_hi_max(0) > 1e-3);  // the cap really gets hit
  CHECK(rep.baseline_state_lo_max(0) == 0.0);
  CHECK(rep.delta.state_hi(0) ==
        round_up_delta(rep.baseline_state_hi_max(0), 1.0, 1e-9));
  CHECK(std::abs(rep.delta.state_hi(0) - rep.baseline_state_hi_max(0)) <= 1e-9);
  CHECK(rep.delta_initial.state_hi(0) == rep.delta.state_hi(0));

  TighteningReport rerun =
      calibrate_tightening(rig.scheme, rig.tmpl, small_grid(), opts);
  CHECK(rerun.baseline_state_hi_max(0) == rep.baseline_state_hi_max(0));
  CHECK(rerun.delta.state_hi(0) == rep.delta.state_hi(0));
  CHECK(rerun.verification.violating_steps == rep.verification.violating_steps);

  // A different safety factor reuses the identical baseline pass.
  opts.safety_factor = 1.5;
  TighteningReport wide = calibrate_tightening(rig.scheme, rig.tmpl, small_grid(), opts);
  CHECK(wide.baseline_state_hi_max(0) == rep.baseline_state_hi_max(0));
  CHECK(wide.delta_initial.state_hi(0) ==
        round_up_delta(rep.baseline_state_hi_max(0), 1.5, 1e-9));
}

TEST_CASE("iterative calibration backs the primary off monotonically") {
  CapRig rig(false);
  CalibrationOptions opts;
  opts.max_rounds = 5;
  opts.safety_factor = 1.25;
  opts.master_seed = 42;

  TighteningReport rep = calibrate_tightening(rig.scheme, rig.tmpl, small_grid(), opts);
  CHECK(rep.delta.state_hi(0) >= rep.delta_initial.state_hi(0));
  CHECK(rep.rounds >= 2);

  // Fresh seeds: untightened baseline violates, tightened does not exceed
  // it anywhere, per constraint row.
  VerificationReport base =
      verify_tightening(rig.scheme, rig.tmpl, small_grid(), 777);
  VerificationReport tight = verify_tightening(apply_delta(rig.scheme, rep.delta),
                                               rig.tmpl, small_grid(), 777);
  REQUIRE(base.violating_steps.maxCoeff() > 0);
  for (int c = 0; c < base.max_violation.size(); ++c)
    CHECK(tight.max_violation(c) <= base.max_violation(c));
  CHECK(tight.max_violation(0) < base.max_violation(0));
}

TEST_CASE("undersized delta shows up in the verification counts") {
  CapRig rig(false);
  CalibrationOptions opts;
  opts.max_rounds = 5;
  opts.safety_factor = 1.25;
  opts.master_seed = 42;
  TighteningReport rep = calibrate_tightening(rig.scheme, rig.tmpl, small_grid(), opts);

  DeltaSpec half = rep.delta;
  half.state_hi *= 0.5;
  VerificationReport halved = verify_tightening(apply_delta(rig.scheme, half),
                                                rig.tmpl, small_grid(), 777);
  CHECK(!halved.clean());
  CHECK(halved.violating_steps(0) > 0);
}

TEST_CASE("scalar constraint rows calibrate through g_delta") {
  CapRig rig(true);
  CalibrationOptions opts;
  opts.max_rounds = 3;
  opts.master_seed = 42;

  TighteningReport rep = calibrate_tightening(rig.scheme, rig.tmpl, small_grid(), opts);
  CHECK(rep.baseline_g_max(0) > 0.0);
  CHECK(rep.delta.g(0) > 0.0);
  CHECK(rep.delta.state_hi(0) == 0.0);  // the cap lives in the g row here

  SchemeConfig tightened = apply_delta(rig.scheme, rep.delta);
  CHECK(tightened.prototype.g_delta(0) == rep.delta.g(0));
}

TEST_CASE("zero uncertainty calibrates to zero backoff") {
  CapRig rig(false, true);
  CalibrationOptions opts;
  opts.master_seed = 3;

  BatchGrid grid;  // frozen d is parametric, so the grid needs one count
  grid.counts = {1};
  grid.seeds_per_point = 4;
  TighteningReport rep = calibrate_tightening(rig.scheme, rig.tmpl, grid, opts);
  CHECK(rep.rounds == 1);
  CHECK(rep.delta.state_hi(0) == 0.0);
  CHECK(rep.delta.g.size() == 0);
  CHECK(rep.verification.clean());
  CHECK(rep.baseline_state_hi_max(0) <= 1e-9);
}
