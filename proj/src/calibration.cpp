#include "tems/calibration.hpp"

#include <cmath>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace tems {

namespace {

bool has_additive(const UncertaintyDecl& decl) {
  for (bool a : decl.additive)
    if (a) return true;
  return false;
}

// One grid pass: every additive mode (extremes only matter when additive
// dimensions exist), reduced into counts plus side-resolved maxima.
struct PassResult {
  VerificationReport counts;
  Eigen::VectorXd g_max, lo_max, hi_max;
};

PassResult run_pass(const SchemeConfig& scheme, const PlantTemplate& plant,
                    const BatchGrid& grid, uint64_t seed, int workers) {
  const ModelSpec& model = *plant.model;
  const int n_c = static_cast<int>(model.constraints.size());
  const int rows = n_c + model.n_x;

  PassResult pass;
  pass.counts.violating_episodes = Eigen::VectorXi::Zero(rows);
  pass.counts.violating_steps = Eigen::VectorXi::Zero(rows);
  pass.counts.max_violation = Eigen::VectorXd::Zero(rows);
  pass.g_max = Eigen::VectorXd::Zero(n_c);
  pass.lo_max = Eigen::VectorXd::Zero(model.n_x);
  pass.hi_max = Eigen::VectorXd::Zero(model.n_x);

  std::vector<AdditiveMode> modes = {AdditiveMode::random};
  if (has_additive(plant.uncertainty)) {
    modes.push_back(AdditiveMode::all_lower);
    modes.push_back(AdditiveMode::all_upper);
  }

  std::mutex mu;
  auto on_trace = [&](const ClosedLoopTrace& tr) {
    // Side-resolved state-box excess; the trace's violation matrix only
    // keeps the per-dimension maximum of the two sides.
    Eigen::VectorXd lo = Eigen::VectorXd::Zero(model.n_x);
    Eigen::VectorXd hi = Eigen::VectorXd::Zero(model.n_x);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_c);
    for (const Eigen::VectorXd& x : tr.x) {
      for (int i = 0; i < model.n_x; ++i) {
        const Interval& b = model.state_bounds[i];
        if (std::isfinite(b.lo)) lo(i) = std::max(lo(i), b.lo - x(i));
        if (std::isfinite(b.hi)) hi(i) = std::max(hi(i), x(i) - b.hi);
      }
    }
    for (int r = 0; r < tr.violations.rows(); ++r)
      for (int c = 0; c < n_c; ++c)
        if (!std::isnan(tr.violations(r, c)))
          g(c) = std::max(g(c), tr.violations(r, c));

    std::lock_guard<std::mutex> lock(mu);
    pass.g_max = pass.g_max.cwiseMax(g);
    pass.lo_max = pass.lo_max.cwiseMax(lo);
    pass.hi_max = pass.hi_max.cwiseMax(hi);
  };

  for (size_t m = 0; m < modes.size(); ++m) {
    PlantTemplate tmpl = plant;
    tmpl.additive_mode = modes[m];
    std::vector<EpisodeSummary> batch = run_batch_grid(
        tmpl, scheme, grid, derive_seed(seed, m), workers, on_trace);
    for (const EpisodeSummary& s : batch) {
      ++pass.counts.episodes;
      if (!s.error.empty()) {
        ++pass.counts.failed;
        if (s.max_violation.size() == 0) continue;
      }
      for (int c = 0; c < rows && c < s.max_violation.size(); ++c) {
        if (s.violating_steps(c) > 0) ++pass.counts.violating_episodes(c);
        pass.counts.violating_steps(c) += s.violating_steps(c);
        pass.counts.max_violation(c) =
            std::max(pass.counts.max_violation(c), s.max_violation(c));
      }
    }
  }
  return pass;
}

DeltaSpec rounded_delta(const PassResult& pass, const ModelSpec& model, double safety,
                        double precision) {
  DeltaSpec d = DeltaSpec::zeros(model);
  for (int i = 0; i < d.g.size(); ++i)
    d.g(i) = round_up_delta(pass.g_max(i), safety, precision);
  for (int i = 0; i < model.n_x; ++i) {
    d.state_lo(i) = round_up_delta(pass.lo_max(i), safety, precision);
    d.state_hi(i) = round_up_delta(pass.hi_max(i), safety, precision);
  }
  return d;
}

void add_delta(DeltaSpec& into, const DeltaSpec& more) {
  into.state_lo += more.state_lo;
  into.state_hi += more.state_hi;
  into.input_lo += more.input_lo;
  into.input_hi += more.input_hi;
  into.g += more.g;
}

}  // namespace

double round_up_delta(double violation, double safety, double precision) {
  if (violation <= 0.0) return 0.0;
  if (precision <= 0.0) throw std::invalid_argument("round_up_delta: precision <= 0");
  const double q = safety * violation / precision;
  return std::ceil(q * (1.0 - 1e-12)) * precision;
}

SchemeConfig apply_delta(const SchemeConfig& scheme, const DeltaSpec& delta) {
  if (!scheme.prototype.model)
    throw std::invalid_argument("apply_delta: prototype has no model");
  SchemeConfig out = scheme;
  TightenedSets sets = make_tightened_sets(*scheme.prototype.model, delta);
  out.prototype.state_box = sets.state_box;
  out.prototype.input_box = sets.input_box;
  out.prototype.terminal_box = sets.terminal_box;
  out.prototype.g_delta = sets.g_delta;
  return out;
}

TighteningReport calibrate_tightening(const SchemeConfig& scheme_untightened,
                                      const PlantTemplate& plant,
                                      const BatchGrid& grid,
                                      const CalibrationOptions& opts) {
  if (!plant.model) throw std::invalid_argument("calibrate_tightening: no model");
  if (opts.max_rounds < 1)
    throw std::invalid_argument("calibrate_tightening: max_rounds < 1");
  const ModelSpec& model = *plant.model;

  TighteningReport report;
  report.safety_factor = opts.safety_factor;
  report.precision = opts.precision;
  DeltaSpec delta = DeltaSpec::zeros(model);

  for (int r = 0; r < opts.max_rounds; ++r) {
    const SchemeConfig s_r = apply_delta(scheme_untightened, delta);
    PassResult pass =
        run_pass(s_r, plant, grid, derive_seed(opts.master_seed, 7000 + r), opts.workers);
    report.rounds = r + 1;
    report.episodes += pass.counts.episodes;
    report.failed += pass.counts.failed;
    report.verification = pass.counts;

    if (r == 0) {
      report.baseline_g_max = pass.g_max;
      report.baseline_state_lo_max = pass.lo_max;
      report.baseline_state_hi_max = pass.hi_max;
      report.delta_initial =
          rounded_delta(pass, model, opts.safety_factor, opts.precision);
      if (pass.counts.clean()) break;  // nothing to tighten
      delta = report.delta_initial;
      continue;
    }
    if (pass.counts.clean()) break;
    // Stop on the last allowed round without enlarging, so the reported
    // delta is always the one the final verification ran with.
    if (r + 1 >= opts.max_rounds) break;
    add_delta(delta, rounded_delta(pass, model, opts.safety_factor, opts.precision));
  }
  report.delta = delta;
  return report;
}

VerificationReport verify_tightening(const SchemeConfig& scheme,
                                     const PlantTemplate& plant, const BatchGrid& grid,
                                     uint64_t master_seed, int workers) {
  if (!plant.model) throw std::invalid_argument("verify_tightening: no model");
  return run_pass(scheme, plant, grid, derive_seed(master_seed, 31), workers).counts;
}

}  // namespace tems
