// Python bindings for the operations a notebook actually wants: inspect the
// builtin models, count trees, round-trip configs, run single episodes and
// calibrate back-offs. Batch sweeps stay on the CLI where the thread pool
// and CSV writers live.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tems/calibration.hpp"
#include "tems/closed_loop.hpp"
#include "tems/config.hpp"
#include "tems/controllers.hpp"
#include "tems/model.hpp"
#include "tems/scenario_tree.hpp"

namespace py = pybind11;
using namespace tems;

namespace {

py::list intervals_to_py(const std::vector<Interval>& iv) {
  py::list out;
  for (const Interval& i : iv) out.append(py::make_tuple(i.lo, i.hi));
  return out;
}

std::vector<Interval> intervals_from_py(const std::vector<std::pair<double, double>>& v) {
  std::vector<Interval> out;
  out.reserve(v.size());
  for (const auto& [lo, hi] : v) out.push_back({lo, hi});
  return out;
}

// Stack a per-step vector series into one (rows x dim) array; rows whose
// vector is empty (no estimate, no input) become NaN.
Eigen::MatrixXd stack_series(const std::vector<Eigen::VectorXd>& series, int dim) {
  Eigen::MatrixXd out(static_cast<int>(series.size()), dim);
  out.setConstant(std::numeric_limits<double>::quiet_NaN());
  for (size_t t = 0; t < series.size(); ++t)
    if (series[t].size() == dim) out.row(static_cast<int>(t)) = series[t];
  return out;
}

py::dict model_info(const std::string& name) {
  const BuiltinModel b = make_builtin_model(name);
  py::dict d;
  d["name"] = b.model.name;
  d["n_x"] = b.model.n_x;
  d["n_u"] = b.model.n_u;
  d["n_d"] = b.model.n_d;
  d["dt"] = b.model.dt;
  d["state_bounds"] = intervals_to_py(b.model.state_bounds);
  d["input_bounds"] = intervals_to_py(b.model.input_bounds);
  py::list cons;
  for (const ConstraintFn& c : b.model.constraints) {
    py::dict e;
    e["name"] = c.name;
    e["uses_input"] = c.uses_input;
    cons.append(e);
  }
  d["constraints"] = cons;
  py::dict u;
  u["nominal"] = b.uncertainty.nominal;
  u["lower"] = b.uncertainty.lower;
  u["upper"] = b.uncertainty.upper;
  u["significant"] = b.uncertainty.significant;
  u["additive"] = b.uncertainty.additive;
  d["uncertainty"] = u;
  d["default_initial_state"] = b.default_initial_state;
  return d;
}

py::dict delta_to_py(const DeltaSpec& delta) {
  py::dict d;
  d["state_lo"] = delta.state_lo;
  d["state_hi"] = delta.state_hi;
  d["input_lo"] = delta.input_lo;
  d["input_hi"] = delta.input_hi;
  d["g"] = delta.g;
  return d;
}

py::dict run_one(const std::string& config_text, const std::string& scheme_name,
                 std::optional<uint64_t> seed,
                 std::optional<Eigen::VectorXd> true_parametric,
                 std::optional<Eigen::VectorXd> x0) {
  const Experiment exp = build_experiment(parse_config(config_text));
  const SchemeConfig& scheme =
      scheme_name.empty() ? exp.schemes.front() : exp.scheme(scheme_name);

  PlantSim plant;
  plant.model = exp.plant.model;
  plant.uncertainty = exp.plant.uncertainty;
  plant.additive_mode = exp.plant.additive_mode;
  plant.stop = exp.plant.stop;
  plant.true_parametric =
      true_parametric ? *true_parametric : exp.plant.uncertainty.nominal;

  const ClosedLoopTrace tr = run_episode(plant, scheme, x0 ? *x0 : exp.plant.x0,
                                         seed ? *seed : exp.seed);

  const ModelSpec& m = *exp.plant.model;
  py::dict d;
  d["scheme"] = scheme.name;
  d["steps"] = tr.summary.steps;
  d["reached_target"] = tr.summary.reached_target;
  d["error"] = tr.summary.error;
  d["solves"] = tr.summary.solves;
  d["sqp_iterations"] = tr.summary.sqp_iterations;
  d["violation_labels"] = violation_labels(m);
  d["max_violation"] = tr.summary.max_violation;
  d["violating_steps"] = tr.summary.violating_steps;
  d["x"] = stack_series(tr.x, m.n_x);
  d["z"] = stack_series(tr.z, m.n_x);
  d["u"] = stack_series(tr.u, m.n_u);
  d["v"] = stack_series(tr.v, m.n_u);
  d["d_bar"] = stack_series(tr.d_bar, m.n_d);
  return d;
}

py::dict calibrate(const std::string& config_text, const std::string& scheme_name) {
  const Experiment exp = build_experiment(parse_config(config_text));
  const SchemeConfig& scheme =
      scheme_name.empty() ? exp.schemes.front() : exp.scheme(scheme_name);
  if (scheme.kind == SchemeKind::multi_stage)
    throw std::invalid_argument("multi_stage runs untightened, nothing to calibrate");
  const SchemeConfig untight = apply_delta(scheme, DeltaSpec::zeros(*exp.model));
  const TighteningReport rep =
      calibrate_tightening(untight, exp.plant, exp.calibration_grid, exp.calibration);
  py::dict d;
  d["delta"] = delta_to_py(rep.delta);
  d["delta_initial"] = delta_to_py(rep.delta_initial);
  d["rounds"] = rep.rounds;
  d["episodes"] = rep.episodes;
  d["failed"] = rep.failed;
  d["clean"] = rep.verification.clean();
  d["baseline_g_max"] = rep.baseline_g_max;
  d["baseline_state_lo_max"] = rep.baseline_state_lo_max;
  d["baseline_state_hi_max"] = rep.baseline_state_hi_max;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "tube-enhanced multi-stage NMPC core";

  m.def("builtin_models", &builtin_model_names,
        "Names accepted by model_info and the config 'model' field.");
  m.def("model_info", &model_info, py::arg("name"),
        "Dimensions, bounds, constraints and uncertainty of a builtin model.");

  m.def("state_node_count", &state_node_count, py::arg("scenarios"),
        py::arg("horizon"), py::arg("robust_horizon"),
        "Tree state nodes, sum over stages of s^min(k, N_R).");
  m.def("naive_scenario_count", &naive_scenario_count, py::arg("values_per_dim"),
        py::arg("n_dims"), py::arg("robust_horizon"),
        "Scenario count when every uncertainty dimension branches separately.");

  m.def(
      "tighten_intervals",
      [](const std::vector<std::pair<double, double>>& bounds,
         const Eigen::VectorXd& lo_delta, const Eigen::VectorXd& hi_delta) {
        return intervals_to_py(tighten_intervals(intervals_from_py(bounds), lo_delta, hi_delta));
      },
      py::arg("bounds"), py::arg("lo_delta"), py::arg("hi_delta"),
      "[a, b] with back-offs (lo, hi) becomes [a + lo, b - hi].");

  m.def(
      "canonical_config",
      [](const std::string& text) { return dump_config(parse_config(text)); },
      py::arg("text"), "Parse a config and return its canonical serialization.");
  m.def(
      "config_hash",
      [](const std::string& text) { return config_hash_hex(parse_config(text)); },
      py::arg("text"), "Hex hash of the canonical form, as stamped into outputs.");
  m.def(
      "config_scenario_count",
      [](const std::string& text) { return config_scenario_count(parse_config(text)); },
      py::arg("text"), "Primary-tree scenario count the config describes.");

  m.def("run_episode", &run_one, py::arg("config_text"), py::arg("scheme") = "",
        py::arg("seed") = std::nullopt, py::arg("true_parametric") = std::nullopt,
        py::arg("x0") = std::nullopt,
        "One closed-loop episode; returns the summary plus x/z/u/v/d_bar arrays "
        "(NaN rows where a series has no entry). scheme defaults to the config's "
        "first one.");
  m.def("calibrate", &calibrate, py::arg("config_text"), py::arg("scheme") = "",
        "Iterative constraint-tightening calibration on the config's "
        "calibration grid; returns the recommended delta and pass statistics.");
}
