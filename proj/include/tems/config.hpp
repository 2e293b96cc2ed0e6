#pragma once

// Experiment configuration: a strict JSON schema (unknown keys rejected,
// errors carry the field path) that builds into ready-to-run plant
// templates and scheme configs. Parsing only checks structure and local
// ranges; build_experiment does the cross-model dimension checks, so a
// config can be parsed, inspected and re-serialized even when it is not
// runnable against its model.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tems/calibration.hpp"
#include "tems/closed_loop.hpp"

namespace tems {

// Parse or build failure with the offending field path in what().
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct ExperimentConfig {
  std::string model = "benchmark_reactor";
  std::optional<double> dt;

  std::optional<UncertaintyDecl> uncertainty;  // overrides the builtin one

  int horizon = 10;
  int robust_horizon = 1;
  int values_per_dim = 3;  // 3: bounds + nominal, 2: bounds only

  std::vector<Interval> input_bounds;                 // required (this is U)
  std::optional<std::vector<Interval>> state_bounds;  // overrides X

  std::string cost_type = "economic";  // "economic" | "tracking"
  int product_index = 1;
  double product_weight = 1.0;
  Eigen::VectorXd move_penalties;  // per input dim; empty = zeros
  Eigen::VectorXd track_q, track_target;

  Eigen::VectorXd ancillary_Q, ancillary_R, ancillary_P;
  std::string ancillary_mode = "full_tree";  // | "nominal_only"

  std::string estimator_kind = "finite";  // | "box"
  Eigen::VectorXd estimator_W;            // diagonal; empty = none

  DeltaSpec delta;         // empty vectors mean zero backoff
  std::string delta_from;  // path to a tightening report; resolved by the CLI

  StopRule stop;

  BatchGrid grid;
  double safety_factor = 1.0;
  int max_rounds = 5;
  std::optional<BatchGrid> calibration_grid;  // defaults to `grid`

  std::vector<std::string> schemes = {"tems"};
  Eigen::VectorXd x0;  // empty = model default
  uint64_t seed = 1;
  std::string out_dir = "out";
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical serialization; parse(dump(c)) reproduces c field for field.
std::string dump_config(const ExperimentConfig& cfg);

// FNV-1a over the canonical dump; the provenance stamp in every output.
uint64_t config_hash(const ExperimentConfig& cfg);
std::string config_hash_hex(const ExperimentConfig& cfg);

// Scenario count of the primary tree this config describes,
// values_per_dim^(significant dims * N_R), without building anything.
long long config_scenario_count(const ExperimentConfig& cfg);

// Everything executable derived from a config. Schemes appear in config
// order; calibration options carry the config seed.
struct Experiment {
  std::shared_ptr<const ModelSpec> model;
  UncertaintyDecl uncertainty;
  PlantTemplate plant;
  std::vector<SchemeConfig> schemes;
  BatchGrid grid;
  BatchGrid calibration_grid;
  CalibrationOptions calibration;
  uint64_t seed = 1;
  std::string out_dir;

  const SchemeConfig& scheme(const std::string& name) const;
};

Experiment build_experiment(const ExperimentConfig& cfg);

}  // namespace tems
