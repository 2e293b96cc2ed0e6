#include <doctest.h>

#include <cmath>
#include <string>

#include "tems/config.hpp"

using namespace tems;

namespace {

// A complete, runnable reactor experiment; individual tests patch pieces of
// this via string replacement.
const char* kReactorJson = R"({
  "model": "benchmark_reactor",
  "dt": 0.1,
  "tree": {"horizon": 10, "robust_horizon": 1, "values_per_dim": 3},
  "bounds": {"input": [[0.0, 2.0]]},
  "cost": {"type": "economic", "product_index": 1, "product_weight": 1.0,
           "move_penalties": [0.1]},
  "ancillary": {"Q": [10.0, 0.0], "R": [1.0], "P": [10.0, 0.0]},
  "estimator": {"kind": "finite"},
  "delta": {"g": [0.05]},
  "episode": {"max_steps": 40, "stop_state": 1, "stop_threshold": 0.8},
  "grid": {"counts": [10], "seeds_per_point": 10},
  "calibration": {"safety_factor": 1.25, "max_rounds": 5,
                  "grid": {"counts": [5], "seeds_per_point": 4}},
  "schemes": ["tems", "multi_stage", "tube"],
  "seed": 1,
  "out_dir": "out"
})";

std::string replaced(const std::string& text, const std::string& from,
                     const std::string& to) {
  std::string out = text;
  const size_t pos = out.find(from);
  REQUIRE(pos != std::string::npos);
  out.replace(pos, from.size(), to);
  return out;
}

std::string path_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

}  // namespace

TEST_CASE("config: full reactor experiment parses with every field") {
  ExperimentConfig cfg = parse_config(kReactorJson);
  CHECK(cfg.model == "benchmark_reactor");
  CHECK(cfg.dt.has_value());
  CHECK(cfg.horizon == 10);
  CHECK(cfg.robust_horizon == 1);
  CHECK(cfg.values_per_dim == 3);
  REQUIRE(cfg.input_bounds.size() == 1);
  CHECK(cfg.input_bounds[0].lo == 0.0);
  CHECK(cfg.input_bounds[0].hi == 2.0);
  CHECK(cfg.cost_type == "economic");
  CHECK(cfg.product_index == 1);
  CHECK(cfg.move_penalties.size() == 1);
  CHECK(cfg.ancillary_Q.size() == 2);
  CHECK(cfg.delta.g.size() == 1);
  CHECK(cfg.stop.state_index == 1);
  CHECK(cfg.stop.threshold == 0.8);
  CHECK(cfg.grid.counts == std::vector<int>{10});
  CHECK(cfg.grid.seeds_per_point == 10);
  REQUIRE(cfg.calibration_grid.has_value());
  CHECK(cfg.calibration_grid->counts == std::vector<int>{5});
  CHECK(cfg.safety_factor == 1.25);
  CHECK(cfg.schemes.size() == 3);
  CHECK(cfg.seed == 1);
}

TEST_CASE("config: round trip through dump is the identity") {
  ExperimentConfig cfg = parse_config(kReactorJson);
  const std::string once = dump_config(cfg);
  ExperimentConfig cfg2 = parse_config(once);
  const std::string twice = dump_config(cfg2);
  CHECK(once == twice);
  CHECK(config_hash(cfg) == config_hash(cfg2));

  // Minimal config: optional blocks absent on both sides of the trip.
  ExperimentConfig mini = parse_config(
      R"({"model": "scalar_linear", "tree": {"horizon": 3},
          "bounds": {"input": [[-1, 1]]}})");
  CHECK(dump_config(mini) == dump_config(parse_config(dump_config(mini))));
  CHECK_FALSE(mini.dt.has_value());
  CHECK_FALSE(mini.calibration_grid.has_value());
}

TEST_CASE("config: hash is stable and sensitive") {
  ExperimentConfig a = parse_config(kReactorJson);
  ExperimentConfig b = parse_config(kReactorJson);
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash_hex(a).size() == 16);

  b.seed = 2;
  CHECK(config_hash(a) != config_hash(b));
  ExperimentConfig c = parse_config(replaced(kReactorJson, "\"horizon\": 10",
                                             "\"horizon\": 11"));
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("config: scenario count comes from the declaration alone") {
  // Two significant dimensions with three values each branch into nine
  // scenarios per robust stage.
  const std::string two_sig = R"({
    "model": "benchmark_reactor",
    "uncertainty": {
      "nominal": [1.0, 0.0], "lower": [0.5, -0.01], "upper": [1.5, 0.01],
      "significant": [true, true], "additive": [false, true]},
    "tree": {"horizon": 20, "robust_horizon": 1, "values_per_dim": 3},
    "bounds": {"input": [[0.0, 2.0]]}
  })";
  ExperimentConfig cfg = parse_config(two_sig);
  CHECK(config_scenario_count(cfg) == 9);

  cfg.robust_horizon = 2;
  CHECK(config_scenario_count(cfg) == 81);
  cfg.robust_horizon = 0;
  CHECK(config_scenario_count(cfg) == 1);

  // Builtin declaration: one significant dimension.
  ExperimentConfig base = parse_config(kReactorJson);
  CHECK(config_scenario_count(base) == 3);
  base.values_per_dim = 2;
  CHECK(config_scenario_count(base) == 2);
}

TEST_CASE("config: missing required keys name the field") {
  CHECK(path_of(R"({"tree": {"horizon": 3}, "bounds": {"input": [[0, 1]]}})") ==
        "model");
  CHECK(path_of(R"({"model": "scalar_linear", "bounds": {"input": [[0, 1]]}})") ==
        "tree");
  CHECK(path_of(R"({"model": "scalar_linear", "tree": {}, "bounds":
                    {"input": [[0, 1]]}})") == "tree.horizon");
  CHECK(path_of(R"({"model": "scalar_linear", "tree": {"horizon": 3}})") == "bounds");
  CHECK(path_of(R"({"model": "scalar_linear", "tree": {"horizon": 3},
                    "bounds": {}})") == "bounds.input");

  try {
    parse_config(R"({"model": "scalar_linear", "tree": {"horizon": 3}, "bounds": {}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bounds.input") != std::string::npos);
  }
}

TEST_CASE("config: unknown keys are rejected with their path") {
  CHECK(path_of(replaced(kReactorJson, "\"seed\": 1", "\"sede\": 1")) == "sede");
  CHECK(path_of(replaced(kReactorJson, "\"robust_horizon\": 1",
                         "\"robust_horizont\": 1")) == "tree.robust_horizont");
  CHECK(path_of(replaced(kReactorJson, "\"kind\": \"finite\"",
                         "\"type\": \"finite\"")) == "estimator.type");
  CHECK(path_of(replaced(kReactorJson, "\"safety_factor\": 1.25",
                         "\"safety\": 1.25")) == "calibration.safety");
}

TEST_CASE("config: local value checks at parse time") {
  CHECK(path_of(replaced(kReactorJson, "\"model\": \"benchmark_reactor\"",
                         "\"model\": \"polymerization\"")) == "model");
  CHECK(path_of(replaced(kReactorJson, "\"values_per_dim\": 3",
                         "\"values_per_dim\": 4")) == "tree.values_per_dim");
  CHECK(path_of(replaced(kReactorJson, "\"robust_horizon\": 1",
                         "\"robust_horizon\": 11")) == "tree.robust_horizon");
  CHECK(path_of(replaced(kReactorJson, "[[0.0, 2.0]]", "[[0.0, null]]")) ==
        "bounds.input[0]");
  CHECK(path_of(replaced(kReactorJson, "[[0.0, 2.0]]", "[[2.0, 0.0]]")) ==
        "bounds.input[0]");
  CHECK(path_of(replaced(kReactorJson, "\"schemes\": [\"tems\", \"multi_stage\", \"tube\"]",
                         "\"schemes\": [\"tems\", \"tems\"]")) == "schemes[1]");
  CHECK(path_of(replaced(kReactorJson, "\"schemes\": [\"tems\", \"multi_stage\", \"tube\"]",
                         "\"schemes\": [\"lqr\"]")) == "schemes[0]");
  CHECK(path_of(replaced(kReactorJson, "\"seed\": 1", "\"seed\": -3")) == "seed");
  CHECK(path_of(replaced(kReactorJson, "\"counts\": [10]", "\"counts\": [0]")) ==
        "grid.counts[0]");
  CHECK(path_of("not json at all") == "$");
  CHECK(path_of(replaced(kReactorJson, "\"delta\": {\"g\": [0.05]}",
                         "\"delta\": {\"g\": [0.05]}, \"delta_from\": \"t.json\"")) ==
        "delta_from");

  // Cost keys are mode-specific in both directions.
  CHECK(path_of(replaced(kReactorJson, "\"product_weight\": 1.0",
                         "\"product_weight\": 1.0, \"q\": [1, 1]")) == "cost.q");
  const std::string tracking = replaced(
      kReactorJson, "\"type\": \"economic\", \"product_index\": 1, \"product_weight\": 1.0",
      "\"type\": \"tracking\", \"q\": [1.0, 1.0], \"target\": [0.0, 0.8]");
  CHECK(parse_config(tracking).track_q.size() == 2);
  CHECK(path_of(replaced(tracking, "\"target\": [0.0, 0.8]",
                         "\"target\": [0.0, 0.8], \"product_index\": 1")) ==
        "cost.product_index");
}

TEST_CASE("config: build cross-checks run against the model, not at parse") {
  // Three input bounds on a one-input model: parses and round-trips fine,
  // refuses to build. This keeps foreign-plant fixtures readable even
  // though no builtin implements them.
  const std::string three_inputs =
      replaced(kReactorJson, "\"input\": [[0.0, 2.0]]",
               "\"input\": [[0.0, 2.0], [0.0, 1.0], [0.0, 1.0]]");
  ExperimentConfig cfg = parse_config(three_inputs);
  CHECK(dump_config(cfg) == dump_config(parse_config(dump_config(cfg))));
  CHECK_THROWS_WITH_AS(build_experiment(cfg), doctest::Contains("bounds.input"),
                       ConfigError);

  ExperimentConfig bad_dt = parse_config(replaced(kReactorJson, "\"dt\": 0.1",
                                                  "\"dt\": 50.0"));
  CHECK_THROWS_WITH_AS(build_experiment(bad_dt), doctest::Contains("dt"), ConfigError);

  ExperimentConfig bad_move = parse_config(replaced(
      kReactorJson, "\"move_penalties\": [0.1]", "\"move_penalties\": [0.1, 0.2]"));
  CHECK_THROWS_WITH_AS(build_experiment(bad_move),
                       doctest::Contains("cost.move_penalties"), ConfigError);

  ExperimentConfig bad_q = parse_config(replaced(kReactorJson, "\"Q\": [10.0, 0.0]",
                                                 "\"Q\": [10.0]"));
  CHECK_THROWS_WITH_AS(build_experiment(bad_q), doctest::Contains("ancillary.Q"),
                       ConfigError);

  ExperimentConfig bad_stop = parse_config(replaced(kReactorJson, "\"stop_state\": 1",
                                                    "\"stop_state\": 5"));
  CHECK_THROWS_WITH_AS(build_experiment(bad_stop),
                       doctest::Contains("episode.stop_state"), ConfigError);

  ExperimentConfig bad_counts = parse_config(replaced(kReactorJson, "\"counts\": [10]",
                                                      "\"counts\": [10, 10]"));
  CHECK_THROWS_WITH_AS(build_experiment(bad_counts), doctest::Contains("grid.counts"),
                       ConfigError);
}

TEST_CASE("config: build assembles the three schemes") {
  Experiment exp = build_experiment(parse_config(kReactorJson));
  CHECK(exp.model->n_x == 2);
  CHECK(exp.model->input_bounds[0].hi == 2.0);
  CHECK(exp.plant.x0 == Eigen::VectorXd::Zero(2));
  CHECK(exp.plant.stop.state_index == 1);
  CHECK(exp.grid.counts == std::vector<int>{10});
  CHECK(exp.calibration_grid.counts == std::vector<int>{5});
  CHECK(exp.calibration.safety_factor == 1.25);
  CHECK(exp.calibration.master_seed == 1);
  REQUIRE(exp.schemes.size() == 3);

  const SchemeConfig& tems = exp.scheme("tems");
  const SchemeConfig& ms = exp.scheme("multi_stage");
  const SchemeConfig& tube = exp.scheme("tube");
  CHECK(tems.kind == SchemeKind::tems);
  CHECK(tems.prototype.tree->num_scenarios() == 3);
  CHECK(ms.prototype.tree->num_scenarios() == 9);  // branches w as well
  CHECK(tube.prototype.tree->num_scenarios() == 1);

  // The configured back-off lands on tems and tube, never on multi-stage.
  REQUIRE(tems.prototype.g_delta.size() == 1);
  CHECK(tems.prototype.g_delta(0) == 0.05);
  CHECK(tube.prototype.g_delta(0) == 0.05);
  CHECK(ms.prototype.g_delta(0) == 0.0);
  CHECK(ms.prototype.input_box[0].hi == 2.0);

  // Tube propagates nominally regardless of the configured estimator.
  ExperimentConfig boxed = parse_config(replaced(kReactorJson, "\"kind\": \"finite\"",
                                                 "\"kind\": \"box\""));
  Experiment exp2 = build_experiment(boxed);
  CHECK(exp2.scheme("tems").estimator.kind == EstimatorKind::box);
  CHECK(exp2.scheme("tube").estimator.kind == EstimatorKind::finite);
  CHECK(exp2.scheme("tube").prototype.tree->realizations().size() == 1);

  CHECK_THROWS_AS(exp.scheme("lqr"), std::out_of_range);
}

TEST_CASE("config: defaults fill in for omitted blocks") {
  ExperimentConfig cfg = parse_config(
      R"({"model": "benchmark_reactor", "tree": {"horizon": 5},
          "bounds": {"input": [[0, 2]]}})");
  CHECK(cfg.schemes == std::vector<std::string>{"tems"});
  CHECK(cfg.stop.max_steps == 40);
  CHECK(cfg.stop.state_index == -1);
  CHECK(cfg.grid.seeds_per_point == 1);
  CHECK(cfg.out_dir == "out");

  Experiment exp = build_experiment(cfg);
  REQUIRE(exp.schemes.size() == 1);
  const SchemeConfig& s = exp.schemes[0];
  CHECK(s.ancillary.Q == Eigen::VectorXd::Ones(2));
  CHECK(s.ancillary.R == Eigen::VectorXd::Ones(1));
  CHECK(s.ancillary.P == Eigen::VectorXd::Ones(2));
  CHECK(s.estimator.W.size() == 0);
  CHECK(s.prototype.g_delta(0) == 0.0);
  // Omitted grid counts default to the nominal point per parametric dim.
  CHECK(exp.grid.counts == std::vector<int>{1});
  CHECK(exp.grid.episodes(exp.uncertainty) == 1);
}

TEST_CASE("config: state bounds override with null as infinity") {
  const std::string with_state = replaced(
      kReactorJson, "\"bounds\": {\"input\": [[0.0, 2.0]]}",
      "\"bounds\": {\"input\": [[0.0, 2.0]], \"state\": [[null, 1.0], [0.0, null]]}");
  ExperimentConfig cfg = parse_config(with_state);
  REQUIRE(cfg.state_bounds.has_value());
  CHECK((*cfg.state_bounds)[0].lo == -kInf);
  CHECK((*cfg.state_bounds)[0].hi == 1.0);
  CHECK((*cfg.state_bounds)[1].hi == kInf);
  CHECK(dump_config(cfg) == dump_config(parse_config(dump_config(cfg))));

  Experiment exp = build_experiment(cfg);
  CHECK(exp.model->state_bounds[0].hi == 1.0);
  CHECK(exp.scheme("tems").prototype.state_box[0].hi == 1.0);
}
