#include "tems/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

namespace tems {
namespace {

using Json = nlohmann::ordered_json;

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

std::string elem_path(const std::string& path, int i) {
  return path + "[" + std::to_string(i) + "]";
}

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ConfigError(path, message);
}

// Typos must fail loudly, not get ignored; every object is checked against
// its full key list.
void check_keys(const Json& obj, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) fail(join_path(prefix, item.key()), "unknown key");
  }
}

const Json* find(const Json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &it.value();
}

const Json& require(const Json& obj, const std::string& prefix, const char* key) {
  const Json* j = find(obj, key);
  if (!j) fail(join_path(prefix, key), "required key is missing");
  return *j;
}

double as_double(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

int as_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

void get_double(const Json& obj, const std::string& prefix, const char* key,
                double* out) {
  if (const Json* j = find(obj, key)) *out = as_double(*j, join_path(prefix, key));
}

void get_int(const Json& obj, const std::string& prefix, const char* key, int* out) {
  if (const Json* j = find(obj, key)) *out = as_int(*j, join_path(prefix, key));
}

void get_string(const Json& obj, const std::string& prefix, const char* key,
                std::string* out) {
  if (const Json* j = find(obj, key)) *out = as_string(*j, join_path(prefix, key));
}

// One of a fixed set of keywords ("economic" | "tracking" and friends).
void get_keyword(const Json& obj, const std::string& prefix, const char* key,
                 std::initializer_list<const char*> allowed, std::string* out) {
  const std::string path = join_path(prefix, key);
  get_string(obj, prefix, key, out);
  if (std::none_of(allowed.begin(), allowed.end(),
                   [&](const char* k) { return *out == k; })) {
    std::string list;
    for (const char* k : allowed) list += std::string(list.empty() ? "" : ", ") + k;
    fail(path, "must be one of: " + list);
  }
}

Eigen::VectorXd as_vector(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v(i) = as_double(j[i], elem_path(path, i));
  return v;
}

void get_vector(const Json& obj, const std::string& prefix, const char* key,
                Eigen::VectorXd* out) {
  if (const Json* j = find(obj, key)) *out = as_vector(*j, join_path(prefix, key));
}

std::vector<bool> as_bools(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of booleans");
  std::vector<bool> v(j.size());
  for (int i = 0; i < static_cast<int>(j.size()); ++i) {
    if (!j[i].is_boolean()) fail(elem_path(path, i), "expected a boolean");
    v[i] = j[i].get<bool>();
  }
  return v;
}

// [lo, hi] with null for an unbounded side.
std::vector<Interval> as_intervals(const Json& j, const std::string& path,
                                   bool require_finite) {
  if (!j.is_array()) fail(path, "expected an array of [lo, hi] pairs");
  std::vector<Interval> out;
  for (int i = 0; i < static_cast<int>(j.size()); ++i) {
    const std::string p = elem_path(path, i);
    const Json& e = j[i];
    if (!e.is_array() || e.size() != 2) fail(p, "expected a [lo, hi] pair");
    Interval iv;
    iv.lo = e[0].is_null() ? -kInf : as_double(e[0], p + "[0]");
    iv.hi = e[1].is_null() ? kInf : as_double(e[1], p + "[1]");
    if (require_finite && (!std::isfinite(iv.lo) || !std::isfinite(iv.hi)))
      fail(p, "bounds must be finite");
    if (iv.lo > iv.hi) fail(p, "lo > hi");
    out.push_back(iv);
  }
  return out;
}

UncertaintyDecl parse_uncertainty(const Json& j, const std::string& prefix) {
  if (!j.is_object()) fail(prefix, "expected an object");
  check_keys(j, prefix, {"nominal", "lower", "upper", "significant", "additive"});
  UncertaintyDecl d;
  d.nominal = as_vector(require(j, prefix, "nominal"), join_path(prefix, "nominal"));
  d.lower = as_vector(require(j, prefix, "lower"), join_path(prefix, "lower"));
  d.upper = as_vector(require(j, prefix, "upper"), join_path(prefix, "upper"));
  d.significant =
      as_bools(require(j, prefix, "significant"), join_path(prefix, "significant"));
  d.additive = as_bools(require(j, prefix, "additive"), join_path(prefix, "additive"));
  try {
    d.validate();
  } catch (const std::exception& e) {
    fail(prefix, e.what());
  }
  return d;
}

BatchGrid parse_grid(const Json& j, const std::string& prefix) {
  if (!j.is_object()) fail(prefix, "expected an object");
  check_keys(j, prefix, {"counts", "seeds_per_point"});
  BatchGrid g;
  if (const Json* c = find(j, "counts")) {
    const std::string path = join_path(prefix, "counts");
    if (!c->is_array()) fail(path, "expected an array of integers");
    for (int i = 0; i < static_cast<int>(c->size()); ++i) {
      const int n = as_int((*c)[i], elem_path(path, i));
      if (n < 1) fail(elem_path(path, i), "must be >= 1");
      g.counts.push_back(n);
    }
  }
  get_int(j, prefix, "seeds_per_point", &g.seeds_per_point);
  if (g.seeds_per_point < 1) fail(join_path(prefix, "seeds_per_point"), "must be >= 1");
  return g;
}

Json json_vector(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json json_bools(const std::vector<bool>& v) {
  Json a = Json::array();
  for (bool b : v) a.push_back(b);
  return a;
}

Json json_intervals(const std::vector<Interval>& v) {
  Json a = Json::array();
  for (const Interval& iv : v) {
    Json p = Json::array();
    if (std::isfinite(iv.lo)) p.push_back(iv.lo); else p.push_back(nullptr);
    if (std::isfinite(iv.hi)) p.push_back(iv.hi); else p.push_back(nullptr);
    a.push_back(std::move(p));
  }
  return a;
}

Json json_grid(const BatchGrid& g) {
  Json j;
  Json counts = Json::array();
  for (int c : g.counts) counts.push_back(c);
  j["counts"] = std::move(counts);
  j["seeds_per_point"] = g.seeds_per_point;
  return j;
}

// Quadratic tracking objective (z - target)' diag(q) (z - target) plus the
// usual move penalty; the terminal cost reuses the state term.
void set_tracking_cost(TreeOcp& ocp, const Eigen::VectorXd& q,
                       const Eigen::VectorXd& target,
                       const Eigen::VectorXd& move_penalties) {
  const Eigen::VectorXd qv = q, tv = target, mv = move_penalties;
  ocp.set_stage_cost([qv, tv, mv](int, const auto& z, const auto& v, const auto& vp) {
    using S = std::decay_t<decltype(z[0])>;
    S c(0.0);
    for (int i = 0; i < qv.size(); ++i) c = c + qv(i) * square(z[i] - tv(i));
    if (!vp.empty())
      for (int i = 0; i < mv.size(); ++i) c = c + mv(i) * square(v[i] - vp[i]);
    return c;
  });
  ocp.set_terminal_cost([qv, tv](int, const auto& z) {
    using S = std::decay_t<decltype(z[0])>;
    S c(0.0);
    for (int i = 0; i < qv.size(); ++i) c = c + qv(i) * square(z[i] - tv(i));
    return c;
  });
}

void check_size(const Eigen::VectorXd& v, int expected, const char* path,
                const char* against) {
  if (v.size() != expected)
    fail(path, "size " + std::to_string(v.size()) + " does not match " + against +
                   " (" + std::to_string(expected) + ")");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const std::exception& e) {
    fail("$", std::string("not valid JSON: ") + e.what());
  }
  if (!root.is_object()) fail("$", "top level must be an object");
  check_keys(root, "",
             {"model", "dt", "uncertainty", "tree", "bounds", "cost", "ancillary",
              "estimator", "delta", "delta_from", "episode", "grid", "calibration",
              "schemes", "x0", "seed", "out_dir"});

  ExperimentConfig cfg;
  cfg.model = as_string(require(root, "", "model"), "model");
  const auto names = builtin_model_names();
  if (std::find(names.begin(), names.end(), cfg.model) == names.end()) {
    std::string list;
    for (const auto& n : names) list += std::string(list.empty() ? "" : ", ") + n;
    fail("model", "unknown model '" + cfg.model + "'; available: " + list);
  }
  if (const Json* j = find(root, "dt")) {
    cfg.dt = as_double(*j, "dt");
    if (*cfg.dt <= 0) fail("dt", "must be positive");
  }
  if (const Json* j = find(root, "uncertainty"))
    cfg.uncertainty = parse_uncertainty(*j, "uncertainty");

  {
    const Json& tree = require(root, "", "tree");
    if (!tree.is_object()) fail("tree", "expected an object");
    check_keys(tree, "tree", {"horizon", "robust_horizon", "values_per_dim"});
    cfg.horizon = as_int(require(tree, "tree", "horizon"), "tree.horizon");
    if (cfg.horizon < 1) fail("tree.horizon", "must be >= 1");
    get_int(tree, "tree", "robust_horizon", &cfg.robust_horizon);
    if (cfg.robust_horizon < 0 || cfg.robust_horizon > cfg.horizon)
      fail("tree.robust_horizon", "must be in [0, horizon]");
    get_int(tree, "tree", "values_per_dim", &cfg.values_per_dim);
    if (cfg.values_per_dim != 2 && cfg.values_per_dim != 3)
      fail("tree.values_per_dim", "must be 2 (bounds) or 3 (bounds plus nominal)");
  }

  {
    const Json& bounds = require(root, "", "bounds");
    if (!bounds.is_object()) fail("bounds", "expected an object");
    check_keys(bounds, "bounds", {"input", "state"});
    cfg.input_bounds = as_intervals(require(bounds, "bounds", "input"), "bounds.input",
                                    /*require_finite=*/true);
    if (cfg.input_bounds.empty()) fail("bounds.input", "must not be empty");
    if (const Json* j = find(bounds, "state"))
      cfg.state_bounds = as_intervals(*j, "bounds.state", /*require_finite=*/false);
  }

  if (const Json* cost = find(root, "cost")) {
    if (!cost->is_object()) fail("cost", "expected an object");
    check_keys(*cost, "cost",
               {"type", "product_index", "product_weight", "move_penalties", "q",
                "target"});
    get_keyword(*cost, "cost", "type", {"economic", "tracking"}, &cfg.cost_type);
    get_vector(*cost, "cost", "move_penalties", &cfg.move_penalties);
    if (cfg.cost_type == "economic") {
      if (find(*cost, "q")) fail("cost.q", "only used by the tracking cost");
      if (find(*cost, "target")) fail("cost.target", "only used by the tracking cost");
      get_int(*cost, "cost", "product_index", &cfg.product_index);
      if (cfg.product_index < 0) fail("cost.product_index", "must be >= 0");
      get_double(*cost, "cost", "product_weight", &cfg.product_weight);
    } else {
      if (find(*cost, "product_index"))
        fail("cost.product_index", "only used by the economic cost");
      if (find(*cost, "product_weight"))
        fail("cost.product_weight", "only used by the economic cost");
      cfg.track_q = as_vector(require(*cost, "cost", "q"), "cost.q");
      cfg.track_target = as_vector(require(*cost, "cost", "target"), "cost.target");
      if (cfg.track_q.minCoeff() < 0) fail("cost.q", "weights must be >= 0");
    }
    if (cfg.move_penalties.size() && cfg.move_penalties.minCoeff() < 0)
      fail("cost.move_penalties", "penalties must be >= 0");
  }

  if (const Json* anc = find(root, "ancillary")) {
    if (!anc->is_object()) fail("ancillary", "expected an object");
    check_keys(*anc, "ancillary", {"Q", "R", "P", "mode"});
    get_vector(*anc, "ancillary", "Q", &cfg.ancillary_Q);
    get_vector(*anc, "ancillary", "R", &cfg.ancillary_R);
    get_vector(*anc, "ancillary", "P", &cfg.ancillary_P);
    get_keyword(*anc, "ancillary", "mode", {"full_tree", "nominal_only"},
                &cfg.ancillary_mode);
  }

  if (const Json* est = find(root, "estimator")) {
    if (!est->is_object()) fail("estimator", "expected an object");
    check_keys(*est, "estimator", {"kind", "W"});
    get_keyword(*est, "estimator", "kind", {"finite", "box"}, &cfg.estimator_kind);
    get_vector(*est, "estimator", "W", &cfg.estimator_W);
    if (cfg.estimator_W.size() && cfg.estimator_W.minCoeff() < 0)
      fail("estimator.W", "weights must be >= 0");
  }

  if (const Json* d = find(root, "delta")) {
    if (!d->is_object()) fail("delta", "expected an object");
    check_keys(*d, "delta", {"state_lo", "state_hi", "input_lo", "input_hi", "g"});
    get_vector(*d, "delta", "state_lo", &cfg.delta.state_lo);
    get_vector(*d, "delta", "state_hi", &cfg.delta.state_hi);
    get_vector(*d, "delta", "input_lo", &cfg.delta.input_lo);
    get_vector(*d, "delta", "input_hi", &cfg.delta.input_hi);
    get_vector(*d, "delta", "g", &cfg.delta.g);
  }
  get_string(root, "", "delta_from", &cfg.delta_from);
  if (!cfg.delta_from.empty() && find(root, "delta"))
    fail("delta_from", "cannot be combined with an inline delta");

  if (const Json* ep = find(root, "episode")) {
    if (!ep->is_object()) fail("episode", "expected an object");
    check_keys(*ep, "episode", {"max_steps", "stop_state", "stop_threshold"});
    get_int(*ep, "episode", "max_steps", &cfg.stop.max_steps);
    if (cfg.stop.max_steps < 1) fail("episode.max_steps", "must be >= 1");
    get_int(*ep, "episode", "stop_state", &cfg.stop.state_index);
    if (cfg.stop.state_index < -1)
      fail("episode.stop_state", "must be -1 (disabled) or a state index");
    get_double(*ep, "episode", "stop_threshold", &cfg.stop.threshold);
  }

  if (const Json* g = find(root, "grid")) cfg.grid = parse_grid(*g, "grid");

  if (const Json* cal = find(root, "calibration")) {
    if (!cal->is_object()) fail("calibration", "expected an object");
    check_keys(*cal, "calibration", {"safety_factor", "max_rounds", "grid"});
    get_double(*cal, "calibration", "safety_factor", &cfg.safety_factor);
    if (cfg.safety_factor <= 0) fail("calibration.safety_factor", "must be positive");
    get_int(*cal, "calibration", "max_rounds", &cfg.max_rounds);
    if (cfg.max_rounds < 1) fail("calibration.max_rounds", "must be >= 1");
    if (const Json* g = find(*cal, "grid"))
      cfg.calibration_grid = parse_grid(*g, "calibration.grid");
  }

  if (const Json* s = find(root, "schemes")) {
    if (!s->is_array() || s->empty()) fail("schemes", "expected a nonempty array");
    cfg.schemes.clear();
    for (int i = 0; i < static_cast<int>(s->size()); ++i) {
      const std::string name = as_string((*s)[i], elem_path("schemes", i));
      if (name != "tems" && name != "multi_stage" && name != "tube")
        fail(elem_path("schemes", i), "must be one of: tems, multi_stage, tube");
      if (std::find(cfg.schemes.begin(), cfg.schemes.end(), name) != cfg.schemes.end())
        fail(elem_path("schemes", i), "duplicate scheme '" + name + "'");
      cfg.schemes.push_back(name);
    }
  }

  get_vector(root, "", "x0", &cfg.x0);
  if (const Json* j = find(root, "seed")) {
    if (!j->is_number_unsigned()) fail("seed", "expected a nonnegative integer");
    cfg.seed = j->get<uint64_t>();
  }
  get_string(root, "", "out_dir", &cfg.out_dir);
  if (cfg.out_dir.empty()) fail("out_dir", "must not be empty");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("$", "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
  Json root;
  root["model"] = cfg.model;
  if (cfg.dt) root["dt"] = *cfg.dt;
  if (cfg.uncertainty) {
    Json u;
    u["nominal"] = json_vector(cfg.uncertainty->nominal);
    u["lower"] = json_vector(cfg.uncertainty->lower);
    u["upper"] = json_vector(cfg.uncertainty->upper);
    u["significant"] = json_bools(cfg.uncertainty->significant);
    u["additive"] = json_bools(cfg.uncertainty->additive);
    root["uncertainty"] = std::move(u);
  }
  {
    Json t;
    t["horizon"] = cfg.horizon;
    t["robust_horizon"] = cfg.robust_horizon;
    t["values_per_dim"] = cfg.values_per_dim;
    root["tree"] = std::move(t);
  }
  {
    Json b;
    b["input"] = json_intervals(cfg.input_bounds);
    if (cfg.state_bounds) b["state"] = json_intervals(*cfg.state_bounds);
    root["bounds"] = std::move(b);
  }
  {
    Json c;
    c["type"] = cfg.cost_type;
    if (cfg.cost_type == "economic") {
      c["product_index"] = cfg.product_index;
      c["product_weight"] = cfg.product_weight;
    } else {
      c["q"] = json_vector(cfg.track_q);
      c["target"] = json_vector(cfg.track_target);
    }
    if (cfg.move_penalties.size()) c["move_penalties"] = json_vector(cfg.move_penalties);
    root["cost"] = std::move(c);
  }
  {
    Json a;
    if (cfg.ancillary_Q.size()) a["Q"] = json_vector(cfg.ancillary_Q);
    if (cfg.ancillary_R.size()) a["R"] = json_vector(cfg.ancillary_R);
    if (cfg.ancillary_P.size()) a["P"] = json_vector(cfg.ancillary_P);
    a["mode"] = cfg.ancillary_mode;
    root["ancillary"] = std::move(a);
  }
  {
    Json e;
    e["kind"] = cfg.estimator_kind;
    if (cfg.estimator_W.size()) e["W"] = json_vector(cfg.estimator_W);
    root["estimator"] = std::move(e);
  }
  {
    Json d;
    if (cfg.delta.state_lo.size()) d["state_lo"] = json_vector(cfg.delta.state_lo);
    if (cfg.delta.state_hi.size()) d["state_hi"] = json_vector(cfg.delta.state_hi);
    if (cfg.delta.input_lo.size()) d["input_lo"] = json_vector(cfg.delta.input_lo);
    if (cfg.delta.input_hi.size()) d["input_hi"] = json_vector(cfg.delta.input_hi);
    if (cfg.delta.g.size()) d["g"] = json_vector(cfg.delta.g);
    if (!d.empty()) root["delta"] = std::move(d);
  }
  if (!cfg.delta_from.empty()) root["delta_from"] = cfg.delta_from;
  {
    Json e;
    e["max_steps"] = cfg.stop.max_steps;
    e["stop_state"] = cfg.stop.state_index;
    e["stop_threshold"] = cfg.stop.threshold;
    root["episode"] = std::move(e);
  }
  root["grid"] = json_grid(cfg.grid);
  {
    Json c;
    c["safety_factor"] = cfg.safety_factor;
    c["max_rounds"] = cfg.max_rounds;
    if (cfg.calibration_grid) c["grid"] = json_grid(*cfg.calibration_grid);
    root["calibration"] = std::move(c);
  }
  root["schemes"] = cfg.schemes;
  if (cfg.x0.size()) root["x0"] = json_vector(cfg.x0);
  root["seed"] = cfg.seed;
  root["out_dir"] = cfg.out_dir;
  return root.dump(2) + "\n";
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string s = dump_config(cfg);
  uint64_t h = 1469598103934665603ull;  // FNV-1a 64
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  return std::string(buf);
}

long long config_scenario_count(const ExperimentConfig& cfg) {
  const UncertaintyDecl unc =
      cfg.uncertainty ? *cfg.uncertainty : make_builtin_model(cfg.model).uncertainty;
  const RealizationSet reals = sample_box_vertices(unc, cfg.values_per_dim == 3);
  const long long s = reals.size();
  long long out = 1;
  for (int k = 0; k < cfg.robust_horizon; ++k) {
    if (s > 0 && out > std::numeric_limits<long long>::max() / s)
      throw std::overflow_error("config_scenario_count: overflow");
    out *= s;
  }
  return out;
}

const SchemeConfig& Experiment::scheme(const std::string& name) const {
  for (const SchemeConfig& s : schemes)
    if (s.name == name) return s;
  throw std::out_of_range("Experiment: no scheme named '" + name + "'");
}

Experiment build_experiment(const ExperimentConfig& cfg) {
  BuiltinModel bm;
  try {
    bm = make_builtin_model(cfg.model);
  } catch (const std::out_of_range&) {
    fail("model", "unknown model '" + cfg.model + "'");
  }
  ModelSpec m = bm.model;
  UncertaintyDecl unc = cfg.uncertainty ? *cfg.uncertainty : bm.uncertainty;
  try {
    unc.validate();
  } catch (const std::exception& e) {
    fail("uncertainty", e.what());
  }
  if (unc.dim() != m.n_d)
    fail("uncertainty",
         "dimension " + std::to_string(unc.dim()) + " does not match the model's n_d (" +
             std::to_string(m.n_d) + ")");

  if (static_cast<int>(cfg.input_bounds.size()) != m.n_u)
    fail("bounds.input", "size " + std::to_string(cfg.input_bounds.size()) +
                             " does not match n_u (" + std::to_string(m.n_u) + ")");
  m.input_bounds = cfg.input_bounds;
  if (cfg.state_bounds) {
    if (static_cast<int>(cfg.state_bounds->size()) != m.n_x)
      fail("bounds.state", "size " + std::to_string(cfg.state_bounds->size()) +
                               " does not match n_x (" + std::to_string(m.n_x) + ")");
    m.state_bounds = *cfg.state_bounds;
  }

  // The builtin maps are discretized once; dt in a config documents that
  // value and anything else would silently run the wrong dynamics.
  if (cfg.dt && *cfg.dt != m.dt)
    fail("dt", "model '" + cfg.model + "' is discretized at dt = " +
                   std::to_string(m.dt) + " and cannot be re-discretized");

  Eigen::VectorXd move = cfg.move_penalties;
  if (move.size() == 0) move = Eigen::VectorXd::Zero(m.n_u);
  check_size(move, m.n_u, "cost.move_penalties", "n_u");
  if (cfg.cost_type == "economic") {
    if (cfg.product_index >= m.n_x)
      fail("cost.product_index", "state index " + std::to_string(cfg.product_index) +
                                     " out of range for n_x = " + std::to_string(m.n_x));
  } else {
    check_size(cfg.track_q, m.n_x, "cost.q", "n_x");
    check_size(cfg.track_target, m.n_x, "cost.target", "n_x");
  }

  AncillaryWeights weights;
  weights.Q = cfg.ancillary_Q.size() ? cfg.ancillary_Q : Eigen::VectorXd::Ones(m.n_x);
  weights.R = cfg.ancillary_R.size() ? cfg.ancillary_R : Eigen::VectorXd::Ones(m.n_u);
  weights.P = cfg.ancillary_P.size() ? cfg.ancillary_P : weights.Q;
  check_size(weights.Q, m.n_x, "ancillary.Q", "n_x");
  check_size(weights.R, m.n_u, "ancillary.R", "n_u");
  check_size(weights.P, m.n_x, "ancillary.P", "n_x");
  try {
    weights.validate(m);
  } catch (const std::exception& e) {
    fail("ancillary", e.what());
  }

  Eigen::MatrixXd W;
  if (cfg.estimator_W.size()) {
    check_size(cfg.estimator_W, m.n_d, "estimator.W", "n_d");
    W = cfg.estimator_W.asDiagonal();
  }

  try {
    cfg.delta.validate(m);
  } catch (const std::exception& e) {
    fail("delta", e.what());
  }

  Eigen::VectorXd x0 = cfg.x0.size() ? cfg.x0 : bm.default_initial_state;
  check_size(x0, m.n_x, "x0", "n_x");
  if (cfg.stop.state_index >= m.n_x)
    fail("episode.stop_state", "state index " + std::to_string(cfg.stop.state_index) +
                                   " out of range for n_x = " + std::to_string(m.n_x));

  int parametric = 0;
  for (bool a : unc.additive)
    if (!a) ++parametric;
  auto resolve_grid = [&](BatchGrid g, const char* path) {
    if (g.counts.empty()) g.counts.assign(parametric, 1);
    if (static_cast<int>(g.counts.size()) != parametric)
      fail(path, "size " + std::to_string(g.counts.size()) +
                     " does not match the parametric uncertainty dimensions (" +
                     std::to_string(parametric) + ")");
    return g;
  };
  const BatchGrid grid = resolve_grid(cfg.grid, "grid.counts");
  const BatchGrid cal_grid = resolve_grid(
      cfg.calibration_grid ? *cfg.calibration_grid : cfg.grid, "calibration.grid.counts");

  Experiment exp;
  exp.model = std::make_shared<const ModelSpec>(std::move(m));
  exp.uncertainty = unc;
  exp.plant.model = exp.model;
  exp.plant.uncertainty = unc;
  exp.plant.additive_mode = AdditiveMode::random;
  exp.plant.stop = cfg.stop;
  exp.plant.x0 = x0;
  exp.grid = grid;
  exp.calibration_grid = cal_grid;
  exp.calibration.safety_factor = cfg.safety_factor;
  exp.calibration.max_rounds = cfg.max_rounds;
  exp.calibration.master_seed = cfg.seed;
  exp.seed = cfg.seed;
  exp.out_dir = cfg.out_dir;

  const bool include_nominal = cfg.values_per_dim == 3;
  auto install_cost = [&](TreeOcp& ocp) {
    if (cfg.cost_type == "economic")
      set_economic_cost(ocp, cfg.product_index, cfg.product_weight, move);
    else
      set_tracking_cost(ocp, cfg.track_q, cfg.track_target, move);
  };

  for (const std::string& name : cfg.schemes) {
    SchemeConfig s;
    s.name = name;
    RealizationSet reals;
    DeltaSpec delta = cfg.delta;
    if (name == "tems") {
      s.kind = SchemeKind::tems;
      reals = sample_box_vertices(unc, include_nominal);
    } else if (name == "multi_stage") {
      // The plain multi-stage baseline branches on every dimension and runs
      // untightened on the original sets.
      s.kind = SchemeKind::multi_stage;
      reals = sample_box_vertices(unc, include_nominal, /*all_dims=*/true);
      delta = DeltaSpec::zeros(*exp.model);
    } else {
      s.kind = SchemeKind::tube;
      reals.vectors = {unc.nominal};
      reals.nominal_index = 0;
    }
    auto tree = std::make_shared<const ScenarioTree>(
        ScenarioTree::build(std::move(reals), cfg.horizon, cfg.robust_horizon));
    s.prototype.tree = tree;
    s.prototype.model = exp.model;
    TightenedSets sets;
    try {
      sets = make_tightened_sets(*exp.model, delta);
    } catch (const std::exception& e) {
      fail("delta", e.what());
    }
    s.prototype.state_box = sets.state_box;
    s.prototype.input_box = sets.input_box;
    s.prototype.terminal_box = sets.terminal_box;
    s.prototype.g_delta = sets.g_delta;
    s.prototype.initial_state = x0;
    install_cost(s.prototype);
    s.ancillary = weights;
    s.ancillary_mode = cfg.ancillary_mode == "full_tree" ? AncillaryMode::full_tree
                                                         : AncillaryMode::nominal_only;
    if (name == "tube") {
      // Tube NMPC propagates its nominal system with the nominal value;
      // restricting the finite estimator to the chain's single realization
      // reproduces exactly that.
      s.estimator.kind = EstimatorKind::finite;
    } else {
      s.estimator.kind = cfg.estimator_kind == "box" ? EstimatorKind::box
                                                     : EstimatorKind::finite;
    }
    s.estimator.box = unc;
    s.estimator.W = W;
    exp.schemes.push_back(std::move(s));
  }
  return exp;
}

}  // namespace tems
