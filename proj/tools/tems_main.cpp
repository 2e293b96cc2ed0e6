// Command line front end: run closed-loop experiments, calibrate the
// constraint tightening, compare schemes, or print tree statistics, all
// driven by one JSON config. Subcommands write their artifacts under the
// config's out_dir (or --out) with the config hash stamped into every file.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "tems/config.hpp"
#include "tems/trace_io.hpp"

namespace fs = std::filesystem;
using namespace tems;

namespace {

struct CliArgs {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::string scheme;
  int episodes = -1;
  bool timing = false;
  bool plots = false;
};

void add_common(CLI::App* cmd, CliArgs& a) {
  cmd->add_option("--config", a.config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", a.seed, "master seed (overrides the config)");
  cmd->add_option("--out", a.out, "output directory (overrides the config)");
  cmd->add_option("--workers", a.workers,
                  "worker threads; default $TEMS_WORKERS or all cores");
}

int resolve_workers(const std::optional<int>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("TEMS_WORKERS")) return std::atoi(env);
  return 0;
}

std::string pad4(int v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d", v);
  return buf;
}

struct LoadedExperiment {
  ExperimentConfig cfg;
  Experiment exp;
  std::string hash;
  uint64_t seed = 0;
  fs::path out_dir;
};

// Config load + build + the overrides every subcommand shares. delta_from
// is resolved here, relative to the config file, and lands on every scheme
// that tightens (multi-stage stays on the original sets by definition).
LoadedExperiment load_experiment(const CliArgs& a, bool apply_delta_from = true) {
  LoadedExperiment L;
  L.cfg = load_config(a.config_path);
  L.exp = build_experiment(L.cfg);
  L.hash = config_hash_hex(L.cfg);
  L.seed = a.seed ? *a.seed : L.cfg.seed;
  L.out_dir = a.out ? fs::path(*a.out) : fs::path(L.cfg.out_dir);
  if (apply_delta_from && !L.cfg.delta_from.empty()) {
    fs::path p(L.cfg.delta_from);
    if (p.is_relative()) p = fs::path(a.config_path).parent_path() / p;
    const TighteningReport report = load_tightening_report(p.string());
    for (SchemeConfig& s : L.exp.schemes)
      if (s.kind != SchemeKind::multi_stage) s = apply_delta(s, report.delta);
    std::cout << "applied delta from " << p.string() << "\n";
  }
  return L;
}

const SchemeConfig& pick_scheme(const Experiment& exp, const std::string& name) {
  if (name.empty()) return exp.schemes.front();
  return exp.scheme(name);
}

void print_violation_counts(const std::vector<std::string>& labels,
                            const Eigen::VectorXi& episodes,
                            const Eigen::VectorXd& max_violation) {
  for (int c = 0; c < static_cast<int>(labels.size()); ++c) {
    const int n = c < episodes.size() ? episodes(c) : 0;
    const double m = c < max_violation.size() ? max_violation(c) : 0.0;
    std::cout << "  " << labels[c] << ": " << n << " episodes, max "
              << format_g17(m) << "\n";
  }
}

int cmd_run(const CliArgs& a) {
  LoadedExperiment L = load_experiment(a);
  const SchemeConfig& scheme = pick_scheme(L.exp, a.scheme);
  fs::create_directories(L.out_dir);
  std::ofstream(L.out_dir / "config.json") << dump_config(L.cfg);

  std::cout << "scheme: " << scheme.name << ", config hash: " << L.hash
            << ", seed: " << L.seed << "\n";
  auto on_trace = [&](const ClosedLoopTrace& tr) {
    const fs::path csv = L.out_dir / ("trace_" + pad4(tr.summary.index) + ".csv");
    save_trace_csv(csv.string(), tr, *L.exp.model, L.hash, a.timing);
    if (a.plots)
      emit_plot_data(tr, *L.exp.model,
                     (L.out_dir / "plots" / ("episode_" + pad4(tr.summary.index)))
                         .string(),
                     L.hash);
  };
  const std::vector<EpisodeSummary> summaries =
      run_batch_grid(L.exp.plant, scheme, L.exp.grid, L.seed,
                     resolve_workers(a.workers), on_trace, a.episodes);
  save_summaries_jsonl((L.out_dir / "summaries.jsonl").string(), summaries, L.hash,
                       a.timing);

  const SchemeMetrics m = reduce_batch(scheme.name,
                                       scheme.prototype.tree->num_scenarios(),
                                       summaries);
  std::cout << "episodes: " << m.episodes << " (failed: " << m.failed
            << "), avg steps: " << m.avg_steps << "\n";
  std::cout << "violations of the original constraints:\n";
  print_violation_counts(violation_labels(*L.exp.model), m.violating_episodes,
                         m.max_violation);
  if (m.failed > 0)
    std::cout << "warning: " << m.failed
              << " episodes aborted; their summaries carry the error\n";
  std::cout << "wrote " << (L.out_dir / "summaries.jsonl").string() << " and "
            << m.episodes << " trace files\n";
  return m.failed == 0 ? 0 : 2;
}

int cmd_calibrate(const CliArgs& a) {
  // delta_from would pre-tighten the scheme; calibration must start from
  // the original sets.
  LoadedExperiment L = load_experiment(a, /*apply_delta_from=*/false);
  const SchemeConfig& chosen = pick_scheme(L.exp, a.scheme);
  if (chosen.kind == SchemeKind::multi_stage)
    throw std::runtime_error(
        "the multi-stage baseline runs untightened by definition; calibrate "
        "the tems or tube scheme instead (--scheme)");
  const SchemeConfig untightened = apply_delta(chosen, DeltaSpec::zeros(*L.exp.model));

  CalibrationOptions opts = L.exp.calibration;
  opts.master_seed = L.seed;
  opts.workers = resolve_workers(a.workers);
  std::cout << "calibrating " << chosen.name << " over "
            << L.exp.calibration_grid.episodes(L.exp.uncertainty)
            << " episodes per pass (hash " << L.hash << ", seed " << L.seed << ")\n";
  const TighteningReport report =
      calibrate_tightening(untightened, L.exp.plant, L.exp.calibration_grid, opts);

  fs::create_directories(L.out_dir);
  const fs::path out = L.out_dir / "tightening.json";
  save_tightening_report(out.string(), report, L.hash);

  std::cout << "rounds: " << report.rounds << ", episodes: " << report.episodes
            << " (failed: " << report.failed << ")\n";
  const auto show = [](const char* name, const Eigen::VectorXd& v) {
    if (v.size() == 0 || v.maxCoeff() <= 0.0) return;
    std::cout << "  " << name << ":";
    for (int i = 0; i < v.size(); ++i) std::cout << " " << format_g17(v(i));
    std::cout << "\n";
  };
  const bool any_delta =
      (report.delta.state_lo.size() && report.delta.state_lo.maxCoeff() > 0.0) ||
      (report.delta.state_hi.size() && report.delta.state_hi.maxCoeff() > 0.0) ||
      (report.delta.input_lo.size() && report.delta.input_lo.maxCoeff() > 0.0) ||
      (report.delta.input_hi.size() && report.delta.input_hi.maxCoeff() > 0.0) ||
      (report.delta.g.size() && report.delta.g.maxCoeff() > 0.0);
  std::cout << (any_delta ? "recommended delta:\n"
                          : "recommended delta: none (baseline ran clean)\n");
  show("state_lo", report.delta.state_lo);
  show("state_hi", report.delta.state_hi);
  show("input_lo", report.delta.input_lo);
  show("input_hi", report.delta.input_hi);
  show("g", report.delta.g);
  if (report.verification.clean())
    std::cout << "last pass ran clean\n";
  else
    std::cout << "warning: violations persist after " << report.rounds
              << " rounds (max "
              << format_g17(report.verification.max_violation.maxCoeff())
              << "); treat the delta as a lower bound\n";
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_compare(const CliArgs& a) {
  LoadedExperiment L = load_experiment(a);
  if (L.exp.schemes.size() < 2)
    std::cout << "note: only one scheme configured; the table has a single row\n";
  const ComparisonTable table =
      compare_schemes(L.exp.schemes, L.exp.plant, L.exp.grid, L.seed,
                      resolve_workers(a.workers));
  fs::create_directories(L.out_dir);
  const fs::path out = L.out_dir / "comparison.csv";
  save_comparison_csv(out.string(), table, L.hash, L.seed);
  std::cout << format_comparison_text(table);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_tree_info(const CliArgs& a) {
  const ExperimentConfig cfg = load_config(a.config_path);
  const UncertaintyDecl unc = cfg.uncertainty
                                  ? *cfg.uncertainty
                                  : make_builtin_model(cfg.model).uncertainty;
  const RealizationSet reals = sample_box_vertices(unc, cfg.values_per_dim == 3);
  const long long scenarios = config_scenario_count(cfg);
  const long long nodes =
      state_node_count(reals.size(), cfg.horizon, cfg.robust_horizon);
  const unsigned long long naive =
      naive_scenario_count(cfg.values_per_dim, unc.dim(), cfg.robust_horizon);

  std::cout << "model: " << cfg.model << " (" << unc.dim() << " uncertain dims, "
            << unc.significant_count() << " significant)\n";
  std::cout << "horizon: " << cfg.horizon << ", robust horizon: " << cfg.robust_horizon
            << ", values per dim: " << cfg.values_per_dim << "\n";
  std::cout << "scenarios: " << scenarios << ", state nodes: " << nodes
            << ", naive full-branching: " << naive << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tube-enhanced multi-stage NMPC experiments"};
  app.require_subcommand(1);
  CliArgs a;

  CLI::App* run = app.add_subcommand("run", "run closed-loop episodes over the grid");
  add_common(run, a);
  run->add_option("--scheme", a.scheme, "scheme to run (default: first in config)");
  run->add_option("--episodes", a.episodes, "cap on the number of episodes");
  run->add_flag("--timing", a.timing, "record wall-clock solve times in outputs");
  run->add_flag("--plots", a.plots, "emit per-signal plot series per episode");

  CLI::App* cal = app.add_subcommand("calibrate", "calibrate the constraint tightening");
  add_common(cal, a);
  cal->add_option("--scheme", a.scheme, "scheme to calibrate (default: first)");

  CLI::App* cmp = app.add_subcommand("compare", "run every configured scheme and tabulate");
  add_common(cmp, a);

  CLI::App* info = app.add_subcommand("tree-info", "print scenario tree statistics");
  info->add_option("--config", a.config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(a);
    if (cal->parsed()) return cmd_calibrate(a);
    if (cmp->parsed()) return cmd_compare(a);
    return cmd_tree_info(a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
