#include "tems/closed_loop.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace tems {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                   t0)
      .count();
}

Eigen::VectorXd clamp_into(const Eigen::VectorXd& u, const std::vector<Interval>& box) {
  Eigen::VectorXd out = u;
  for (int i = 0; i < out.size(); ++i) {
    if (out(i) < box[i].lo) out(i) = box[i].lo;
    if (out(i) > box[i].hi) out(i) = box[i].hi;
  }
  return out;
}

}  // namespace

const char* to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::tems: return "tems";
    case SchemeKind::multi_stage: return "multi_stage";
    case SchemeKind::tube: return "tube";
  }
  return "?";
}

void PlantSim::validate() const {
  if (!model) throw std::invalid_argument("PlantSim: no model");
  model->validate();
  uncertainty.validate();
  if (uncertainty.dim() != model->n_d)
    throw std::invalid_argument("PlantSim: uncertainty dim != n_d");
  if (true_parametric.size() != model->n_d)
    throw std::invalid_argument("PlantSim: true_parametric size != n_d");
  for (int i = 0; i < model->n_d; ++i) {
    if (uncertainty.additive[i]) continue;
    if (true_parametric(i) < uncertainty.lower(i) ||
        true_parametric(i) > uncertainty.upper(i))
      throw std::invalid_argument("PlantSim: true_parametric outside the box");
  }
  if (stop.max_steps < 1) throw std::invalid_argument("PlantSim: max_steps < 1");
  if (stop.state_index >= model->n_x)
    throw std::invalid_argument("PlantSim: stop state index out of range");
}

Eigen::VectorXd PlantSim::disturbance(DetRng& rng) const {
  Eigen::VectorXd d = true_parametric;
  for (int i = 0; i < uncertainty.dim(); ++i) {
    if (!uncertainty.additive[i]) continue;
    switch (additive_mode) {
      case AdditiveMode::random:
        d(i) = rng.uniform(uncertainty.lower(i), uncertainty.upper(i));
        break;
      case AdditiveMode::all_lower: d(i) = uncertainty.lower(i); break;
      case AdditiveMode::all_upper: d(i) = uncertainty.upper(i); break;
    }
  }
  return d;
}

Eigen::VectorXd PlantSim::step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                               DetRng& rng) const {
  return model->step(x, u, disturbance(rng));
}

std::vector<std::string> violation_labels(const ModelSpec& model) {
  std::vector<std::string> out;
  for (const ConstraintFn& c : model.constraints) out.push_back(c.name);
  for (int i = 0; i < model.n_x; ++i) out.push_back("x[" + std::to_string(i) + "]");
  return out;
}

Eigen::VectorXd constraint_violations(const ModelSpec& model, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd* u) {
  const int n_c = static_cast<int>(model.constraints.size());
  Eigen::VectorXd v(n_c + model.n_x);
  const Eigen::VectorXd u_zero = Eigen::VectorXd::Zero(model.n_u);
  for (int i = 0; i < n_c; ++i) {
    const ConstraintFn& c = model.constraints[i];
    if (c.uses_input && !u) {
      v(i) = kNan;
      continue;
    }
    v(i) = std::max(0.0, c.fn(x, u ? *u : u_zero));
  }
  for (int i = 0; i < model.n_x; ++i) {
    const Interval& b = model.state_bounds[i];
    double excess = 0.0;
    if (std::isfinite(b.lo)) excess = std::max(excess, b.lo - x(i));
    if (std::isfinite(b.hi)) excess = std::max(excess, x(i) - b.hi);
    v(n_c + i) = excess;
  }
  return v;
}

void summarize_trace(ClosedLoopTrace& trace, double tol) {
  EpisodeSummary& s = trace.summary;
  s.steps = trace.steps();
  const int rows = static_cast<int>(trace.violations.rows());
  const int cols = static_cast<int>(trace.violations.cols());
  s.max_violation = Eigen::VectorXd::Zero(cols);
  s.violating_steps = Eigen::VectorXi::Zero(cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = trace.violations(r, c);
      if (std::isnan(v)) continue;
      if (v > s.max_violation(c)) s.max_violation(c) = v;
      if (v > tol) ++s.violating_steps(c);
    }
  }
  s.primary_ms = s.ancillary_ms = 0.0;
  s.solves = 0;
  for (double t : trace.primary_ms) {
    if (!std::isnan(t)) {
      s.primary_ms += t;
      ++s.solves;
    }
  }
  for (double t : trace.ancillary_ms)
    if (!std::isnan(t)) s.ancillary_ms += t;
}

int nearest_realization(const RealizationSet& reals, const Eigen::VectorXd& d) {
  if (reals.size() == 0)
    throw std::invalid_argument("nearest_realization: empty set");
  int best = 0;
  double best_dist = (reals.vectors[0] - d).squaredNorm();
  for (int i = 1; i < reals.size(); ++i) {
    const double dist = (reals.vectors[i] - d).squaredNorm();
    if (dist < best_dist) {
      best = i;
      best_dist = dist;
    }
  }
  return best;
}

ClosedLoopTrace run_episode(const PlantSim& plant, const SchemeConfig& scheme,
                            const Eigen::VectorXd& x0, uint64_t seed) {
  plant.validate();
  const TreeOcp& proto = scheme.prototype;
  if (!proto.tree || !proto.model)
    throw std::invalid_argument("run_episode: prototype missing tree or model");
  if (proto.model->n_x != plant.model->n_x || proto.model->n_u != plant.model->n_u ||
      proto.model->n_d != plant.model->n_d)
    throw std::invalid_argument("run_episode: scheme and plant dimensions differ");
  if (x0.size() != plant.model->n_x)
    throw std::invalid_argument("run_episode: x0 size != n_x");

  const ModelSpec& model = *plant.model;
  const ScenarioTree& tree = *proto.tree;
  const bool hierarchical = scheme.kind != SchemeKind::multi_stage;

  // Estimator setup; finite candidates default to the tree's realizations,
  // which keeps the estimate on a branch the warm shift can follow.
  RealizationSet candidates = scheme.estimator.candidates;
  if (hierarchical && scheme.estimator.kind == EstimatorKind::finite &&
      candidates.size() == 0)
    candidates = tree.realizations();

  PrimaryController primary(proto, scheme.primary_opts);
  std::optional<AncillaryController> ancillary;
  if (hierarchical) {
    scheme.ancillary.validate(model);
    ancillary.emplace(proto.tree, proto.model, scheme.ancillary, model.input_bounds,
                      scheme.ancillary_mode, scheme.ancillary_opts);
  }

  DetRng rng(seed);
  ClosedLoopTrace tr;
  tr.summary.seed = seed;
  tr.summary.true_parametric = plant.true_parametric;
  tr.x.push_back(x0);
  tr.z.push_back(x0);
  tr.d_bar.push_back(Eigen::VectorXd());

  std::vector<Eigen::VectorXd> viol_rows;
  Eigen::VectorXd z = x0;
  TreeTrajectory ref;
  std::optional<Eigen::VectorXd> v_prev;  // primary root input of the last solve
  Eigen::VectorXd d_prev;                 // previous estimate, for regularization
  int realized = -1;
  int total_iters = 0;

  for (int t = 0;; ++t) {
    const Eigen::VectorXd x_t = tr.x.back();

    if (t >= 1) {
      if (hierarchical) {
        const Eigen::VectorXd& x_before = tr.x[t - 1];
        const Eigen::VectorXd& u_before = tr.u[t - 1];
        EstimateResult est =
            scheme.estimator.kind == EstimatorKind::finite
                ? estimate_finite(model, x_before, u_before, x_t, candidates, d_prev,
                                  scheme.estimator.W)
                : estimate_box(model, x_before, u_before, x_t, scheme.estimator.box,
                               d_prev, scheme.estimator.W);
        d_prev = est.d_bar;
        tr.d_bar.push_back(est.d_bar);
        z = propagate_primary(model, z, *v_prev, est.d_bar);
        tr.z.push_back(z);
        realized = nearest_realization(tree.realizations(), est.d_bar);
      } else {
        // Plain multi-stage: the primary sees the plant state directly; pick
        // the warm-shift branch whose predicted child is closest to it.
        tr.d_bar.push_back(Eigen::VectorXd());
        z = x_t;
        tr.z.push_back(z);
        const TreeNode& root = tree.node(0);
        if (root.children.size() <= 1) {
          realized = 0;
        } else {
          realized = 0;
          double best = std::numeric_limits<double>::infinity();
          for (int r = 0; r < tree.num_realizations(); ++r) {
            const double dist =
                (ref.states.at(tree.child_for(0, r)) - x_t).squaredNorm();
            if (dist < best) {
              best = dist;
              realized = r;
            }
          }
        }
      }
    } else {
      // First estimate regularizes toward nominal.
      if (hierarchical) {
        d_prev = scheme.estimator.kind == EstimatorKind::finite
                     ? candidates.vectors.at(candidates.nominal_index.value_or(0))
                     : scheme.estimator.box.nominal;
      }
    }

    const bool target = plant.stop.state_index >= 0 &&
                        x_t(plant.stop.state_index) >= plant.stop.threshold;
    if (target || t >= plant.stop.max_steps) {
      tr.summary.reached_target = target;
      viol_rows.push_back(constraint_violations(model, x_t, nullptr));
      break;
    }

    auto t0 = std::chrono::steady_clock::now();
    ref = primary.solve(z, v_prev, t == 0 ? -1 : realized);
    tr.primary_ms.push_back(ms_since(t0));
    total_iters += ref.iterations;
    if (ref.status == SolveStatus::infeasible) {
      tr.summary.error = "primary infeasible at t=" + std::to_string(t) +
                         " (kkt " + std::to_string(ref.kkt_residual) + ")";
      viol_rows.push_back(constraint_violations(model, x_t, nullptr));
      tr.primary_ms.pop_back();  // no input applied this step
      break;
    }
    const Eigen::VectorXd v0 = ref.root_input();
    v_prev = v0;

    Eigen::VectorXd u_t;
    if (t == 0 || !hierarchical) {
      // At t=0 the primary is initialized with the plant state, so its own
      // input is applied; multi-stage always does that.
      u_t = v0;
      tr.ancillary_ms.push_back(kNan);
    } else {
      auto t1 = std::chrono::steady_clock::now();
      AncillaryController::Result res = ancillary->solve(x_t, ref);
      tr.ancillary_ms.push_back(ms_since(t1));
      total_iters += res.iterations;
      u_t = res.u0;
    }
    u_t = clamp_into(u_t, model.input_bounds);

    tr.u.push_back(u_t);
    tr.v.push_back(v0);
    viol_rows.push_back(constraint_violations(model, x_t, &u_t));
    tr.x.push_back(plant.step(x_t, u_t, rng));
  }

  tr.violations.resize(static_cast<int>(viol_rows.size()),
                       viol_rows.empty() ? 0 : static_cast<int>(viol_rows[0].size()));
  for (size_t r = 0; r < viol_rows.size(); ++r)
    tr.violations.row(static_cast<int>(r)) = viol_rows[r];
  summarize_trace(tr);
  tr.summary.sqp_iterations = total_iters;
  return tr;
}

int BatchGrid::episodes(const UncertaintyDecl& decl) const {
  return static_cast<int>(points(decl).size()) * seeds_per_point;
}

std::vector<Eigen::VectorXd> BatchGrid::points(const UncertaintyDecl& decl) const {
  if (seeds_per_point < 1)
    throw std::invalid_argument("BatchGrid: seeds_per_point < 1");
  std::vector<int> param_dims;
  for (int i = 0; i < decl.dim(); ++i)
    if (!decl.additive[i]) param_dims.push_back(i);
  if (counts.size() != param_dims.size())
    throw std::invalid_argument("BatchGrid: counts size != parametric dims");

  std::vector<std::vector<double>> axes;
  for (size_t a = 0; a < param_dims.size(); ++a) {
    const int i = param_dims[a];
    const int n = counts[a];
    if (n < 1) throw std::invalid_argument("BatchGrid: count < 1");
    std::vector<double> vals;
    if (n == 1) {
      vals.push_back(decl.nominal(i));
    } else {
      for (int k = 0; k < n; ++k)
        vals.push_back(decl.lower(i) +
                       (decl.upper(i) - decl.lower(i)) * k / double(n - 1));
    }
    axes.push_back(std::move(vals));
  }

  std::vector<Eigen::VectorXd> pts;
  std::vector<size_t> idx(axes.size(), 0);
  while (true) {
    Eigen::VectorXd p = decl.nominal;
    for (size_t a = 0; a < axes.size(); ++a) p(param_dims[a]) = axes[a][idx[a]];
    pts.push_back(p);
    // Odometer increment, last axis fastest.
    size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < axes[a].size()) break;
      idx[a] = 0;
      if (a == 0) return pts;
    }
    if (axes.empty()) return pts;
  }
}

std::vector<EpisodeSummary> run_batch_grid(
    const PlantTemplate& plant, const SchemeConfig& scheme, const BatchGrid& grid,
    uint64_t master_seed, int workers,
    const std::function<void(const ClosedLoopTrace&)>& on_trace, int limit) {
  if (!plant.model) throw std::invalid_argument("run_batch_grid: no model");
  const std::vector<Eigen::VectorXd> pts = grid.points(plant.uncertainty);
  int n_episodes = static_cast<int>(pts.size()) * grid.seeds_per_point;
  if (limit >= 0) n_episodes = std::min(n_episodes, limit);
  std::vector<EpisodeSummary> out(n_episodes);

  auto run_one = [&](int e) {
    const int point = e / grid.seeds_per_point;
    PlantSim sim;
    sim.model = plant.model;
    sim.uncertainty = plant.uncertainty;
    sim.true_parametric = pts[point];
    sim.additive_mode = plant.additive_mode;
    sim.stop = plant.stop;
    const uint64_t seed = derive_seed(master_seed, static_cast<uint64_t>(e));
    try {
      ClosedLoopTrace tr = run_episode(sim, scheme, plant.x0, seed);
      tr.summary.index = e;
      out[e] = tr.summary;
      if (on_trace) on_trace(tr);
    } catch (const std::exception& ex) {
      out[e].index = e;
      out[e].seed = seed;
      out[e].true_parametric = pts[point];
      out[e].error = ex.what();
    }
  };

  int n_workers = workers > 0 ? workers
                              : static_cast<int>(std::thread::hardware_concurrency());
  if (n_workers < 1) n_workers = 1;
  n_workers = std::min(n_workers, n_episodes);
  if (n_workers <= 1) {
    for (int e = 0; e < n_episodes; ++e) run_one(e);
    return out;
  }

  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < n_workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        const int e = next.fetch_add(1);
        if (e >= n_episodes) return;
        run_one(e);
      }
    });
  }
  for (std::thread& th : pool) th.join();
  return out;
}

SchemeMetrics reduce_batch(const std::string& name, int scenarios,
                           const std::vector<EpisodeSummary>& summaries) {
  SchemeMetrics m;
  m.name = name;
  m.scenarios = scenarios;
  m.episodes = static_cast<int>(summaries.size());

  double step_sum = 0.0, ms_sum = 0.0;
  int completed = 0;
  long long solve_count = 0;
  for (const EpisodeSummary& s : summaries) {
    if (!s.error.empty()) {
      ++m.failed;
      continue;
    }
    ++completed;
    step_sum += s.steps;
    ms_sum += s.primary_ms + s.ancillary_ms;
    solve_count += s.solves;
    if (m.violating_episodes.size() == 0) {
      m.violating_episodes = Eigen::VectorXi::Zero(s.max_violation.size());
      m.max_violation = Eigen::VectorXd::Zero(s.max_violation.size());
    }
    for (int c = 0; c < s.max_violation.size(); ++c) {
      if (s.violating_steps(c) > 0) ++m.violating_episodes(c);
      if (s.max_violation(c) > m.max_violation(c))
        m.max_violation(c) = s.max_violation(c);
    }
  }
  if (completed > 0) m.avg_steps = step_sum / completed;
  if (solve_count > 0) m.avg_solve_ms = ms_sum / double(solve_count);
  return m;
}

ComparisonTable compare_schemes(const std::vector<SchemeConfig>& schemes,
                                const PlantTemplate& plant, const BatchGrid& grid,
                                uint64_t master_seed, int workers) {
  ComparisonTable table;
  if (!plant.model) throw std::invalid_argument("compare_schemes: no model");
  table.constraint_labels = violation_labels(*plant.model);
  for (const SchemeConfig& scheme : schemes) {
    std::vector<EpisodeSummary> batch =
        run_batch_grid(plant, scheme, grid, master_seed, workers);
    table.rows.push_back(reduce_batch(
        scheme.name, scheme.prototype.tree ? scheme.prototype.tree->num_scenarios() : 0,
        batch));
  }
  return table;
}

}  // namespace tems
