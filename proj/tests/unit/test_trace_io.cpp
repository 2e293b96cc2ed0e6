#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tems/trace_io.hpp"

using namespace tems;
namespace fs = std::filesystem;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::vector<std::string> cells_of(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

// A synthetic scalar trace with every undefined-cell case present: no
// estimate at t=0, no input or timing on the final row.
struct HandTrace {
  ModelSpec model;
  ClosedLoopTrace trace;

  HandTrace() {
    model = make_builtin_model("scalar_linear").model;
    model.state_bounds = {Interval{-kInf, 0.5}};
    model.input_bounds = {Interval{-2.0, 2.0}};
    auto vec = [](double v) { return Eigen::VectorXd::Constant(1, v); };
    trace.x = {vec(0.1), vec(0.2), vec(0.3)};
    trace.z = {vec(0.1), vec(0.19), vec(0.29)};
    trace.u = {vec(0.5), vec(0.6)};
    trace.v = trace.u;
    trace.d_bar = {Eigen::VectorXd(), vec(0.05), vec(0.06)};
    trace.violations = Eigen::MatrixXd::Zero(3, 1);
    trace.violations(2, 0) = 0.25;
    trace.primary_ms = {1.5, 2.5};
    trace.ancillary_ms = {kNan, 3.5};
    trace.summary.seed = 77;
  }
};

std::string render(const HandTrace& h, bool timing) {
  std::ostringstream os;
  write_trace_csv(os, h.trace, h.model, "abc123", timing);
  return os.str();
}

}  // namespace

TEST_CASE("trace csv: header, provenance and undefined cells") {
  HandTrace h;
  const std::vector<std::string> lines = lines_of(render(h, false));
  REQUIRE(lines.size() == 5);  // comment + header + 3 states
  CHECK(lines[0] == "# config_hash=abc123 seed=77");
  CHECK(lines[1] == "t,x[0],z[0],u[0],dbar[0],viol[0],t_primary_ms,t_ancillary_ms");

  const auto r0 = cells_of(lines[2]);
  REQUIRE(r0.size() == 8);
  CHECK(r0[0] == "0");
  CHECK(std::strtod(r0[1].c_str(), nullptr) == 0.1);
  CHECK(std::strtod(r0[3].c_str(), nullptr) == 0.5);
  CHECK(r0[4] == "nan");  // no estimate into x(0)
  CHECK(r0[6] == "nan");  // timing suppressed by default
  CHECK(r0[7] == "nan");

  const auto r2 = cells_of(lines[4]);
  CHECK(r2[0] == "2");
  CHECK(r2[3] == "nan");  // terminal state has no input
  CHECK(std::strtod(r2[4].c_str(), nullptr) == 0.06);
  CHECK(std::strtod(r2[5].c_str(), nullptr) == 0.25);

  // 17 significant digits survive a parse round trip bit for bit.
  CHECK(format_g17(0.1) == "0.10000000000000001");
  CHECK(std::strtod(format_g17(1.0 / 3.0).c_str(), nullptr) == 1.0 / 3.0);
  CHECK(format_g17(kNan) == "nan");
  CHECK(format_g17(kInf) == "inf");
}

TEST_CASE("trace csv: byte identical across writes, timing flag fills cells") {
  HandTrace h;
  CHECK(render(h, false) == render(h, false));

  const std::vector<std::string> lines = lines_of(render(h, true));
  const auto r0 = cells_of(lines[2]);
  CHECK(std::strtod(r0[6].c_str(), nullptr) == 1.5);
  CHECK(r0[7] == "nan");  // no ancillary solve at t=0
  const auto r1 = cells_of(lines[3]);
  CHECK(std::strtod(r1[7].c_str(), nullptr) == 3.5);
  const auto r2 = cells_of(lines[4]);
  CHECK(r2[6] == "nan");  // no solve recorded for the final state
}

TEST_CASE("summaries jsonl: one parseable object per episode") {
  EpisodeSummary a;
  a.index = 0;
  a.seed = 11;
  a.true_parametric = Eigen::VectorXd::Constant(1, 0.25);
  a.steps = 7;
  a.reached_target = true;
  a.max_violation = Eigen::VectorXd::Zero(1);
  a.violating_steps = Eigen::VectorXi::Zero(1);
  a.solves = 7;
  a.primary_ms = 12.5;
  EpisodeSummary b = a;
  b.index = 1;
  b.seed = 12;
  b.error = "primary infeasible at t=3";

  std::ostringstream os;
  write_summaries_jsonl(os, {a, b}, "deadbeef", false);
  const auto lines = lines_of(os.str());
  REQUIRE(lines.size() == 2);
  const auto j0 = nlohmann::json::parse(lines[0]);
  CHECK(j0["config_hash"] == "deadbeef");
  CHECK(j0["seed"] == 11);
  CHECK(j0["steps"] == 7);
  CHECK(j0["reached_target"] == true);
  CHECK(j0["true_parametric"][0] == 0.25);
  CHECK_FALSE(j0.contains("primary_ms"));
  const auto j1 = nlohmann::json::parse(lines[1]);
  CHECK(j1["error"] == "primary infeasible at t=3");

  std::ostringstream os2;
  write_summaries_jsonl(os2, {a}, "deadbeef", true);
  CHECK(nlohmann::json::parse(lines_of(os2.str())[0])["primary_ms"] == 12.5);
}

TEST_CASE("tightening report: json round trip is exact") {
  TighteningReport r;
  r.safety_factor = 1.25;
  r.precision = 1e-9;
  r.rounds = 3;
  r.episodes = 54;
  r.failed = 1;
  r.baseline_g_max = Eigen::VectorXd::Constant(1, 0.117);
  r.baseline_state_lo_max = Eigen::VectorXd::Zero(1);
  r.baseline_state_hi_max = Eigen::VectorXd::Constant(1, 1.0 / 3.0);
  r.delta_initial.state_lo = Eigen::VectorXd::Zero(1);
  r.delta_initial.state_hi = Eigen::VectorXd::Constant(1, 0.333333334);
  r.delta_initial.input_lo = Eigen::VectorXd::Zero(1);
  r.delta_initial.input_hi = Eigen::VectorXd::Zero(1);
  r.delta_initial.g = Eigen::VectorXd::Constant(1, 0.14625);
  r.delta = r.delta_initial;
  r.delta.g(0) = 0.15;
  r.verification.violating_episodes = Eigen::VectorXi::Zero(2);
  r.verification.violating_steps = Eigen::VectorXi::Zero(2);
  r.verification.max_violation = Eigen::VectorXd::Zero(2);
  r.verification.episodes = 18;

  const std::string text = tightening_report_json(r, "cafe01");
  TighteningReport back = parse_tightening_report(text);
  CHECK(back.safety_factor == r.safety_factor);
  CHECK(back.rounds == 3);
  CHECK(back.baseline_state_hi_max(0) == 1.0 / 3.0);  // bit-exact double
  CHECK(back.delta.g(0) == 0.15);
  CHECK(back.delta_initial.g(0) == 0.14625);
  CHECK(back.verification.episodes == 18);
  CHECK(back.verification.violating_steps.size() == 2);
  // Second trip produces the identical document.
  CHECK(tightening_report_json(back, "cafe01") == text);

  CHECK_THROWS_WITH(parse_tightening_report("{}"),
                    doctest::Contains("safety_factor"));
  CHECK_THROWS_WITH(parse_tightening_report("not json"),
                    doctest::Contains("not valid JSON"));
}

TEST_CASE("comparison table: csv row per scheme, aligned text") {
  ComparisonTable table;
  table.constraint_labels = {"cA_max", "x[0]"};
  SchemeMetrics m;
  m.name = "tems";
  m.scenarios = 3;
  m.episodes = 100;
  m.failed = 0;
  m.avg_steps = 12.5;
  m.violating_episodes = Eigen::VectorXi::Zero(2);
  m.max_violation = Eigen::VectorXd::Zero(2);
  m.avg_solve_ms = 3.25;
  table.rows.push_back(m);
  m.name = "tube";
  m.scenarios = 1;
  m.violating_episodes(0) = 14;
  m.max_violation(0) = 0.02;
  table.rows.push_back(m);

  std::ostringstream os;
  write_comparison_csv(os, table, "feed00", 7);
  const auto lines = lines_of(os.str());
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "# config_hash=feed00 seed=7");
  CHECK(lines[1] ==
        "scheme,scenarios,episodes,failed,avg_steps,avg_solve_ms,"
        "viol_episodes[cA_max],max_violation[cA_max],"
        "viol_episodes[x[0]],max_violation[x[0]]");
  CHECK(lines[2] == "tems,3,100,0,12.5,3.25,0,0,0,0");
  const auto tube = cells_of(lines[3]);
  CHECK(tube[0] == "tube");
  CHECK(tube[6] == "14");
  CHECK(std::strtod(tube[7].c_str(), nullptr) == 0.02);

  const std::string text = format_comparison_text(table);
  CHECK(text.find("scheme") != std::string::npos);
  CHECK(text.find("viol(cA_max)") != std::string::npos);
  CHECK(text.find("tube") != std::string::npos);
  CHECK(lines_of(text).size() == 3);
}

TEST_CASE("plot data: per signal series with original bounds") {
  HandTrace h;
  const fs::path dir = fs::temp_directory_path() / "tems_trace_io_plots";
  fs::remove_all(dir);
  emit_plot_data(h.trace, h.model, dir.string(), "abc123");

  std::ifstream xs(dir / "x0.csv");
  REQUIRE(xs.good());
  std::stringstream xbuf;
  xbuf << xs.rdbuf();
  const auto xlines = lines_of(xbuf.str());
  REQUIRE(xlines.size() == 2 + 3);  // provenance + header + states
  CHECK(xlines[0] == "# config_hash=abc123 seed=77");
  CHECK(xlines[1] == "t,value,lo,hi");
  const auto xr = cells_of(xlines[2]);
  REQUIRE(xr.size() >= 3);
  CHECK(xr[2] == "");  // lower side unbounded
  CHECK(std::strtod(xlines[2].substr(xlines[2].rfind(',') + 1).c_str(), nullptr) ==
        0.5);

  std::ifstream us(dir / "u0.csv");
  REQUIRE(us.good());
  std::stringstream ubuf;
  ubuf << us.rdbuf();
  const auto ulines = lines_of(ubuf.str());
  REQUIRE(ulines.size() == 2 + 2);  // inputs only
  const auto ur = cells_of(ulines[2]);
  REQUIRE(ur.size() == 4);
  CHECK(std::strtod(ur[1].c_str(), nullptr) == 0.5);
  CHECK(std::strtod(ur[2].c_str(), nullptr) == -2.0);
  CHECK(std::strtod(ur[3].c_str(), nullptr) == 2.0);
  fs::remove_all(dir);
}
