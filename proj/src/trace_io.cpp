#include "tems/trace_io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace tems {
namespace {

using Json = nlohmann::ordered_json;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  return os;
}

void provenance_line(std::ostream& os, const std::string& config_hash, uint64_t seed) {
  os << "# config_hash=" << (config_hash.empty() ? "none" : config_hash)
     << " seed=" << seed << "\n";
}

// Cell helpers: a vector entry when defined at this row, NaN otherwise.
void put(std::ostream& os, double v) { os << "," << format_g17(v); }

void put_vec(std::ostream& os, const std::vector<Eigen::VectorXd>& series, size_t t,
             int dims) {
  if (t < series.size() && series[t].size() == dims)
    for (int i = 0; i < dims; ++i) put(os, series[t](i));
  else
    for (int i = 0; i < dims; ++i) put(os, kNan);
}

Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json ivec_json(const Eigen::VectorXi& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd json_vec(const Json& j, const char* field) {
  if (!j.is_array()) throw std::runtime_error(std::string("tightening report: '") +
                                              field + "' must be an array");
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) {
    if (!j[i].is_number())
      throw std::runtime_error(std::string("tightening report: '") + field +
                               "' must hold numbers");
    v(i) = j[i].get<double>();
  }
  return v;
}

Eigen::VectorXi json_ivec(const Json& j, const char* field) {
  if (!j.is_array()) throw std::runtime_error(std::string("tightening report: '") +
                                              field + "' must be an array");
  Eigen::VectorXi v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) {
    if (!j[i].is_number_integer())
      throw std::runtime_error(std::string("tightening report: '") + field +
                               "' must hold integers");
    v(i) = j[i].get<int>();
  }
  return v;
}

const Json& field(const Json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end())
    throw std::runtime_error(std::string("tightening report: missing '") + name + "'");
  return it.value();
}

Json delta_json(const DeltaSpec& d) {
  Json j;
  j["state_lo"] = vec_json(d.state_lo);
  j["state_hi"] = vec_json(d.state_hi);
  j["input_lo"] = vec_json(d.input_lo);
  j["input_hi"] = vec_json(d.input_hi);
  j["g"] = vec_json(d.g);
  return j;
}

DeltaSpec json_delta(const Json& j, const char* name) {
  if (!j.is_object())
    throw std::runtime_error(std::string("tightening report: '") + name +
                             "' must be an object");
  DeltaSpec d;
  d.state_lo = json_vec(field(j, "state_lo"), "state_lo");
  d.state_hi = json_vec(field(j, "state_hi"), "state_hi");
  d.input_lo = json_vec(field(j, "input_lo"), "input_lo");
  d.input_hi = json_vec(field(j, "input_hi"), "input_hi");
  d.g = json_vec(field(j, "g"), "g");
  return d;
}

}  // namespace

std::string format_g17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

void write_trace_csv(std::ostream& os, const ClosedLoopTrace& trace,
                     const ModelSpec& model, const std::string& config_hash,
                     bool include_timing) {
  const int n_x = model.n_x, n_u = model.n_u, n_d = model.n_d;
  const int n_viol = static_cast<int>(trace.violations.cols());
  provenance_line(os, config_hash, trace.summary.seed);
  os << "t";
  for (int i = 0; i < n_x; ++i) os << ",x[" << i << "]";
  for (int i = 0; i < n_x; ++i) os << ",z[" << i << "]";
  for (int i = 0; i < n_u; ++i) os << ",u[" << i << "]";
  for (int i = 0; i < n_d; ++i) os << ",dbar[" << i << "]";
  for (int i = 0; i < n_viol; ++i) os << ",viol[" << i << "]";
  os << ",t_primary_ms,t_ancillary_ms\n";

  for (size_t t = 0; t < trace.x.size(); ++t) {
    os << t;
    put_vec(os, trace.x, t, n_x);
    put_vec(os, trace.z, t, n_x);
    put_vec(os, trace.u, t, n_u);
    put_vec(os, trace.d_bar, t, n_d);
    if (static_cast<int>(t) < trace.violations.rows())
      for (int i = 0; i < n_viol; ++i) put(os, trace.violations(t, i));
    else
      for (int i = 0; i < n_viol; ++i) put(os, kNan);
    const bool timed = include_timing && t < trace.primary_ms.size();
    put(os, timed ? trace.primary_ms[t] : kNan);
    put(os, timed ? trace.ancillary_ms[t] : kNan);
    os << "\n";
  }
}

void save_trace_csv(const std::string& path, const ClosedLoopTrace& trace,
                    const ModelSpec& model, const std::string& config_hash,
                    bool include_timing) {
  std::ofstream os = open_out(path);
  write_trace_csv(os, trace, model, config_hash, include_timing);
}

void write_summaries_jsonl(std::ostream& os,
                           const std::vector<EpisodeSummary>& summaries,
                           const std::string& config_hash, bool include_timing) {
  for (const EpisodeSummary& s : summaries) {
    Json j;
    j["config_hash"] = config_hash.empty() ? "none" : config_hash;
    j["index"] = s.index;
    j["seed"] = s.seed;
    j["true_parametric"] = vec_json(s.true_parametric);
    j["steps"] = s.steps;
    j["reached_target"] = s.reached_target;
    j["error"] = s.error;
    j["max_violation"] = vec_json(s.max_violation);
    j["violating_steps"] = ivec_json(s.violating_steps);
    j["solves"] = s.solves;
    j["sqp_iterations"] = s.sqp_iterations;
    if (include_timing) {
      j["primary_ms"] = s.primary_ms;
      j["ancillary_ms"] = s.ancillary_ms;
    }
    os << j.dump() << "\n";
  }
}

void save_summaries_jsonl(const std::string& path,
                          const std::vector<EpisodeSummary>& summaries,
                          const std::string& config_hash, bool include_timing) {
  std::ofstream os = open_out(path);
  write_summaries_jsonl(os, summaries, config_hash, include_timing);
}

std::string tightening_report_json(const TighteningReport& report,
                                   const std::string& config_hash) {
  Json j;
  j["config_hash"] = config_hash.empty() ? "none" : config_hash;
  j["safety_factor"] = report.safety_factor;
  j["precision"] = report.precision;
  j["rounds"] = report.rounds;
  j["episodes"] = report.episodes;
  j["failed"] = report.failed;
  j["baseline_g_max"] = vec_json(report.baseline_g_max);
  j["baseline_state_lo_max"] = vec_json(report.baseline_state_lo_max);
  j["baseline_state_hi_max"] = vec_json(report.baseline_state_hi_max);
  j["delta_initial"] = delta_json(report.delta_initial);
  j["delta"] = delta_json(report.delta);
  Json v;
  v["violating_episodes"] = ivec_json(report.verification.violating_episodes);
  v["violating_steps"] = ivec_json(report.verification.violating_steps);
  v["max_violation"] = vec_json(report.verification.max_violation);
  v["episodes"] = report.verification.episodes;
  v["failed"] = report.verification.failed;
  j["verification"] = std::move(v);
  return j.dump(2) + "\n";
}

TighteningReport parse_tightening_report(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("tightening report: not valid JSON: ") +
                             e.what());
  }
  if (!j.is_object()) throw std::runtime_error("tightening report: not an object");
  TighteningReport r;
  r.safety_factor = field(j, "safety_factor").get<double>();
  r.precision = field(j, "precision").get<double>();
  r.rounds = field(j, "rounds").get<int>();
  r.episodes = field(j, "episodes").get<int>();
  r.failed = field(j, "failed").get<int>();
  r.baseline_g_max = json_vec(field(j, "baseline_g_max"), "baseline_g_max");
  r.baseline_state_lo_max =
      json_vec(field(j, "baseline_state_lo_max"), "baseline_state_lo_max");
  r.baseline_state_hi_max =
      json_vec(field(j, "baseline_state_hi_max"), "baseline_state_hi_max");
  r.delta_initial = json_delta(field(j, "delta_initial"), "delta_initial");
  r.delta = json_delta(field(j, "delta"), "delta");
  const Json& v = field(j, "verification");
  r.verification.violating_episodes =
      json_ivec(field(v, "violating_episodes"), "violating_episodes");
  r.verification.violating_steps =
      json_ivec(field(v, "violating_steps"), "violating_steps");
  r.verification.max_violation = json_vec(field(v, "max_violation"), "max_violation");
  r.verification.episodes = field(v, "episodes").get<int>();
  r.verification.failed = field(v, "failed").get<int>();
  return r;
}

void save_tightening_report(const std::string& path, const TighteningReport& report,
                            const std::string& config_hash) {
  open_out(path) << tightening_report_json(report, config_hash);
}

TighteningReport load_tightening_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_tightening_report(ss.str());
}

void write_comparison_csv(std::ostream& os, const ComparisonTable& table,
                          const std::string& config_hash, uint64_t seed) {
  provenance_line(os, config_hash, seed);
  os << "scheme,scenarios,episodes,failed,avg_steps,avg_solve_ms";
  for (const std::string& label : table.constraint_labels)
    os << ",viol_episodes[" << label << "],max_violation[" << label << "]";
  os << "\n";
  for (const SchemeMetrics& row : table.rows) {
    os << row.name << "," << row.scenarios << "," << row.episodes << "," << row.failed
       << "," << format_g17(row.avg_steps) << "," << format_g17(row.avg_solve_ms);
    for (int c = 0; c < static_cast<int>(table.constraint_labels.size()); ++c) {
      const int eps = c < row.violating_episodes.size() ? row.violating_episodes(c) : 0;
      const double mv = c < row.max_violation.size() ? row.max_violation(c) : 0.0;
      os << "," << eps << "," << format_g17(mv);
    }
    os << "\n";
  }
}

void save_comparison_csv(const std::string& path, const ComparisonTable& table,
                         const std::string& config_hash, uint64_t seed) {
  std::ofstream os = open_out(path);
  write_comparison_csv(os, table, config_hash, seed);
}

std::string format_comparison_text(const ComparisonTable& table) {
  std::ostringstream os;
  std::vector<std::string> headers = {"scheme",    "scenarios",    "episodes",
                                      "failed",    "avg_steps",    "avg_solve_ms"};
  for (const std::string& label : table.constraint_labels) {
    headers.push_back("viol(" + label + ")");
    headers.push_back("max(" + label + ")");
  }
  std::vector<std::vector<std::string>> cells;
  for (const SchemeMetrics& row : table.rows) {
    std::vector<std::string> line = {row.name, std::to_string(row.scenarios),
                                     std::to_string(row.episodes),
                                     std::to_string(row.failed)};
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", row.avg_steps);
    line.push_back(buf);
    std::snprintf(buf, sizeof(buf), "%.4g", row.avg_solve_ms);
    line.push_back(buf);
    for (int c = 0; c < static_cast<int>(table.constraint_labels.size()); ++c) {
      line.push_back(std::to_string(c < row.violating_episodes.size()
                                        ? row.violating_episodes(c)
                                        : 0));
      std::snprintf(buf, sizeof(buf), "%.4g",
                    c < row.max_violation.size() ? row.max_violation(c) : 0.0);
      line.push_back(buf);
    }
    cells.push_back(std::move(line));
  }
  std::vector<size_t> width(headers.size());
  for (size_t c = 0; c < headers.size(); ++c) {
    width[c] = headers[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  auto emit = [&](const std::vector<std::string>& line) {
    for (size_t c = 0; c < line.size(); ++c)
      os << std::left << std::setw(static_cast<int>(width[c]) + 2) << line[c];
    os << "\n";
  };
  emit(headers);
  for (const auto& line : cells) emit(line);
  return os.str();
}

void emit_plot_data(const ClosedLoopTrace& trace, const ModelSpec& model,
                    const std::string& dir, const std::string& config_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto bound_cell = [](double b) {
    return std::isfinite(b) ? format_g17(b) : std::string();
  };
  for (int i = 0; i < model.n_x; ++i) {
    std::ofstream os = open_out((fs::path(dir) / ("x" + std::to_string(i) + ".csv")).string());
    provenance_line(os, config_hash, trace.summary.seed);
    os << "t,value,lo,hi\n";
    const Interval& b = model.state_bounds[i];
    for (size_t t = 0; t < trace.x.size(); ++t)
      os << t << "," << format_g17(trace.x[t](i)) << "," << bound_cell(b.lo) << ","
         << bound_cell(b.hi) << "\n";
  }
  for (int i = 0; i < model.n_u; ++i) {
    std::ofstream os = open_out((fs::path(dir) / ("u" + std::to_string(i) + ".csv")).string());
    provenance_line(os, config_hash, trace.summary.seed);
    os << "t,value,lo,hi\n";
    const Interval& b = model.input_bounds[i];
    for (size_t t = 0; t < trace.u.size(); ++t)
      os << t << "," << format_g17(trace.u[t](i)) << "," << bound_cell(b.lo) << ","
         << bound_cell(b.hi) << "\n";
  }
}

}  // namespace tems
