#pragma once

// Persistence: trace CSVs, episode summary JSONL, tightening report JSON,
// comparison tables and per-signal plot series. Numbers are written with 17
// significant digits so identical runs produce byte-identical files; every
// file starts with the config hash and seed it came from.

#include <ostream>
#include <string>
#include <vector>

#include "tems/calibration.hpp"
#include "tems/closed_loop.hpp"

namespace tems {

// %.17g with the platform-independent spellings nan/inf.
std::string format_g17(double v);

// One row per trace state. Header follows
//   t,x[0..],z[0..],u[0..],dbar[0..],viol[0..],t_primary_ms,t_ancillary_ms
// with NaN for undefined cells (final row's input, the first row's
// estimate, input-dependent violations at the terminal state). Timing
// columns are NaN unless include_timing is set, keeping the file
// reproducible across machines by default.
void write_trace_csv(std::ostream& os, const ClosedLoopTrace& trace,
                     const ModelSpec& model, const std::string& config_hash,
                     bool include_timing = false);
void save_trace_csv(const std::string& path, const ClosedLoopTrace& trace,
                    const ModelSpec& model, const std::string& config_hash,
                    bool include_timing = false);

// One JSON object per episode and line. Timing fields appear only with
// include_timing.
void write_summaries_jsonl(std::ostream& os,
                           const std::vector<EpisodeSummary>& summaries,
                           const std::string& config_hash,
                           bool include_timing = false);
void save_summaries_jsonl(const std::string& path,
                          const std::vector<EpisodeSummary>& summaries,
                          const std::string& config_hash,
                          bool include_timing = false);

// Full report round-trip; load rejects malformed documents with a message
// naming the field.
std::string tightening_report_json(const TighteningReport& report,
                                   const std::string& config_hash);
TighteningReport parse_tightening_report(const std::string& text);
void save_tightening_report(const std::string& path, const TighteningReport& report,
                            const std::string& config_hash);
TighteningReport load_tightening_report(const std::string& path);

// One CSV row per scheme with per-constraint violation columns, plus an
// aligned text rendering for the terminal.
void write_comparison_csv(std::ostream& os, const ComparisonTable& table,
                          const std::string& config_hash, uint64_t seed);
void save_comparison_csv(const std::string& path, const ComparisonTable& table,
                         const std::string& config_hash, uint64_t seed);
std::string format_comparison_text(const ComparisonTable& table);

// Per-signal series x<i>.csv and u<i>.csv under `dir` (created if needed):
// t,value,lo,hi against the ORIGINAL bounds, unbounded sides left empty.
// State series have one row per trace state, input series one per input.
void emit_plot_data(const ClosedLoopTrace& trace, const ModelSpec& model,
                    const std::string& dir, const std::string& config_hash);

}  // namespace tems
