#pragma once

#include <string>
#include <vector>

#include "npasa/solver.hpp"

namespace npasa {

/// JSONL encoding of one TraceRecord (single line, no newline).
std::string trace_record_to_json(const TraceRecord& rec);
TraceRecord trace_record_from_json(const std::string& line);

struct RunReport {
  std::string problem;
  bool converged = false;
  ErrorReport final_report;
  double wall_time_s = 0;
  int outer_iters = 0;
  int phase_one_iters = 0;
  int phase_two_iters = 0;
  std::string termination_reason;
  std::string trace_path;
  std::string report_path;
};
std::string run_report_to_json(const RunReport& report);

/// Entry point used by the binary and by the tests. args excludes argv[0].
/// Exit codes: 0 success/converged, 1 input error, 2 non-convergence,
/// 3 verification failure.
int cli_main(const std::vector<std::string>& args);

}  // namespace npasa
