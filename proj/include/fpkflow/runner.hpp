#pragma once

#include <string>

#include "fpkflow/config.hpp"

namespace fpkflow {

struct RunOutcome {
  int exit_code = 0;  // 0 all-pass, 1 stage failure, 2 config error
  std::string failed_stage;
  std::string verdict;  // probe verdict when that stage ran
};

/// Executes the configured stages (validate, generate, select, assemble,
/// flow_check, probe, particles), writing report.json, trace.json, candidate
/// dumps, flow/verdict reports and plot CSVs under out_dir. Reports are
/// byte-stable for fixed seeds; timestamps live in metadata.json only.
RunOutcome run_pipeline(const Config& cfg, const std::string& out_dir, bool expect_wellposed);

/// Re-executes the selection stored in a trace against its candidate dump and
/// compares u-values and survivor sets step by step.
/// Returns 0 (identical), 1 (divergence, diff printed), 2 (missing files).
int replay_trace(const std::string& trace_path);

}  // namespace fpkflow
