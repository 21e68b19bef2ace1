#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpkflow/measure.hpp"
#include "fpkflow/problem.hpp"

namespace fpkflow {

struct ConfigError : std::runtime_error {
  int line = 0;
  std::string key;
  ConfigError(int line_, std::string key_, const std::string& what_)
      : std::runtime_error("config error at line " + std::to_string(line_) +
                           (key_.empty() ? "" : " (key '" + key_ + "')") + ": " + what_),
        line(line_),
        key(std::move(key_)) {}
};

/// Declarative experiment description; `fpkflow --print-schema` documents
/// every key and default.
struct Config {
  // [problem]
  std::string preset = "heat";
  std::string a_expr, bx_expr, by_expr;  // custom problems
  int dimension = 1;
  double horizon = 1.0;
  double box_lo = -8.0, box_hi = 8.0;
  double sup_a = -1.0, sup_b = -1.0;  // < 0: estimate by sampling (custom only)

  // [discretization]
  double dx = 0.01;
  double dt = 1e-4;
  int record_every = 25;
  int checkpoints = 8;

  // [initial]
  std::string initial_kind = "dirac";  // dirac | gaussian
  double center = 0.0;
  double variance = 1.0;

  // [candidates]
  std::string strategy = "solver_single";
  double admission_tol = 1e-4;
  std::vector<double> branch_times;
  std::vector<double> ladder_eps{1e-3, 5e-4, 2.5e-4};

  // [selection]
  double tie_tol = -1.0;  // < 0: 1e-9 for atomic sets, 1e-6 for grid sets
  std::string enumeration = "diagonal";  // or first:<function_id>@<time>

  // [flow]
  std::vector<double> starts{0.0};
  double flow_tol = -1.0;  // < 0: 2x admission tolerance (1e-9 atomic)

  // [particles]
  int particle_count = 100000;
  double particle_dt = 1e-3;
  int windows = 4;
  double w1_tol = 0.02;
  bool dump_paths = false;

  // [run]
  std::vector<std::string> stages{"validate",   "generate", "select",    "assemble",
                                  "flow_check", "probe",    "particles"};
  std::uint64_t seed = 42;
  std::string out_dir = "out";
  int workers = 0;  // 0 = hardware concurrency

  bool has_stage(const std::string& name) const;
};

Config parse_config(const std::string& path);

/// Full schema with defaults, suitable for --print-schema.
std::string config_schema();

/// Problem from the config (preset catalog or compiled expressions with
/// sampled sup bounds).
Problem build_problem(const Config& cfg);

GridSpec build_grid(const Config& cfg, const Problem& p);

Measure build_initial(const Config& cfg, const Problem& p, const GridSpec& grid);

}  // namespace fpkflow
