#include "fpkflow/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fpkflow/expression.hpp"

namespace fpkflow {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_double_list(const std::string& v, int line, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError(line, key, "expected a number, got '" + tok + "'");
    }
  }
  return out;
}

double parse_double(const std::string& v, int line, const std::string& key) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(line, key, "expected a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& v, int line, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(line, key, "expected an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, int line, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(line, key, "expected true/false, got '" + v + "'");
}

}  // namespace

bool Config::has_stage(const std::string& name) const {
  return std::find(stages.begin(), stages.end(), name) != stages.end();
}

Config parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "", "cannot open config file '" + path + "'");
  Config cfg;
  std::string section;
  std::string line_text;
  int line = 0;
  while (std::getline(in, line_text)) {
    ++line;
    std::string s = trim(line_text);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(line, "", "malformed section header '" + s + "'");
      section = s.substr(1, s.size() - 2);
      const std::vector<std::string> known{"problem",    "discretization", "initial",
                                           "candidates", "selection",      "flow",
                                           "particles",  "run"};
      if (std::find(known.begin(), known.end(), section) == known.end()) {
        throw ConfigError(line, section, "unknown section");
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "", "expected key = value, got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    const std::string qualified = section + "." + key;

    if (qualified == "problem.preset") cfg.preset = value;
    else if (qualified == "problem.a") cfg.a_expr = value;
    else if (qualified == "problem.b" || qualified == "problem.bx") cfg.bx_expr = value;
    else if (qualified == "problem.by") cfg.by_expr = value;
    else if (qualified == "problem.dimension") cfg.dimension = static_cast<int>(parse_int(value, line, key));
    else if (qualified == "problem.horizon") cfg.horizon = parse_double(value, line, key);
    else if (qualified == "problem.box_lo") cfg.box_lo = parse_double(value, line, key);
    else if (qualified == "problem.box_hi") cfg.box_hi = parse_double(value, line, key);
    else if (qualified == "problem.sup_a") cfg.sup_a = parse_double(value, line, key);
    else if (qualified == "problem.sup_b") cfg.sup_b = parse_double(value, line, key);
    else if (qualified == "discretization.dx") cfg.dx = parse_double(value, line, key);
    else if (qualified == "discretization.dt") cfg.dt = parse_double(value, line, key);
    else if (qualified == "discretization.record_every") cfg.record_every = static_cast<int>(parse_int(value, line, key));
    else if (qualified == "discretization.checkpoints") cfg.checkpoints = static_cast<int>(parse_int(value, line, key));
    else if (qualified == "initial.kind") cfg.initial_kind = value;
    else if (qualified == "initial.center") cfg.center = parse_double(value, line, key);
    else if (qualified == "initial.variance") cfg.variance = parse_double(value, line, key);
    else if (qualified == "candidates.strategy") cfg.strategy = value;
    else if (qualified == "candidates.admission_tol") cfg.admission_tol = parse_double(value, line, key);
    else if (qualified == "candidates.branch_times") cfg.branch_times = parse_double_list(value, line, key);
    else if (qualified == "candidates.ladder_eps") cfg.ladder_eps = parse_double_list(value, line, key);
    else if (qualified == "selection.tie_tol") cfg.tie_tol = parse_double(value, line, key);
    else if (qualified == "selection.enumeration") cfg.enumeration = value;
    else if (qualified == "flow.starts") cfg.starts = parse_double_list(value, line, key);
    else if (qualified == "flow.tol") cfg.flow_tol = parse_double(value, line, key);
    else if (qualified == "particles.count") cfg.particle_count = static_cast<int>(parse_int(value, line, key));
    else if (qualified == "particles.dt") cfg.particle_dt = parse_double(value, line, key);
    else if (qualified == "particles.windows") cfg.windows = static_cast<int>(parse_int(value, line, key));
    else if (qualified == "particles.w1_tol") cfg.w1_tol = parse_double(value, line, key);
    else if (qualified == "particles.dump_paths") cfg.dump_paths = parse_bool(value, line, key);
    else if (qualified == "run.stages") {
      cfg.stages.clear();
      std::stringstream ss(value);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) cfg.stages.push_back(tok);
      }
    } else if (qualified == "run.seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_int(value, line, key));
    } else if (qualified == "run.out") {
      cfg.out_dir = value;
    } else if (qualified == "run.workers") {
      cfg.workers = static_cast<int>(parse_int(value, line, key));
    } else {
      throw ConfigError(line, key, "unknown key in section [" + section + "]");
    }
  }

  // Cross-field checks.
  const std::vector<std::string> known_stages{"validate",   "generate", "select",    "assemble",
                                              "flow_check", "probe",    "particles"};
  for (const auto& st : cfg.stages) {
    if (std::find(known_stages.begin(), known_stages.end(), st) == known_stages.end()) {
      throw ConfigError(0, "stages", "unknown stage '" + st + "'");
    }
  }
  if (cfg.dimension < 1 || cfg.dimension > 2) {
    throw ConfigError(0, "dimension", "dimension must be 1 or 2");
  }
  if (cfg.preset == "custom" && cfg.bx_expr.empty()) {
    throw ConfigError(0, "b", "custom problems need a drift expression");
  }
  return cfg;
}

std::string config_schema() {
  return R"(# fpkflow configuration schema (defaults shown)
[problem]
preset = heat            # heat | zero | sqrt_branch | ou_tanh | custom
# custom problems: expressions over t, x, y with + - * / min max sqrt tanh abs
# a = 1.0                # isotropic diffusion entry (diagonal a = a(t,x) I)
# b = -tanh(x)           # drift (1d); use bx/by for dimension = 2
# dimension = 1          # 1 or 2
# horizon = 1.0          # time horizon T
# box_lo = -8.0          # domain box per axis
# box_hi = 8.0
# sup_a = -1             # <0: estimate the sup bounds by sampling (custom)
# sup_b = -1

[discretization]
dx = 0.01                # grid spacing
dt = 1e-4                # forward solver step target
record_every = 25        # steps between recorded marginals (grid solves)
checkpoints = 8          # number of checkpoint intervals on [0, T]

[initial]
kind = dirac             # dirac | gaussian
center = 0.0
variance = 1.0           # gaussian only

[candidates]
strategy = solver_single # solver_single | branching_catalog | mollification_ladder | mixture_hull
admission_tol = 1e-4     # weak-residual admission tolerance
branch_times =           # branching_catalog: comma list; empty = checkpoints
ladder_eps = 1e-3,5e-4,2.5e-4

[selection]
tie_tol = -1             # <0: 1e-9 for atomic candidates, 1e-6 for grids
enumeration = diagonal   # diagonal | first:<function_id>@<time>

[flow]
starts = 0               # start times (initial datum from [initial])
tol = -1                 # <0: 2x admission tolerance

[particles]
count = 100000
dt = 1e-3
windows = 4              # quantile windows in the martingale test
w1_tol = 0.02            # marginal agreement tolerance vs the solver
dump_paths = false       # raw snapshot dump (binary, header N/steps/dt/s)

[run]
stages = validate,generate,select,assemble,flow_check,probe,particles
seed = 42
out = out
workers = 0              # 0 = hardware concurrency
)";
}

Problem build_problem(const Config& cfg) {
  if (cfg.preset != "custom") return preset(cfg.preset);

  Problem p;
  p.preset_id = "custom";
  Coefficients& c = p.coefficients;
  c.dimension = cfg.dimension;
  c.horizon = cfg.horizon;

  Expression a_expr = Expression::parse(cfg.a_expr.empty() ? "0" : cfg.a_expr);
  Expression bx = Expression::parse(cfg.bx_expr);
  Expression by = cfg.by_expr.empty() ? Expression::parse("0") : Expression::parse(cfg.by_expr);
  c.time_dependent = a_expr.uses_time() || bx.uses_time() || by.uses_time();

  const int d = cfg.dimension;
  c.a = [a_expr, d](double t, const Vector& x, Matrix& a) {
    const double v = a_expr.eval(t, x[0], d == 2 ? x[1] : 0.0);
    a.setZero();
    for (int k = 0; k < d; ++k) a(k, k) = v;
  };
  c.b = [bx, by, d](double t, const Vector& x, Vector& b) {
    b[0] = bx.eval(t, x[0], d == 2 ? x[1] : 0.0);
    if (d == 2) b[1] = by.eval(t, x[0], x[1]);
  };

  p.domain_box.lo = Vector::Constant(d, cfg.box_lo);
  p.domain_box.hi = Vector::Constant(d, cfg.box_hi);

  if (cfg.sup_a >= 0.0 && cfg.sup_b >= 0.0) {
    c.sup_bound_a = cfg.sup_a;
    c.sup_bound_b = cfg.sup_b;
  } else {
    // Sampled sup bounds over the box and horizon.
    double sa = 0.0, sb = 0.0;
    Matrix a(d, d);
    Vector b(d), x(d);
    const int nt = c.time_dependent ? 21 : 1;
    for (int it = 0; it < nt; ++it) {
      const double t = cfg.horizon * it / std::max(1, nt - 1);
      const int nx = 201;
      for (int i = 0; i < nx; ++i) {
        x[0] = cfg.box_lo + (cfg.box_hi - cfg.box_lo) * i / (nx - 1);
        const int ny = d == 2 ? 41 : 1;
        for (int j = 0; j < ny; ++j) {
          if (d == 2) x[1] = cfg.box_lo + (cfg.box_hi - cfg.box_lo) * j / (ny - 1);
          c.a(t, x, a);
          c.b(t, x, b);
          sa = std::max(sa, a.cwiseAbs().maxCoeff());
          sb = std::max(sb, b.cwiseAbs().maxCoeff());
        }
      }
    }
    c.sup_bound_a = cfg.sup_a >= 0.0 ? cfg.sup_a : sa;
    c.sup_bound_b = cfg.sup_b >= 0.0 ? cfg.sup_b : sb;
  }
  return p;
}

GridSpec build_grid(const Config& cfg, const Problem& p) {
  return GridSpec::cover(p.domain_box.lo, p.domain_box.hi, cfg.dx);
}

Measure build_initial(const Config& cfg, const Problem& p, const GridSpec& grid) {
  if (cfg.initial_kind == "dirac") {
    Vector x = Vector::Constant(p.dimension(), cfg.center);
    return Measure::dirac(x);
  }
  if (cfg.initial_kind == "gaussian") {
    Vector mean = Vector::Constant(p.dimension(), cfg.center);
    return Measure::gaussian_on_grid(grid, mean, cfg.variance);
  }
  throw ConfigError(0, "kind", "unknown initial kind '" + cfg.initial_kind +
                                   "' (expected dirac or gaussian)");
}

}  // namespace fpkflow
