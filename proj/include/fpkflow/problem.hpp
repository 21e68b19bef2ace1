#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fpkflow/measure.hpp"
#include "fpkflow/types.hpp"

namespace fpkflow {

/// Diffusion matrix a(t,x) and drift b(t,x) with their global sup bounds.
/// Evaluators fill caller-provided buffers and must be pure and reentrant.
struct Coefficients {
  int dimension = 1;
  double horizon = 1.0;
  double sup_bound_a = 0.0;
  double sup_bound_b = 0.0;
  bool time_dependent = false;
  std::function<void(double t, const Vector& x, Matrix& a)> a;
  std::function<void(double t, const Vector& x, Vector& b)> b;
};

struct Box {
  Vector lo, hi;
  bool contains(const Vector& x) const {
    for (Index k = 0; k < x.size(); ++k) {
      if (x[k] < lo[k] || x[k] > hi[k]) return false;
    }
    return true;
  }
};

struct Problem {
  Coefficients coefficients;
  Box domain_box;
  std::string preset_id = "custom";
  /// Optional analytic marginal for reference initial data; null otherwise.
  std::function<Measure(double s, double t, const Measure& nu, const GridSpec& grid)>
      known_solution;

  int dimension() const { return coefficients.dimension; }
  double horizon() const { return coefficients.horizon; }
};

struct CheckResult {
  std::string name;
  bool pass = true;
  double worst_t = 0.0;
  Vector worst_x;
  double worst_value = 0.0;
  std::string message;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool all_pass() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }
  const CheckResult* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

/// Probe points for coefficient validation.
struct ProbeGrid {
  std::vector<double> times;
  std::vector<Vector> points;
  /// nt x nx regular grid over [0,horizon] x box (per axis; nx^d points).
  static ProbeGrid regular(const Box& box, double horizon, int nt, int nx);
};

/// Checks symmetry, nonnegative-definiteness and the sup bounds at every
/// probe, plus a sampled modulus-of-continuity test in x on dyadic refinement
/// sequences. Evaluator failures become failing entries, never exceptions.
ValidationReport validate_coefficients(const Coefficients& c, const ProbeGrid& probes);

/// Bundled problems: "heat", "zero", "sqrt_branch", "ou_tanh".
Problem preset(const std::string& name);

/// Names accepted by preset(), for error messages and the CLI schema.
const std::vector<std::string>& preset_names();

}  // namespace fpkflow
