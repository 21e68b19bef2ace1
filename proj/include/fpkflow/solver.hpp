#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fpkflow/measure.hpp"
#include "fpkflow/problem.hpp"
#include "fpkflow/types.hpp"

namespace fpkflow {

enum class Provenance { Solver, Analytic, Particle, Glued, BranchingCatalog };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

/// Narrowly continuous curve of discrete measures on [s, T], stored at the
/// recorded times. times.front() == s and times.back() == T.
struct SolutionCurve {
  double s = 0.0;
  double T = 1.0;
  std::vector<double> times;
  std::vector<Measure> marginals;
  Provenance provenance = Provenance::Solver;
  /// Curve-level constant C with W1(mu_k, mu_{k+1}) <= C sqrt(dt_k).
  double continuity_constant = 0.0;
  double boundary_mass = 0.0;
  double clipped_mass = 0.0;
  std::string key = "curve";

  Index time_index(double t) const { return find_time_index(times, t); }
  /// Marginal at time t; throws when t is not on the recorded grid.
  const Measure& at(double t) const;
  const Measure& initial() const { return marginals.front(); }
  const Measure& terminal() const { return marginals.back(); }
};

/// Step layout for a solve on [s, T]: checkpoint-aligned intervals, each
/// subdivided into substeps[j] uniform steps (a multiple of record_every).
/// Checkpoints land on recorded times exactly.
struct TimeGrid {
  std::vector<double> knots;
  std::vector<int> substeps;
  int record_every = 1;
  std::vector<double> record_times;

  double dt(std::size_t interval) const {
    return (knots[interval + 1] - knots[interval]) / substeps[interval];
  }
  double max_dt() const;
};

TimeGrid build_time_grid(double s, double T, const std::vector<double>& checkpoints,
                         double dt_target, int record_every);

struct SolveOptions {
  double dt = 1e-4;
  GridSpec grid;
  int record_every = 25;
  /// Times that must appear on the recorded grid (checkpoints).
  std::vector<double> checkpoints;
};

/// Largest stable explicit step for the given spacing and coefficient bounds.
double stable_dt(double spacing, double sup_a, double sup_b, int dimension);

/// Conservative explicit finite-volume solve of the forward equation on a
/// grid (Chang-Cooper interface weighting; zero-flux boundaries). Degenerate
/// diffusion with atomic initial data is transported along RK4
/// characteristics instead, recorded at every step.
SolutionCurve solve_forward(const Problem& p, double s, const Measure& nu,
                            const SolveOptions& opts);

/// max over f in fs and (t1,t2) in pairs of
///   | int f dmu_t2 - int f dmu_t1 - int_t1^t2 int L_u f dmu_u du |
/// with the time integral by the trapezoid rule on the curve's own grid and
/// L_u f = 1/2 a : D^2 f + b . grad f.
double weak_residual(const SolutionCurve& curve, const Problem& p,
                     const std::vector<TestFunction>& fs,
                     const std::vector<std::pair<double, double>>& pairs);

/// max over f and adjacent recorded times of | int f dmu_{k+1} - int f dmu_k |.
double narrow_continuity_modulus(const SolutionCurve& curve,
                                 const std::vector<TestFunction>& fs);

double compute_continuity_constant(const SolutionCurve& curve);

/// Directory layout: manifest.json plus one measure CSV per recorded time.
void save_curve(const SolutionCurve& curve, const std::string& dir);
SolutionCurve load_curve(const std::string& dir);

}  // namespace fpkflow
