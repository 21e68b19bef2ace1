#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fpkflow/measure.hpp"
#include "fpkflow/problem.hpp"
#include "fpkflow/solver.hpp"

namespace fpkflow {

/// Finite stand-in for the solution set from (s, nu): every curve starts at
/// nu, passes the weak-residual admission check, and shares one time grid.
struct CandidateSet {
  double s = 0.0;
  Measure nu = Measure::dirac1d(0.0);
  std::vector<SolutionCurve> curves;
  double admission_tolerance = 1e-4;
  /// (curve key, reason) for generated curves that failed admission.
  std::vector<std::pair<std::string, std::string>> exclusions;

  const SolutionCurve* find(const std::string& key) const;
};

enum class GenerateStrategy { BranchingCatalog, MollificationLadder, MixtureHull, SolverSingle };

GenerateStrategy strategy_from_name(const std::string& name);
std::string strategy_name(GenerateStrategy s);

struct GenerateParams {
  SolveOptions solve;
  double admission_tolerance = 1e-4;
  /// Residual certification data; defaults to the bounded tanh family and the
  /// standard checkpoint pairs when left empty.
  std::vector<TestFunction> admission_family;
  std::vector<std::pair<double, double>> admission_pairs;
  /// BranchingCatalog: absolute branch times (defaults to the checkpoints
  /// in [s, T)); the stay-at-rest curve is always included.
  std::vector<double> branch_times;
  /// MollificationLadder: smoothing radii, solved in addition to eps = 0.
  std::vector<double> ladder_epsilons{1e-3, 5e-4, 2.5e-4};
  /// MixtureHull: base curves and one weight vector per mixture.
  const CandidateSet* mixture_base = nullptr;
  std::vector<Vector> mixture_weights;
};

/// Admission pairs used throughout: (s,q) for every later checkpoint q plus
/// all adjacent checkpoint pairs.
std::vector<std::pair<double, double>> standard_admission_pairs(
    double s, double T, const std::vector<double>& checkpoints);

CandidateSet generate_candidates(const Problem& p, double s, const Measure& nu,
                                 GenerateStrategy strategy, const GenerateParams& params);

/// Concatenation of front on [s,r] and back on [r,T]; requires the endpoint
/// measures to agree within W1 <= 1e-9. The marginal stored at r (and after)
/// is back's, so restriction at r recovers back exactly.
SolutionCurve glue(const SolutionCurve& front, const SolutionCurve& back);

/// Tail of the curve from recorded time r (no interpolation; r must be on the
/// curve's grid).
SolutionCurve restrict_curve(const SolutionCurve& curve, double r);

/// Convex combination of measures with the given weights.
Measure mix_measures(const std::vector<const Measure*>& ms, const Vector& weights);

SolutionCurve mix_curves(const std::vector<const SolutionCurve*>& curves, const Vector& weights,
                         const std::string& key);

}  // namespace fpkflow
