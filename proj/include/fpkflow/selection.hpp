#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fpkflow/family.hpp"
#include "fpkflow/measure.hpp"
#include "fpkflow/solver.hpp"
#include "fpkflow/test_functions.hpp"

namespace fpkflow {

/// Ordered family of bounded test functions used to drive the selection.
/// closed_under_negation means -f is in the list for every member f.
struct MeasureDeterminingFamily {
  std::vector<TestFunction> functions;
  bool closed_under_negation = false;
  /// Rebuild parameters when the family is tanh-based (trace serialization).
  std::vector<TanhSpec> tanh_spec;

  int index_of(const std::string& id) const;
};

MeasureDeterminingFamily default_family(int dimension);
MeasureDeterminingFamily family_from_specs(const std::vector<TanhSpec>& specs, int dimension);

/// Bijective ordering of (function index, checkpoint time) pairs. Restricting
/// to times >= s deletes entries without reordering, so the restricted order
/// is a subsequence of the full one.
struct Enumeration {
  int n_functions = 0;
  std::vector<double> checkpoints;
  std::vector<std::pair<int, double>> order;

  /// Interleaved diagonal: pairs sorted by (time index + function index),
  /// ties by time index.
  static Enumeration diagonal(int n_functions, const std::vector<double>& checkpoints);
  /// Same pairs with (function_index, q) moved to the front.
  Enumeration with_first(int function_index, double q) const;

  std::vector<std::pair<int, double>> restricted_to(double s) const;
  void validate() const;
};

struct SelectionStep {
  int step = 0;
  int function_index = 0;
  std::string function_id;
  double q = 0.0;
  double u = 0.0;
  std::vector<std::string> survivors;
};

struct SelectionTrace {
  double tie_tol = 0.0;
  std::vector<SelectionStep> steps;
  std::vector<std::string> final_survivors;
  std::string selected_key;
};

struct SelectionResult {
  std::size_t selected_index = 0;
  SelectionTrace trace;
};

/// Marginals of the curve at exactly the requested times (errors off-grid).
std::vector<Measure> project_times(const SolutionCurve& curve, const std::vector<double>& q_grid);

/// 1e-9 for atomic candidate sets, 1e-6 for grid-backed ones.
double default_tie_tol(const CandidateSet& cs);

/// Iterated maximization over the candidate set: at step k keep the curves
/// within tie_tol of sup integral f_{n_k} dmu_{q_k} over the survivors. Stops
/// at a single survivor or when the enumeration is exhausted; leftover
/// survivors must be pairwise W1-indistinguishable at every checkpoint.
SelectionResult select(const CandidateSet& cs, const MeasureDeterminingFamily& fam,
                       const Enumeration& enumeration, double tie_tol);

struct FlowEntry {
  double s = 0.0;
  std::string nu_key;
  Measure nu = Measure::dirac1d(0.0);
  SolutionCurve curve;
  SelectionTrace trace;
};

/// Selected curve per (start time, initial measure), closed under restarting
/// from later checkpoints.
struct FlowTable {
  std::vector<double> checkpoints;
  std::vector<FlowEntry> entries;

  const FlowEntry* find(double s, const std::string& nu_key) const;
};

struct AssembleOptions {
  GenerateStrategy strategy = GenerateStrategy::SolverSingle;
  GenerateParams params;
  double tie_tol = 1e-9;
  std::vector<double> checkpoints;
};

/// For every start (s, nu): generate candidates, select, store; then recurse
/// on (r, mu^{s,nu}_r) for all later checkpoints r so flow checks are closed.
FlowTable assemble_flow(const Problem& p, const std::vector<std::pair<double, Measure>>& starts,
                        const MeasureDeterminingFamily& fam, const Enumeration& enumeration,
                        const AssembleOptions& options);

}  // namespace fpkflow
