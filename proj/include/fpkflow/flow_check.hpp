#pragma once

#include <array>
#include <string>
#include <vector>

#include "fpkflow/selection.hpp"

namespace fpkflow {

struct TripleResult {
  double s = 0.0, r = 0.0, t = 0.0;
  std::string nu_key;
  double distance = 0.0;
  bool pass = true;
};

struct FlowReport {
  double tolerance = 0.0;
  bool all_pass = true;
  std::vector<TripleResult> results;
  std::size_t worst = 0;  // index of the largest distance

  const TripleResult& worst_triple() const { return results.at(worst); }
};

/// All (s, r, t) with s <= r <= t drawn from the checkpoint grid.
std::vector<std::array<double, 3>> all_checkpoint_triples(const std::vector<double>& checkpoints);

/// For every entry with start s and every triple (s, r, t): distance between
/// the entry's marginal at t and the marginal at t of the table entry
/// restarted at (r, mu^{s,nu}_r). Throws when a required restart entry is
/// missing.
FlowReport check_flow_property(const FlowTable& table,
                               const std::vector<std::array<double, 3>>& triples, double tol);

struct Witness {
  std::string candidate_key;
  int function_index = -1;
  std::string function_id;
  double t_bar = 0.0;
  double violation = 0.0;
};

enum class VerdictKind { WellPosedAtScale, NotWellPosed };

std::string verdict_name(VerdictKind v);

struct Verdict {
  VerdictKind kind = VerdictKind::WellPosedAtScale;
  Witness witness;
  double w1_gap = 0.0;
  std::size_t candidate_count = 0;
  std::string base_key, adversarial_key;
  SolutionCurve base_curve, adversarial_curve;
  SelectionTrace base_trace, adversarial_trace;
  Enumeration adversarial_enumeration;
};

/// Two-enumeration probe: select with the base enumeration, search for a
/// candidate/function/checkpoint beating the selection's integral by more
/// than tie_tol, and if found re-select with that pair moved to the front.
/// Requires the family to be closed under negation.
Verdict wellposedness_probe(const Problem& p, double s_bar, const Measure& nu_bar,
                            const MeasureDeterminingFamily& fam, const Enumeration& base_enum,
                            GenerateStrategy strategy, const GenerateParams& params,
                            double tie_tol);

}  // namespace fpkflow
