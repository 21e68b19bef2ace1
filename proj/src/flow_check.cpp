#include "fpkflow/flow_check.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace fpkflow {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

std::vector<std::array<double, 3>> all_checkpoint_triples(const std::vector<double>& q) {
  std::vector<std::array<double, 3>> triples;
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t j = i; j < q.size(); ++j) {
      for (std::size_t k = j; k < q.size(); ++k) {
        triples.push_back({q[i], q[j], q[k]});
      }
    }
  }
  return triples;
}

FlowReport check_flow_property(const FlowTable& table,
                               const std::vector<std::array<double, 3>>& triples, double tol) {
  FlowReport report;
  report.tolerance = tol;
  double worst_d = -1.0;
  for (const auto& [s, r, t] : triples) {
    if (!(s <= r + kTimeMatchTol && r <= t + kTimeMatchTol)) {
      throw std::invalid_argument("check_flow_property: triple must satisfy s <= r <= t");
    }
    for (const FlowEntry& entry : table.entries) {
      if (std::abs(entry.s - s) > kTimeMatchTol) continue;
      const Measure& left_t = entry.curve.at(t);
      double d;
      if (std::abs(r - t) <= kTimeMatchTol) {
        // The restarted curve is evaluated at its own start, which is the
        // marginal being restarted from.
        d = wasserstein1(left_t, entry.curve.at(r));
      } else {
        const Measure& at_r = entry.curve.at(r);
        const std::string key = canonical_key(at_r);
        const FlowEntry* restart = table.find(r, key);
        if (restart == nullptr) {
          throw std::runtime_error("check_flow_property: missing table entry (r=" + fmt(r) +
                                   ", nu=" + key + ")");
        }
        d = wasserstein1(left_t, restart->curve.at(t));
      }
      TripleResult res;
      res.s = s;
      res.r = r;
      res.t = t;
      res.nu_key = entry.nu_key;
      res.distance = d;
      res.pass = d <= tol;
      if (!res.pass) report.all_pass = false;
      if (d > worst_d) {
        worst_d = d;
        report.worst = report.results.size();
      }
      report.results.push_back(std::move(res));
    }
  }
  return report;
}

std::string verdict_name(VerdictKind v) {
  return v == VerdictKind::WellPosedAtScale ? "WellPosedAtScale" : "NotWellPosed";
}

Verdict wellposedness_probe(const Problem& p, double s_bar, const Measure& nu_bar,
                            const MeasureDeterminingFamily& fam, const Enumeration& base_enum,
                            GenerateStrategy strategy, const GenerateParams& params,
                            double tie_tol) {
  if (!fam.closed_under_negation) {
    throw std::invalid_argument(
        "wellposedness_probe: the family must be closed under negation");
  }
  GenerateParams gp = params;
  CandidateSet cs = generate_candidates(p, s_bar, nu_bar, strategy, gp);
  SelectionResult base = select(cs, fam, base_enum, tie_tol);
  const SolutionCurve& mu = cs.curves[base.selected_index];

  Verdict verdict;
  verdict.candidate_count = cs.curves.size();
  verdict.base_key = mu.key;
  verdict.base_curve = mu;
  verdict.base_trace = base.trace;

  // Deterministic witness search: the largest integral violation over
  // (function, checkpoint, candidate), first hit wins ties.
  Witness best;
  for (std::size_t nf = 0; nf < fam.functions.size(); ++nf) {
    const TestFunction& f = fam.functions[nf];
    for (double t_bar : base_enum.checkpoints) {
      if (t_bar < s_bar - kTimeMatchTol) continue;
      const double mu_val = integrate(mu.at(t_bar), f);
      for (const SolutionCurve& gamma : cs.curves) {
        const double violation = integrate(gamma.at(t_bar), f) - mu_val;
        if (violation > best.violation) {
          best.candidate_key = gamma.key;
          best.function_index = static_cast<int>(nf);
          best.function_id = f.id;
          best.t_bar = t_bar;
          best.violation = violation;
        }
      }
    }
  }

  if (best.violation <= tie_tol) {
    verdict.kind = VerdictKind::WellPosedAtScale;
    return verdict;
  }

  verdict.kind = VerdictKind::NotWellPosed;
  verdict.witness = best;
  verdict.adversarial_enumeration = base_enum.with_first(best.function_index, best.t_bar);
  SelectionResult adv = select(cs, fam, verdict.adversarial_enumeration, tie_tol);
  verdict.adversarial_curve = cs.curves[adv.selected_index];
  verdict.adversarial_key = verdict.adversarial_curve.key;
  verdict.adversarial_trace = adv.trace;
  verdict.w1_gap = wasserstein1(mu.at(best.t_bar), verdict.adversarial_curve.at(best.t_bar));
  return verdict;
}

}  // namespace fpkflow
