#include "fpkflow/selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <set>
#include <stdexcept>

#include "fpkflow/log.hpp"

namespace fpkflow {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

int MeasureDeterminingFamily::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < functions.size(); ++i) {
    if (functions[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

MeasureDeterminingFamily default_family(int dimension) {
  return family_from_specs(bounded_tanh_specs(dimension), dimension);
}

MeasureDeterminingFamily family_from_specs(const std::vector<TanhSpec>& specs, int dimension) {
  MeasureDeterminingFamily fam;
  fam.tanh_spec = specs;
  for (const TanhSpec& s : specs) fam.functions.push_back(make_tanh_function(s, dimension));
  // Closed under negation iff every member's sign-flipped twin is present.
  fam.closed_under_negation = true;
  for (const TanhSpec& s : specs) {
    bool found = false;
    for (const TanhSpec& t : specs) {
      if (t.omega == s.omega && t.phi == s.phi && t.ux == s.ux && t.uy == s.uy &&
          t.sign == -s.sign) {
        found = true;
        break;
      }
    }
    if (!found) {
      fam.closed_under_negation = false;
      break;
    }
  }
  return fam;
}

Enumeration Enumeration::diagonal(int n_functions, const std::vector<double>& checkpoints) {
  Enumeration e;
  e.n_functions = n_functions;
  e.checkpoints = checkpoints;
  for (std::size_t iq = 0; iq < checkpoints.size(); ++iq) {
    for (int f = 0; f < n_functions; ++f) {
      e.order.emplace_back(f, checkpoints[iq]);
    }
  }
  std::stable_sort(e.order.begin(), e.order.end(),
                   [&](const std::pair<int, double>& a, const std::pair<int, double>& b) {
                     const auto ia = find_time_index(checkpoints, a.second);
                     const auto ib = find_time_index(checkpoints, b.second);
                     const long ka = a.first + ia, kb = b.first + ib;
                     if (ka != kb) return ka < kb;
                     return ia < ib;
                   });
  e.validate();
  return e;
}

Enumeration Enumeration::with_first(int function_index, double q) const {
  Enumeration e;
  e.n_functions = n_functions;
  e.checkpoints = checkpoints;
  e.order.emplace_back(function_index, q);
  bool removed = false;
  for (const auto& pair : order) {
    if (!removed && pair.first == function_index && std::abs(pair.second - q) <= kTimeMatchTol) {
      removed = true;
      continue;
    }
    e.order.push_back(pair);
  }
  if (!removed) {
    throw std::invalid_argument("Enumeration::with_first: pair (" +
                                std::to_string(function_index) + ", " + fmt(q) +
                                ") is not part of the enumeration");
  }
  e.validate();
  return e;
}

std::vector<std::pair<int, double>> Enumeration::restricted_to(double s) const {
  std::vector<std::pair<int, double>> out;
  for (const auto& pair : order) {
    if (pair.second >= s - kTimeMatchTol) out.push_back(pair);
  }
  return out;
}

void Enumeration::validate() const {
  if (order.size() != checkpoints.size() * static_cast<std::size_t>(n_functions)) {
    throw std::invalid_argument("Enumeration: order must cover functions x checkpoints exactly");
  }
  std::set<std::pair<int, Index>> seen;
  for (const auto& [f, q] : order) {
    if (f < 0 || f >= n_functions) throw std::invalid_argument("Enumeration: function index out of range");
    const Index iq = find_time_index(checkpoints, q);
    if (iq < 0) throw std::invalid_argument("Enumeration: time " + fmt(q) + " not a checkpoint");
    if (!seen.emplace(f, iq).second) {
      throw std::invalid_argument("Enumeration: duplicate pair (not a bijection)");
    }
  }
}

std::vector<Measure> project_times(const SolutionCurve& curve, const std::vector<double>& q_grid) {
  std::vector<Measure> out;
  out.reserve(q_grid.size());
  for (double q : q_grid) {
    out.push_back(curve.at(q));  // at() reports off-grid times
  }
  return out;
}

double default_tie_tol(const CandidateSet& cs) {
  if (cs.curves.empty()) return 1e-9;
  return cs.curves.front().initial().kind() == SupportKind::Atoms ? 1e-9 : 1e-6;
}

SelectionResult select(const CandidateSet& cs, const MeasureDeterminingFamily& fam,
                       const Enumeration& enumeration, double tie_tol) {
  if (cs.curves.empty()) throw std::invalid_argument("select: empty candidate set");
  std::vector<std::size_t> survivors(cs.curves.size());
  for (std::size_t i = 0; i < survivors.size(); ++i) survivors[i] = i;

  SelectionTrace trace;
  trace.tie_tol = tie_tol;

  const auto pairs = enumeration.restricted_to(cs.s);
  int k = 0;
  for (const auto& [nf, q] : pairs) {
    if (nf >= static_cast<int>(fam.functions.size())) {
      throw std::invalid_argument("select: enumeration references function index " +
                                  std::to_string(nf) + " outside the family");
    }
    const TestFunction& f = fam.functions[static_cast<std::size_t>(nf)];
    double u = -std::numeric_limits<double>::infinity();
    std::vector<double> values(survivors.size());
    for (std::size_t i = 0; i < survivors.size(); ++i) {
      values[i] = integrate(cs.curves[survivors[i]].at(q), f);
      u = std::max(u, values[i]);
    }
    std::vector<std::size_t> next;
    for (std::size_t i = 0; i < survivors.size(); ++i) {
      if (values[i] >= u - tie_tol) next.push_back(survivors[i]);
    }
    SelectionStep step;
    step.step = k++;
    step.function_index = nf;
    step.function_id = f.id;
    step.q = q;
    step.u = u;
    for (std::size_t i : next) step.survivors.push_back(cs.curves[i].key);
    trace.steps.push_back(std::move(step));
    survivors = std::move(next);
    if (survivors.size() == 1) break;
  }

  if (survivors.size() > 1) {
    // Exhausted the enumeration: leftover survivors must be numerically the
    // same curve at every checkpoint, otherwise the family cannot separate.
    for (std::size_t i = 0; i < survivors.size(); ++i) {
      for (std::size_t j = i + 1; j < survivors.size(); ++j) {
        for (double q : enumeration.checkpoints) {
          if (q < cs.s - kTimeMatchTol) continue;
          const double d =
              wasserstein1(cs.curves[survivors[i]].at(q), cs.curves[survivors[j]].at(q));
          if (d > tie_tol) {
            throw std::runtime_error(
                "select: family not separating at this tolerance (curves '" +
                cs.curves[survivors[i]].key + "' and '" + cs.curves[survivors[j]].key +
                "' differ by W1=" + fmt(d) + " at q=" + fmt(q) + ")");
          }
        }
      }
    }
  }

  std::size_t best = survivors.front();
  for (std::size_t i : survivors) {
    if (cs.curves[i].key < cs.curves[best].key) best = i;
  }
  for (std::size_t i : survivors) trace.final_survivors.push_back(cs.curves[i].key);
  trace.selected_key = cs.curves[best].key;
  SelectionResult result;
  result.selected_index = best;
  result.trace = std::move(trace);
  return result;
}

const FlowEntry* FlowTable::find(double s, const std::string& nu_key) const {
  for (const auto& e : entries) {
    if (std::abs(e.s - s) <= kTimeMatchTol && e.nu_key == nu_key) return &e;
  }
  return nullptr;
}

FlowTable assemble_flow(const Problem& p, const std::vector<std::pair<double, Measure>>& starts,
                        const MeasureDeterminingFamily& fam, const Enumeration& enumeration,
                        const AssembleOptions& options) {
  FlowTable table;
  table.checkpoints = options.checkpoints;

  GenerateParams params = options.params;
  params.solve.checkpoints = options.checkpoints;

  std::deque<std::pair<double, Measure>> worklist(starts.begin(), starts.end());
  std::set<std::pair<long long, std::string>> seen;
  auto time_key = [](double t) { return static_cast<long long>(std::llround(t * 1e9)); };

  while (!worklist.empty()) {
    auto [s, nu] = worklist.front();
    worklist.pop_front();
    const std::string key = canonical_key(nu);
    if (!seen.emplace(time_key(s), key).second) continue;

    FlowEntry entry;
    entry.s = s;
    entry.nu = nu;
    try {
      CandidateSet cs = generate_candidates(p, s, nu, options.strategy, params);
      // The discrete initial datum may be the grid projection of nu; index the
      // entry by the datum the curves actually start from.
      entry.nu = cs.nu;
      SelectionResult res = select(cs, fam, enumeration, options.tie_tol);
      entry.curve = cs.curves[res.selected_index];
      entry.trace = std::move(res.trace);
    } catch (const std::exception& e) {
      throw std::runtime_error("assemble_flow at (s=" + fmt(s) + ", nu=" + key +
                               "): " + e.what());
    }
    entry.nu_key = canonical_key(entry.nu);
    seen.emplace(time_key(s), entry.nu_key);

    for (double r : options.checkpoints) {
      if (r <= s + kTimeMatchTol || r >= p.horizon() - kTimeMatchTol) continue;
      const Measure& marg = entry.curve.at(r);
      if (!seen.count({time_key(r), canonical_key(marg)})) worklist.emplace_back(r, marg);
    }
    table.entries.push_back(std::move(entry));
  }

  std::sort(table.entries.begin(), table.entries.end(), [](const FlowEntry& a, const FlowEntry& b) {
    if (a.s != b.s) return a.s < b.s;
    return a.nu_key < b.nu_key;
  });
  return table;
}

}  // namespace fpkflow
