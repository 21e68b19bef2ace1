#include "fpkflow/family.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "fpkflow/log.hpp"
#include "fpkflow/test_functions.hpp"

namespace fpkflow {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string fmt_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// Centered boxcar average of b over [x - eps, x + eps] per component,
// composite Simpson with four panels. Lipschitz for bounded measurable b.
Problem mollified_problem(const Problem& p, double eps) {
  if (eps <= 0.0) return p;
  Problem q = p;
  auto base = p.coefficients.b;
  const int d = p.dimension();
  q.coefficients.b = [base, eps, d](double t, const Vector& x, Vector& out) {
    Vector acc = Vector::Zero(d), tmp(d), xs = x;
    const double weights[5] = {1.0, 4.0, 2.0, 4.0, 1.0};
    for (int axis = 0; axis < d; ++axis) {
      Vector comp = Vector::Zero(d);
      for (int k = 0; k < 5; ++k) {
        xs[axis] = x[axis] - eps + 0.5 * eps * k;
        base(t, xs, tmp);
        comp += weights[k] * tmp;
      }
      xs[axis] = x[axis];
      acc += comp * ((0.5 * eps / 3.0) / (2.0 * eps));
    }
    out = acc / d;
  };
  return q;
}

std::vector<double> default_branch_times(const std::vector<double>& checkpoints, double s,
                                         double T) {
  std::vector<double> taus;
  for (double q : checkpoints) {
    if (q >= s - kTimeMatchTol && q < T - kTimeMatchTol) taus.push_back(q);
  }
  return taus;
}

// Atom path that rests at the unstable equilibrium until tau and then leaves
// along the departing characteristic. RK4 cannot leave the fixed point on its
// own, so the first step after tau is seeded with the departing solution of
// xdot = sqrt(x), namely x(tau + h) = (h/2)^2.
SolutionCurve branch_curve(const Problem& p, double s, const Measure& nu, double tau,
                           const SolveOptions& opts) {
  TimeGrid tg = build_time_grid(s, p.horizon(), opts.checkpoints, opts.dt, 1);
  SolutionCurve curve;
  curve.s = s;
  curve.T = p.horizon();
  curve.provenance = Provenance::BranchingCatalog;
  Matrix pos = nu.atom_locations();
  Vector x(1), b(1);
  Matrix k1(1, 1), k2(1, 1), k3(1, 1), k4(1, 1);
  auto drift = [&](double t, double xx) {
    x[0] = xx;
    p.coefficients.b(t, x, b);
    return b[0];
  };
  curve.times.push_back(s);
  curve.marginals.push_back(nu);
  bool departed = false;
  for (std::size_t j = 0; j + 1 < tg.knots.size(); ++j) {
    const double dt = tg.dt(j);
    double t = tg.knots[j];
    for (int m = 0; m < tg.substeps[j]; ++m) {
      const double t_next = (m + 1 == tg.substeps[j]) ? tg.knots[j + 1] : tg.knots[j] + dt * (m + 1);
      if (!departed) {
        if (t >= tau - kTimeMatchTol) {
          pos(0, 0) += (dt / 2.0) * (dt / 2.0);
          departed = true;
        }
      } else {
        // Classic RK4 on xdot = b(x).
        const double x0 = pos(0, 0);
        const double c1 = drift(t, x0);
        const double c2 = drift(t + 0.5 * dt, x0 + 0.5 * dt * c1);
        const double c3 = drift(t + 0.5 * dt, x0 + 0.5 * dt * c2);
        const double c4 = drift(t + dt, x0 + dt * c3);
        pos(0, 0) = x0 + (dt / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
      }
      t = t_next;
      curve.times.push_back(t);
      curve.marginals.push_back(Measure::atoms(pos, nu.weights()));
    }
  }
  curve.continuity_constant = compute_continuity_constant(curve);
  curve.key = "branch@" + fmt(tau);
  return curve;
}

}  // namespace

const SolutionCurve* CandidateSet::find(const std::string& key) const {
  for (const auto& c : curves) {
    if (c.key == key) return &c;
  }
  return nullptr;
}

GenerateStrategy strategy_from_name(const std::string& name) {
  if (name == "branching_catalog") return GenerateStrategy::BranchingCatalog;
  if (name == "mollification_ladder") return GenerateStrategy::MollificationLadder;
  if (name == "mixture_hull") return GenerateStrategy::MixtureHull;
  if (name == "solver_single") return GenerateStrategy::SolverSingle;
  throw std::invalid_argument(
      "unknown strategy '" + name +
      "'; valid: branching_catalog, mollification_ladder, mixture_hull, solver_single");
}

std::string strategy_name(GenerateStrategy s) {
  switch (s) {
    case GenerateStrategy::BranchingCatalog: return "branching_catalog";
    case GenerateStrategy::MollificationLadder: return "mollification_ladder";
    case GenerateStrategy::MixtureHull: return "mixture_hull";
    case GenerateStrategy::SolverSingle: return "solver_single";
  }
  return "solver_single";
}

std::vector<std::pair<double, double>> standard_admission_pairs(
    double s, double T, const std::vector<double>& checkpoints) {
  std::vector<double> q{s};
  for (double c : checkpoints) {
    if (c > s + kTimeMatchTol && c < T - kTimeMatchTol) q.push_back(c);
  }
  q.push_back(T);
  std::sort(q.begin(), q.end());
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 1; i < q.size(); ++i) pairs.emplace_back(s, q[i]);
  for (std::size_t i = 0; i + 1 < q.size(); ++i) pairs.emplace_back(q[i], q[i + 1]);
  return pairs;
}

CandidateSet generate_candidates(const Problem& p, double s, const Measure& nu,
                                 GenerateStrategy strategy, const GenerateParams& params) {
  const double T = p.horizon();
  const bool degenerate_atomic =
      p.coefficients.sup_bound_a == 0.0 && nu.kind() == SupportKind::Atoms;

  CandidateSet cs;
  cs.s = s;
  cs.admission_tolerance = params.admission_tolerance;
  cs.nu = degenerate_atomic || strategy == GenerateStrategy::MixtureHull
              ? nu
              : rasterize(nu, params.solve.grid);

  std::vector<SolutionCurve> raw;
  switch (strategy) {
    case GenerateStrategy::SolverSingle: {
      SolutionCurve c = solve_forward(p, s, cs.nu, params.solve);
      c.key = degenerate_atomic ? "ode" : "fv";
      raw.push_back(std::move(c));
      break;
    }
    case GenerateStrategy::BranchingCatalog: {
      if (p.preset_id != "sqrt_branch") {
        throw std::invalid_argument("branching_catalog requires the sqrt_branch preset");
      }
      if (nu.kind() != SupportKind::Atoms || nu.support_size() != 1) {
        throw std::invalid_argument("branching_catalog requires a single-atom initial datum");
      }
      Vector b(1);
      p.coefficients.b(s, nu.location(0), b);
      if (std::abs(b[0]) > 0.0) {
        // Away from the equilibrium the characteristic is unique.
        SolutionCurve c = solve_forward(p, s, cs.nu, params.solve);
        c.key = "ode";
        raw.push_back(std::move(c));
      } else {
        SolutionCurve stay = solve_forward(p, s, cs.nu, params.solve);
        stay.key = "stay";
        raw.push_back(std::move(stay));
        std::vector<double> taus = params.branch_times.empty()
                                       ? default_branch_times(params.solve.checkpoints, s, T)
                                       : params.branch_times;
        for (double tau : taus) {
          if (tau < s - kTimeMatchTol || tau >= T - kTimeMatchTol) continue;
          raw.push_back(branch_curve(p, s, cs.nu, tau, params.solve));
        }
      }
      break;
    }
    case GenerateStrategy::MollificationLadder: {
      SolutionCurve base = solve_forward(p, s, cs.nu, params.solve);
      base.key = degenerate_atomic ? "ode" : "fv";
      raw.push_back(std::move(base));
      for (double eps : params.ladder_epsilons) {
        Problem q = mollified_problem(p, eps);
        SolutionCurve c = solve_forward(q, s, cs.nu, params.solve);
        c.key = (degenerate_atomic ? "ode_eps=" : "fv_eps=") + fmt(eps);
        raw.push_back(std::move(c));
      }
      break;
    }
    case GenerateStrategy::MixtureHull: {
      if (params.mixture_base == nullptr || params.mixture_base->curves.empty()) {
        throw std::invalid_argument("mixture_hull requires a base candidate set");
      }
      for (const auto& c : params.mixture_base->curves) raw.push_back(c);
      std::vector<const SolutionCurve*> base;
      for (const auto& c : params.mixture_base->curves) base.push_back(&c);
      for (const Vector& w : params.mixture_weights) {
        if (w.size() != static_cast<Index>(base.size())) {
          throw std::invalid_argument("mixture_hull: weight vector length mismatch");
        }
        std::string key = "mix(";
        bool first = true;
        for (Index i = 0; i < w.size(); ++i) {
          if (w[i] <= 0.0) continue;
          if (!first) key += ",";
          key += base[static_cast<std::size_t>(i)]->key + ":" + fmt(w[i]);
          first = false;
        }
        key += ")";
        raw.push_back(mix_curves(base, w, key));
      }
      break;
    }
  }

  // Admission: starts at nu, shared time grid, certified weak residual.
  const std::vector<TestFunction>& fam =
      params.admission_family.empty() ? bounded_tanh_functions(p.dimension())
                                      : params.admission_family;
  std::vector<std::pair<double, double>> pairs =
      params.admission_pairs.empty()
          ? standard_admission_pairs(s, T, params.solve.checkpoints)
          : params.admission_pairs;

  const std::vector<double>* grid_times = nullptr;
  for (auto& c : raw) {
    const double w1_start = wasserstein1(c.initial(), cs.nu);
    if (w1_start > 1e-12) {
      cs.exclusions.emplace_back(c.key, "initial datum mismatch, W1=" + fmt_full(w1_start));
      continue;
    }
    if (grid_times != nullptr && !same_time_grid(c.times, *grid_times)) {
      cs.exclusions.emplace_back(c.key, "time grid differs from the set's grid");
      continue;
    }
    const double res = weak_residual(c, p, fam, pairs);
    if (!(res <= params.admission_tolerance)) {
      cs.exclusions.emplace_back(c.key, "weak residual " + fmt_full(res) + " > tolerance " +
                                            fmt_full(params.admission_tolerance));
      continue;
    }
    if (strategy == GenerateStrategy::MollificationLadder) {
      // Distinctness filter: drop rungs that coincide with a kept curve.
      bool duplicate = false;
      for (const auto& kept : cs.curves) {
        double maxw1 = 0.0;
        for (std::size_t k = 0; k < kept.times.size(); ++k) {
          maxw1 = std::max(maxw1, wasserstein1(kept.marginals[k], c.marginals[k]));
          if (maxw1 > params.admission_tolerance) break;
        }
        if (maxw1 <= params.admission_tolerance) {
          cs.exclusions.emplace_back(c.key, "indistinct from " + kept.key +
                                                " (max W1 " + fmt_full(maxw1) + ")");
          duplicate = true;
          break;
        }
      }
      if (duplicate) continue;
    }
    cs.curves.push_back(std::move(c));
    if (grid_times == nullptr) grid_times = &cs.curves.front().times;
  }

  for (const auto& [key, reason] : cs.exclusions) {
    log::info("generate_candidates: excluded '" + key + "': " + reason);
  }
  if (cs.curves.empty()) {
    throw std::runtime_error("generate_candidates(" + strategy_name(strategy) + ", s=" + fmt(s) +
                             "): no admitted curves; the non-emptiness hypothesis fails at "
                             "numeric scale");
  }
  std::sort(cs.curves.begin(), cs.curves.end(),
            [](const SolutionCurve& a, const SolutionCurve& b) { return a.key < b.key; });
  return cs;
}

SolutionCurve glue(const SolutionCurve& front, const SolutionCurve& back) {
  if (std::abs(front.T - back.s) > kTimeMatchTol) {
    throw std::invalid_argument("glue: front ends at " + fmt_full(front.T) +
                                " but back starts at " + fmt_full(back.s));
  }
  const double gap = wasserstein1(front.terminal(), back.initial());
  if (gap > 1e-9) {
    throw std::invalid_argument("glue: endpoint mismatch, W1 gap " + fmt_full(gap));
  }
  SolutionCurve out;
  out.s = front.s;
  out.T = back.T;
  out.provenance = Provenance::Glued;
  out.key = "glue(" + front.key + "," + back.key + ")";
  out.times.assign(front.times.begin(), front.times.end() - 1);
  out.times.insert(out.times.end(), back.times.begin(), back.times.end());
  out.marginals.assign(front.marginals.begin(), front.marginals.end() - 1);
  out.marginals.insert(out.marginals.end(), back.marginals.begin(), back.marginals.end());
  out.boundary_mass = std::max(front.boundary_mass, back.boundary_mass);
  out.clipped_mass = front.clipped_mass + back.clipped_mass;
  out.continuity_constant = compute_continuity_constant(out);
  return out;
}

SolutionCurve restrict_curve(const SolutionCurve& curve, double r) {
  const Index i = curve.time_index(r);
  if (i < 0) {
    throw std::invalid_argument("restrict: time " + fmt_full(r) +
                                " is not on the curve's grid (no interpolation)");
  }
  SolutionCurve out;
  out.s = curve.times[static_cast<std::size_t>(i)];
  out.T = curve.T;
  out.provenance = curve.provenance;
  out.key = curve.key;
  out.times.assign(curve.times.begin() + i, curve.times.end());
  out.marginals.assign(curve.marginals.begin() + i, curve.marginals.end());
  out.boundary_mass = curve.boundary_mass;
  out.clipped_mass = curve.clipped_mass;
  out.continuity_constant = compute_continuity_constant(out);
  return out;
}

Measure mix_measures(const std::vector<const Measure*>& ms, const Vector& weights) {
  if (ms.empty() || weights.size() != static_cast<Index>(ms.size())) {
    throw std::invalid_argument("mix_measures: size mismatch");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-12 || weights.minCoeff() < 0.0) {
    throw std::invalid_argument("mix_measures: weights must be a convex combination");
  }
  const Measure& first = *ms.front();
  if (first.kind() == SupportKind::Grid) {
    Vector w = Vector::Zero(first.support_size());
    for (std::size_t i = 0; i < ms.size(); ++i) {
      if (ms[i]->kind() != SupportKind::Grid || !ms[i]->grid_spec().matches(first.grid_spec())) {
        throw std::invalid_argument("mix_measures: grid specs differ");
      }
      w += weights[static_cast<Index>(i)] * ms[i]->weights();
    }
    return Measure::grid(first.grid_spec(), w);
  }
  // Atomic: concatenate, merging exact duplicate locations.
  std::map<std::vector<double>, double> merged;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (ms[i]->kind() != SupportKind::Atoms) {
      throw std::invalid_argument("mix_measures: cannot mix grid and atomic measures");
    }
    const Matrix& locs = ms[i]->atom_locations();
    for (Index j = 0; j < locs.rows(); ++j) {
      std::vector<double> key(locs.cols());
      for (Index k = 0; k < locs.cols(); ++k) key[static_cast<std::size_t>(k)] = locs(j, k);
      merged[key] += weights[static_cast<Index>(i)] * ms[i]->weights()[j];
    }
  }
  Matrix locs(static_cast<Index>(merged.size()), first.dimension());
  Vector w(static_cast<Index>(merged.size()));
  Index row = 0;
  for (const auto& [loc, mass] : merged) {
    for (std::size_t k = 0; k < loc.size(); ++k) locs(row, static_cast<Index>(k)) = loc[k];
    w[row] = mass;
    ++row;
  }
  return Measure::atoms(locs, w);
}

SolutionCurve mix_curves(const std::vector<const SolutionCurve*>& curves, const Vector& weights,
                         const std::string& key) {
  if (curves.empty()) throw std::invalid_argument("mix_curves: empty input");
  for (const auto* c : curves) {
    if (!same_time_grid(c->times, curves.front()->times)) {
      throw std::invalid_argument("mix_curves: curves must share one time grid");
    }
  }
  SolutionCurve out;
  out.s = curves.front()->s;
  out.T = curves.front()->T;
  out.times = curves.front()->times;
  out.provenance = curves.front()->provenance;
  out.key = key;
  std::vector<const Measure*> ms(curves.size());
  for (std::size_t k = 0; k < out.times.size(); ++k) {
    for (std::size_t i = 0; i < curves.size(); ++i) ms[i] = &curves[i]->marginals[k];
    out.marginals.push_back(mix_measures(ms, weights));
  }
  out.continuity_constant = compute_continuity_constant(out);
  return out;
}

}  // namespace fpkflow
