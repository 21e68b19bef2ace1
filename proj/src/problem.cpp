#include "fpkflow/problem.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace fpkflow {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct WorstTracker {
  double value = 0.0;
  double t = 0.0;
  Vector x;
  bool set = false;
  void update(double v, double tt, const Vector& xx) {
    if (!set || v > value) {
      value = v;
      t = tt;
      x = xx;
      set = true;
    }
  }
};

CheckResult finish(const std::string& name, bool pass, const WorstTracker& w,
                   const std::string& msg) {
  CheckResult r;
  r.name = name;
  r.pass = pass;
  if (w.set) {
    r.worst_t = w.t;
    r.worst_x = w.x;
    r.worst_value = w.value;
  }
  r.message = msg;
  return r;
}

Box box1d(double lo, double hi) {
  Box b;
  b.lo = Vector::Constant(1, lo);
  b.hi = Vector::Constant(1, hi);
  return b;
}

}  // namespace

ProbeGrid ProbeGrid::regular(const Box& box, double horizon, int nt, int nx) {
  ProbeGrid g;
  g.times.reserve(static_cast<std::size_t>(nt));
  for (int i = 0; i < nt; ++i) {
    g.times.push_back(nt == 1 ? 0.0 : horizon * static_cast<double>(i) / (nt - 1));
  }
  const int d = static_cast<int>(box.lo.size());
  if (d == 1) {
    for (int i = 0; i < nx; ++i) {
      Vector x(1);
      x[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * static_cast<double>(i) / (nx - 1);
      g.points.push_back(x);
    }
  } else {
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < nx; ++j) {
        Vector x(2);
        x[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * static_cast<double>(i) / (nx - 1);
        x[1] = box.lo[1] + (box.hi[1] - box.lo[1]) * static_cast<double>(j) / (nx - 1);
        g.points.push_back(x);
      }
    }
  }
  return g;
}

ValidationReport validate_coefficients(const Coefficients& c, const ProbeGrid& probes) {
  if (probes.times.empty() || probes.points.empty()) {
    throw std::invalid_argument("validate_coefficients: probe grid must be nonempty");
  }
  ValidationReport report;
  const int d = c.dimension;

  WorstTracker sym, eig, abound, bbound;
  WorstTracker evalfail;
  bool eval_ok = true;
  std::string eval_msg;

  Matrix a(d, d);
  Vector b(d);
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  for (double t : probes.times) {
    for (const Vector& x : probes.points) {
      try {
        c.a(t, x, a);
        c.b(t, x, b);
      } catch (const std::exception& e) {
        eval_ok = false;
        eval_msg = e.what();
        evalfail.update(1.0, t, x);
        continue;
      }
      if (!a.allFinite() || !b.allFinite()) {
        eval_ok = false;
        eval_msg = "non-finite coefficient value";
        evalfail.update(1.0, t, x);
        continue;
      }
      sym.update((a - a.transpose()).cwiseAbs().maxCoeff(), t, x);
      es.compute(a, Eigen::EigenvaluesOnly);
      eig.update(-es.eigenvalues().minCoeff(), t, x);
      abound.update(a.cwiseAbs().maxCoeff(), t, x);
      bbound.update(b.norm(), t, x);
    }
  }

  report.checks.push_back(finish("evaluator_finite", eval_ok, evalfail,
                                 eval_ok ? "" : eval_msg));
  report.checks.push_back(finish("a_symmetric", sym.value <= 1e-12, sym,
                                 "max asymmetry " + fmt(sym.value)));
  report.checks.push_back(finish("a_nonnegative_definite", eig.value <= 1e-12, eig,
                                 "most negative eigenvalue " + fmt(-eig.value)));
  report.checks.push_back(finish("a_bounded", abound.value <= c.sup_bound_a + 1e-12, abound,
                                 "max |a| " + fmt(abound.value) + " vs bound " +
                                     fmt(c.sup_bound_a)));
  report.checks.push_back(finish("b_bounded", bbound.value <= c.sup_bound_b + 1e-12, bbound,
                                 "max |b| " + fmt(bbound.value) + " vs bound " +
                                     fmt(c.sup_bound_b)));

  // Sampled modulus of continuity in x: the modulus on step 2^-20 must have
  // decayed relative to the modulus on step 2^-10 (or be absolutely tiny).
  WorstTracker cont;
  double coarse = 0.0, fine = 0.0;
  bool cont_ok = true;
  Matrix a2(d, d);
  Vector b2(d);
  const double scale = 1.0 + c.sup_bound_a + c.sup_bound_b;
  for (double t : probes.times) {
    for (const Vector& x : probes.points) {
      for (int axis = 0; axis < d; ++axis) {
        double m_coarse = 0.0, m_fine = 0.0;
        for (int k : {10, 20}) {
          const double h = std::ldexp(1.0, -k);
          Vector xh = x;
          xh[axis] += h;
          double delta = 0.0;
          try {
            c.a(t, x, a);
            c.b(t, x, b);
            c.a(t, xh, a2);
            c.b(t, xh, b2);
            delta = std::max((a - a2).cwiseAbs().maxCoeff(), (b - b2).cwiseAbs().maxCoeff());
          } catch (const std::exception&) {
            delta = std::numeric_limits<double>::infinity();
          }
          if (k == 10) m_coarse = delta; else m_fine = delta;
        }
        if (!(m_fine <= std::max(1e-7 * scale, 0.7 * m_coarse))) {
          cont_ok = false;
          cont.update(m_fine, t, x);
          coarse = m_coarse;
          fine = m_fine;
        }
      }
    }
  }
  report.checks.push_back(finish("continuity_in_x", cont_ok, cont,
                                 cont_ok ? ""
                                         : "modulus did not decay: " + fmt(coarse) +
                                               " at 2^-10 vs " + fmt(fine) + " at 2^-20"));
  return report;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"heat", "zero", "sqrt_branch", "ou_tanh"};
  return names;
}

Problem preset(const std::string& name) {
  Problem p;
  p.preset_id = name;
  Coefficients& c = p.coefficients;
  c.dimension = 1;
  c.horizon = 1.0;
  c.time_dependent = false;

  if (name == "heat") {
    c.sup_bound_a = 1.0;
    c.sup_bound_b = 0.0;
    c.a = [](double, const Vector&, Matrix& a) { a(0, 0) = 1.0; };
    c.b = [](double, const Vector&, Vector& b) { b[0] = 0.0; };
    p.domain_box = box1d(-8.0, 8.0);
    p.known_solution = [](double s, double t, const Measure& nu, const GridSpec& g) {
      if (nu.kind() != SupportKind::Atoms || nu.support_size() != 1) {
        throw std::invalid_argument("heat known_solution: reference datum must be a Dirac");
      }
      const Vector mean = nu.location(0);
      if (t <= s) return rasterize(nu, g);
      return Measure::gaussian_on_grid(g, mean, t - s);
    };
  } else if (name == "zero") {
    c.sup_bound_a = 0.0;
    c.sup_bound_b = 0.0;
    c.a = [](double, const Vector&, Matrix& a) { a(0, 0) = 0.0; };
    c.b = [](double, const Vector&, Vector& b) { b[0] = 0.0; };
    p.domain_box = box1d(-2.0, 2.0);
    p.known_solution = [](double, double, const Measure& nu, const GridSpec&) { return nu; };
  } else if (name == "sqrt_branch") {
    c.sup_bound_a = 0.0;
    c.sup_bound_b = 1.0;
    c.a = [](double, const Vector&, Matrix& a) { a(0, 0) = 0.0; };
    c.b = [](double, const Vector& x, Vector& b) {
      b[0] = std::min(std::sqrt(std::max(x[0], 0.0)), 1.0);
    };
    p.domain_box = box1d(-0.5, 1.5);
  } else if (name == "ou_tanh") {
    c.sup_bound_a = 1.0;
    c.sup_bound_b = 1.0;
    c.a = [](double, const Vector&, Matrix& a) { a(0, 0) = 1.0; };
    c.b = [](double, const Vector& x, Vector& b) { b[0] = -std::tanh(x[0]); };
    p.domain_box = box1d(-8.0, 8.0);
  } else {
    std::string valid;
    for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown preset '" + name + "'; valid presets: " + valid);
  }
  return p;
}

}  // namespace fpkflow
