#include "fpkflow/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fpkflow/log.hpp"

namespace fpkflow {

namespace {

using json = nlohmann::json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// Chang-Cooper interface weight: the donor-cell share delta in
//   J = B [delta rho_i + (1-delta) rho_{i+1}] - D (rho_{i+1}-rho_i)/dx
// chosen so the discrete zero-flux steady state matches exp(int B/D).
double donor_weight(double peclet) {
  const double w = peclet;
  double lambda;  // 1 - delta
  if (std::abs(w) < 1e-6) {
    lambda = 0.5 - w / 12.0;
  } else if (w > 36.0) {
    lambda = 1.0 / w;
  } else if (w < -36.0) {
    lambda = 1.0 + 1.0 / w;
  } else {
    lambda = 1.0 / w - 1.0 / std::expm1(w);
  }
  return 1.0 - lambda;
}

struct FaceCoeffs {
  // Per axis: flattened face arrays of diffusion D, effective advection B
  // (drift minus dD/dx) and donor weight.
  std::vector<Vector> D, B, delta;
};

class GridStepper {
 public:
  GridStepper(const Problem& p, const GridSpec& g) : p_(p), g_(g) {
    const int d = g.dimension;
    nx_ = g.cells[0];
    ny_ = d == 2 ? g.cells[1] : 1;
    if (d == 2) check_diagonal();
    flux_.resize(d);
    flux_[0] = Vector::Zero((nx_ + 1) * ny_);
    if (d == 2) flux_[1] = Vector::Zero(nx_ * (ny_ + 1));
    if (!p.coefficients.time_dependent) faces_ = face_coeffs(0.0);
  }

  void step(Vector& w, double t, double dt) {
    const FaceCoeffs& fc = p_.coefficients.time_dependent ? (scratch_ = face_coeffs(t)) : faces_;
    const double h = g_.spacing;
    // x-direction fluxes (interior faces only; boundary faces stay zero).
    for (Index iy = 0; iy < ny_; ++iy) {
      for (Index ix = 1; ix < nx_; ++ix) {
        const Index f = ix + (nx_ + 1) * iy;
        const Index c = ix + nx_ * iy;
        const double rl = w[c - 1], rr = w[c];
        const double D = fc.D[0][f], B = fc.B[0][f], del = fc.delta[0][f];
        flux_[0][f] = B * (del * rl + (1.0 - del) * rr) - D * (rr - rl) / h;
      }
    }
    if (g_.dimension == 2) {
      for (Index iy = 1; iy < ny_; ++iy) {
        for (Index ix = 0; ix < nx_; ++ix) {
          const Index f = ix + nx_ * iy;
          const Index c = ix + nx_ * iy;
          const double rl = w[c - nx_], rr = w[c];
          const double D = fc.D[1][f], B = fc.B[1][f], del = fc.delta[1][f];
          flux_[1][f] = B * (del * rl + (1.0 - del) * rr) - D * (rr - rl) / h;
        }
      }
    }
    const double lam = dt / h;
    for (Index iy = 0; iy < ny_; ++iy) {
      for (Index ix = 0; ix < nx_; ++ix) {
        const Index c = ix + nx_ * iy;
        double div = flux_[0][ix + 1 + (nx_ + 1) * iy] - flux_[0][ix + (nx_ + 1) * iy];
        if (g_.dimension == 2) div += flux_[1][ix + nx_ * (iy + 1)] - flux_[1][ix + nx_ * iy];
        w[c] -= lam * div;
      }
    }
    // Round-off guard; a genuinely negative update would violate the scheme's
    // positivity bound and is surfaced through clipped_mass.
    for (Index c = 0; c < w.size(); ++c) {
      if (w[c] < 0.0) {
        clipped_ += -w[c];
        w[c] = 0.0;
      }
    }
  }

  double clipped_mass() const { return clipped_; }

  double boundary_mass(const Vector& w) const {
    double m = 0.0;
    if (g_.dimension == 1) {
      m = w[0] + w[nx_ - 1];
    } else {
      for (Index ix = 0; ix < nx_; ++ix) m += w[ix] + w[ix + nx_ * (ny_ - 1)];
      for (Index iy = 1; iy + 1 < ny_; ++iy) m += w[nx_ * iy] + w[nx_ - 1 + nx_ * iy];
    }
    return m;
  }

 private:
  void check_diagonal() {
    Matrix a(2, 2);
    Vector x(2);
    for (Index iy = 0; iy < ny_; iy += std::max<Index>(1, ny_ / 8)) {
      for (Index ix = 0; ix < nx_; ix += std::max<Index>(1, nx_ / 8)) {
        g_.center_into(ix + nx_ * iy, x);
        p_.coefficients.a(0.0, x, a);
        if (std::abs(a(0, 1)) > 1e-12) {
          throw std::invalid_argument(
              "solve_forward: 2d grid solver supports diagonal diffusion only");
        }
      }
    }
  }

  // Diffusion D = a_kk/2 at faces, effective advection B = b_k - dD/dx_k.
  FaceCoeffs face_coeffs(double t) const {
    FaceCoeffs fc;
    const int d = g_.dimension;
    fc.D.resize(d);
    fc.B.resize(d);
    fc.delta.resize(d);
    Matrix a(d, d);
    Vector b(d), x(d);
    const double h = g_.spacing;
    auto eval_cell = [&](Index c, int axis, double& D, double& bdrift) {
      g_.center_into(c, x);
      p_.coefficients.a(t, x, a);
      p_.coefficients.b(t, x, b);
      D = 0.5 * a(axis, axis);
      bdrift = b[axis];
    };
    for (int axis = 0; axis < d; ++axis) {
      const Index nfaces = axis == 0 ? (nx_ + 1) * ny_ : nx_ * (ny_ + 1);
      fc.D[axis] = Vector::Zero(nfaces);
      fc.B[axis] = Vector::Zero(nfaces);
      fc.delta[axis] = Vector::Zero(nfaces);
      const Index lo_stride = axis == 0 ? 1 : nx_;
      const Index n_along = axis == 0 ? nx_ : ny_;
      const Index n_across = axis == 0 ? ny_ : nx_;
      for (Index j = 0; j < n_across; ++j) {
        for (Index i = 1; i < n_along; ++i) {
          Index face, cell_hi;
          if (axis == 0) {
            face = i + (nx_ + 1) * j;
            cell_hi = i + nx_ * j;
          } else {
            face = j + nx_ * i;
            cell_hi = j + nx_ * i;
          }
          const Index cell_lo = cell_hi - lo_stride;
          double Dl, bl, Dr, br;
          eval_cell(cell_lo, axis, Dl, bl);
          eval_cell(cell_hi, axis, Dr, br);
          const double D = 0.5 * (Dl + Dr);
          const double B = 0.5 * (bl + br) - (Dr - Dl) / h;
          fc.D[axis][face] = D;
          fc.B[axis][face] = B;
          fc.delta[axis][face] = D > 1e-300 ? donor_weight(B * h / D) : (B > 0.0 ? 1.0 : 0.0);
        }
      }
    }
    return fc;
  }

  const Problem& p_;
  GridSpec g_;
  Index nx_ = 0, ny_ = 1;
  FaceCoeffs faces_, scratch_;
  std::vector<Vector> flux_;
  double clipped_ = 0.0;
};

void rk4_step(const Problem& p, double t, double dt, Matrix& positions, Matrix& k1, Matrix& k2,
              Matrix& k3, Matrix& k4, Vector& x, Vector& b) {
  const Index n = positions.rows();
  const int d = static_cast<int>(positions.cols());
  auto eval = [&](const Matrix& base, double tt, Matrix& out) {
    for (Index i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) x[k] = base(i, k);
      p.coefficients.b(tt, x, b);
      for (int k = 0; k < d; ++k) out(i, k) = b[k];
    }
  };
  eval(positions, t, k1);
  Matrix tmp = positions + 0.5 * dt * k1;
  eval(tmp, t + 0.5 * dt, k2);
  tmp = positions + 0.5 * dt * k2;
  eval(tmp, t + 0.5 * dt, k3);
  tmp = positions + dt * k3;
  eval(tmp, t + dt, k4);
  positions += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

bool supported_in_box(const Measure& nu, const Box& box) {
  Vector x(nu.dimension());
  for (Index i = 0; i < nu.support_size(); ++i) {
    if (nu.weights()[i] <= 0.0) continue;
    nu.location_into(i, x);
    if (!box.contains(x)) return false;
  }
  return true;
}

}  // namespace

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Solver: return "solver";
    case Provenance::Analytic: return "analytic";
    case Provenance::Particle: return "particle";
    case Provenance::Glued: return "glued";
    case Provenance::BranchingCatalog: return "branching-catalog";
  }
  return "solver";
}

Provenance provenance_from_name(const std::string& name) {
  if (name == "solver") return Provenance::Solver;
  if (name == "analytic") return Provenance::Analytic;
  if (name == "particle") return Provenance::Particle;
  if (name == "glued") return Provenance::Glued;
  if (name == "branching-catalog") return Provenance::BranchingCatalog;
  throw std::invalid_argument("unknown provenance '" + name + "'");
}

const Measure& SolutionCurve::at(double t) const {
  const Index i = time_index(t);
  if (i < 0) {
    throw std::invalid_argument("SolutionCurve: time " + fmt(t) +
                                " is not on the recorded grid [" + fmt(s) + ", " + fmt(T) + "]");
  }
  return marginals[static_cast<std::size_t>(i)];
}

double TimeGrid::max_dt() const {
  double m = 0.0;
  for (std::size_t j = 0; j < substeps.size(); ++j) m = std::max(m, dt(j));
  return m;
}

TimeGrid build_time_grid(double s, double T, const std::vector<double>& checkpoints,
                         double dt_target, int record_every) {
  if (!(T > s)) throw std::invalid_argument("build_time_grid: need T > s");
  if (dt_target <= 0.0) throw std::invalid_argument("build_time_grid: dt must be > 0");
  if (record_every < 1) throw std::invalid_argument("build_time_grid: record_every must be >= 1");
  TimeGrid g;
  g.record_every = record_every;
  g.knots.push_back(s);
  for (double q : checkpoints) {
    if (q > s + kTimeMatchTol && q < T - kTimeMatchTol) g.knots.push_back(q);
  }
  g.knots.push_back(T);
  std::sort(g.knots.begin(), g.knots.end());
  g.record_times.push_back(s);
  for (std::size_t j = 0; j + 1 < g.knots.size(); ++j) {
    const double len = g.knots[j + 1] - g.knots[j];
    const int blocks = std::max(1, static_cast<int>(std::ceil(
                                       len / (dt_target * record_every) - 1e-12)));
    const int n_sub = blocks * record_every;
    g.substeps.push_back(n_sub);
    const double dt = len / n_sub;
    for (int m = 1; m < blocks; ++m) {
      g.record_times.push_back(g.knots[j] + dt * (m * record_every));
    }
    g.record_times.push_back(g.knots[j + 1]);
  }
  return g;
}

double stable_dt(double spacing, double sup_a, double sup_b, int dimension) {
  const double denom = dimension * (sup_a + 2.0 * sup_b * spacing);
  if (denom <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return spacing * spacing / denom;
}

SolutionCurve solve_forward(const Problem& p, double s, const Measure& nu,
                            const SolveOptions& opts) {
  const double T = p.horizon();
  if (!(s < T - kTimeMatchTol) && std::abs(s - T) > kTimeMatchTol) {
    throw std::invalid_argument("solve_forward: start time outside [0, T)");
  }
  if (!supported_in_box(nu, p.domain_box)) {
    throw std::invalid_argument("solve_forward: initial datum not supported in the domain box");
  }

  SolutionCurve curve;
  curve.s = s;
  curve.T = T;

  const bool degenerate_atomic =
      p.coefficients.sup_bound_a == 0.0 && nu.kind() == SupportKind::Atoms;

  if (degenerate_atomic) {
    // Atom transport along RK4 characteristics, recorded at every step.
    TimeGrid tg = build_time_grid(s, T, opts.checkpoints, opts.dt, 1);
    curve.provenance = Provenance::Solver;
    Matrix pos = nu.atom_locations();
    const Index n = pos.rows();
    const int d = nu.dimension();
    Matrix k1(n, d), k2(n, d), k3(n, d), k4(n, d);
    Vector x(d), b(d);
    curve.times.push_back(s);
    curve.marginals.push_back(nu);
    for (std::size_t j = 0; j + 1 < tg.knots.size(); ++j) {
      const double dt = tg.dt(j);
      double t = tg.knots[j];
      for (int m = 0; m < tg.substeps[j]; ++m) {
        rk4_step(p, t, dt, pos, k1, k2, k3, k4, x, b);
        t = (m + 1 == tg.substeps[j]) ? tg.knots[j + 1] : tg.knots[j] + dt * (m + 1);
        if (!pos.allFinite()) {
          throw std::runtime_error("solve_forward: non-finite atom position at t=" + fmt(t));
        }
        curve.times.push_back(t);
        curve.marginals.push_back(Measure::atoms(pos, nu.weights()));
      }
    }
    curve.continuity_constant = compute_continuity_constant(curve);
    return curve;
  }

  // Grid path.
  const GridSpec& grid = opts.grid;
  if (grid.cell_count() <= 0) {
    throw std::invalid_argument("solve_forward: grid required for non-degenerate problems");
  }
  TimeGrid tg = build_time_grid(s, T, opts.checkpoints, opts.dt, opts.record_every);
  const double bound =
      stable_dt(grid.spacing, p.coefficients.sup_bound_a, p.coefficients.sup_bound_b,
                grid.dimension);
  if (tg.max_dt() > bound * (1.0 + 1e-12)) {
    throw std::invalid_argument("solve_forward: CFL violation: dt=" + fmt(tg.max_dt()) +
                                " exceeds stable dt=" + fmt(bound));
  }

  GridStepper stepper(p, grid);
  Vector w = rasterize(nu, grid).weights();
  curve.provenance = Provenance::Solver;
  curve.times.push_back(s);
  curve.marginals.push_back(Measure::grid(grid, w));
  double boundary = stepper.boundary_mass(w);
  for (std::size_t j = 0; j + 1 < tg.knots.size(); ++j) {
    const double dt = tg.dt(j);
    for (int m = 0; m < tg.substeps[j]; ++m) {
      stepper.step(w, tg.knots[j] + dt * m, dt);
      if ((m + 1) % tg.record_every == 0) {
        const double t =
            (m + 1 == tg.substeps[j]) ? tg.knots[j + 1] : tg.knots[j] + dt * (m + 1);
        const double mass = w.sum();
        if (std::abs(mass - 1.0) > 1e-6) {
          throw std::runtime_error("solve_forward: mass drift " + fmt(mass - 1.0) + " at t=" +
                                   fmt(t));
        }
        curve.times.push_back(t);
        curve.marginals.push_back(Measure::grid(grid, w));
        boundary = std::max(boundary, stepper.boundary_mass(w));
      }
    }
  }
  curve.boundary_mass = boundary;
  curve.clipped_mass = stepper.clipped_mass();
  if (curve.clipped_mass > 0.0) {
    log::warn("solve_forward: clipped negative mass total " + fmt(curve.clipped_mass));
  }
  curve.continuity_constant = compute_continuity_constant(curve);
  return curve;
}

namespace {

// Values of f and of L_t f on the support of a measure.
struct GeneratorEval {
  const Problem& p;
  Matrix a;
  Vector b, grad, x;
  Matrix hess;

  explicit GeneratorEval(const Problem& prob)
      : p(prob),
        a(prob.dimension(), prob.dimension()),
        b(prob.dimension()),
        grad(prob.dimension()),
        x(prob.dimension()),
        hess(prob.dimension(), prob.dimension()) {}

  double apply(const TestFunction& f, double t, const Vector& xx) {
    p.coefficients.a(t, xx, a);
    p.coefficients.b(t, xx, b);
    f.gradient_at(xx, grad);
    f.hessian_at(xx, hess);
    double v = b.dot(grad);
    for (Index i = 0; i < a.rows(); ++i) {
      for (Index j = 0; j < a.cols(); ++j) v += 0.5 * a(i, j) * hess(i, j);
    }
    return v;
  }

  Vector on_support(const Measure& m, const TestFunction& f, double t) {
    Vector out(m.support_size());
    for (Index i = 0; i < m.support_size(); ++i) {
      m.location_into(i, x);
      out[i] = apply(f, t, x);
    }
    return out;
  }
};

bool uniform_grid_curve(const SolutionCurve& c) {
  if (c.marginals.empty() || c.marginals.front().kind() != SupportKind::Grid) return false;
  const GridSpec& g = c.marginals.front().grid_spec();
  for (const Measure& m : c.marginals) {
    if (m.kind() != SupportKind::Grid || !m.grid_spec().matches(g)) return false;
  }
  return true;
}

}  // namespace

double weak_residual(const SolutionCurve& curve, const Problem& p,
                     const std::vector<TestFunction>& fs,
                     const std::vector<std::pair<double, double>>& pairs) {
  const std::size_t n = curve.times.size();
  if (n < 2) throw std::invalid_argument("weak_residual: curve needs at least two times");
  std::vector<std::pair<Index, Index>> idx;
  idx.reserve(pairs.size());
  for (const auto& [t1, t2] : pairs) {
    if (t1 < curve.s - kTimeMatchTol || t2 > curve.T + kTimeMatchTol || t2 < t1) {
      throw std::invalid_argument("weak_residual: pair (" + fmt(t1) + ", " + fmt(t2) +
                                  ") outside [" + fmt(curve.s) + ", " + fmt(curve.T) + "]");
    }
    const Index i1 = curve.time_index(t1), i2 = curve.time_index(t2);
    if (i1 < 0 || i2 < 0) {
      throw std::invalid_argument("weak_residual: pair (" + fmt(t1) + ", " + fmt(t2) +
                                  ") not on the recorded time grid");
    }
    idx.emplace_back(i1, i2);
  }

  const bool grid_uniform = uniform_grid_curve(curve);
  const bool frozen = grid_uniform && !p.coefficients.time_dependent;
  GeneratorEval gen(p);

  double worst = 0.0;
  for (const TestFunction& f : fs) {
    Vector fvals, lfvals;
    if (grid_uniform) fvals = evaluate_on_support(curve.marginals.front(), f);
    if (frozen) lfvals = gen.on_support(curve.marginals.front(), f, curve.s);

    std::vector<double> F(n), g(n);
    for (std::size_t k = 0; k < n; ++k) {
      const Measure& m = curve.marginals[k];
      if (grid_uniform) {
        F[k] = m.weights().dot(fvals);
        g[k] = frozen ? m.weights().dot(lfvals)
                      : m.weights().dot(gen.on_support(m, f, curve.times[k]));
      } else {
        F[k] = integrate(m, f);
        g[k] = m.weights().dot(gen.on_support(m, f, curve.times[k]));
      }
    }
    std::vector<double> I(n, 0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      I[k + 1] = I[k] + 0.5 * (g[k] + g[k + 1]) * (curve.times[k + 1] - curve.times[k]);
    }
    for (const auto& [i1, i2] : idx) {
      const double r = std::abs(F[static_cast<std::size_t>(i2)] - F[static_cast<std::size_t>(i1)] -
                                (I[static_cast<std::size_t>(i2)] - I[static_cast<std::size_t>(i1)]));
      worst = std::max(worst, r);
    }
  }
  return worst;
}

double narrow_continuity_modulus(const SolutionCurve& curve,
                                 const std::vector<TestFunction>& fs) {
  if (curve.times.size() < 2) {
    throw std::invalid_argument("narrow_continuity_modulus: curve needs at least two times");
  }
  double worst = 0.0;
  for (const TestFunction& f : fs) {
    double prev = integrate(curve.marginals[0], f);
    for (std::size_t k = 1; k < curve.times.size(); ++k) {
      const double cur = integrate(curve.marginals[k], f);
      worst = std::max(worst, std::abs(cur - prev));
      prev = cur;
    }
  }
  return worst;
}

double compute_continuity_constant(const SolutionCurve& curve) {
  double c = 0.0;
  for (std::size_t k = 0; k + 1 < curve.times.size(); ++k) {
    const double dt = curve.times[k + 1] - curve.times[k];
    if (dt <= 0.0) continue;
    c = std::max(c, wasserstein1(curve.marginals[k], curve.marginals[k + 1]) / std::sqrt(dt));
  }
  return c;
}

void save_curve(const SolutionCurve& curve, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest;
  manifest["s"] = curve.s;
  manifest["T"] = curve.T;
  manifest["times"] = curve.times;
  manifest["provenance"] = provenance_name(curve.provenance);
  manifest["continuity_constant"] = curve.continuity_constant;
  manifest["boundary_mass"] = curve.boundary_mass;
  manifest["clipped_mass"] = curve.clipped_mass;
  manifest["key"] = curve.key;
  std::vector<std::string> files;
  for (std::size_t k = 0; k < curve.marginals.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "m_%05zu.csv", k);
    files.emplace_back(name);
    save_measure_csv(curve.marginals[k], (fs::path(dir) / name).string());
  }
  manifest["files"] = files;
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw std::runtime_error("save_curve: cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

SolutionCurve load_curve(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw std::runtime_error("load_curve: missing manifest.json in " + dir);
  json manifest = json::parse(in);
  SolutionCurve curve;
  curve.s = manifest.at("s").get<double>();
  curve.T = manifest.at("T").get<double>();
  curve.times = manifest.at("times").get<std::vector<double>>();
  curve.provenance = provenance_from_name(manifest.at("provenance").get<std::string>());
  curve.continuity_constant = manifest.value("continuity_constant", 0.0);
  curve.boundary_mass = manifest.value("boundary_mass", 0.0);
  curve.clipped_mass = manifest.value("clipped_mass", 0.0);
  curve.key = manifest.value("key", "curve");
  for (const auto& name : manifest.at("files").get<std::vector<std::string>>()) {
    curve.marginals.push_back(load_measure_csv((fs::path(dir) / name).string()));
  }
  if (curve.marginals.size() != curve.times.size()) {
    throw std::runtime_error("load_curve: manifest/file count mismatch in " + dir);
  }
  return curve;
}

}  // namespace fpkflow
