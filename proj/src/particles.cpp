#include "fpkflow/particles.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace fpkflow {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Per-particle random stream: the state is derived from (seed, index) alone,
// so paths replay bit-identically regardless of thread schedule.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t particle) {
    state_ = seed ^ (particle * 0x9e3779b97f4a7c15ull + 0x243f6a8885a308d3ull);
    splitmix64(state_);
  }

  double uniform() {
    // (0, 1]; never 0 so Box-Muller's log stays finite.
    return (static_cast<double>(splitmix64(state_) >> 11) + 1.0) * 0x1p-53;
  }

  double normal() {
    if (have_cache_) {
      have_cache_ = false;
      return cache_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    cache_ = radius * std::sin(angle);
    have_cache_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t state_ = 0;
  double cache_ = 0.0;
  bool have_cache_ = false;
};

struct InitialSampler {
  explicit InitialSampler(const Measure& nu) : nu_(nu) {
    cdf_.resize(static_cast<std::size_t>(nu.support_size()));
    double acc = 0.0;
    for (Index i = 0; i < nu.support_size(); ++i) {
      acc += nu.weights()[i];
      cdf_[static_cast<std::size_t>(i)] = acc;
    }
    cdf_.back() = 1.0;
  }

  void sample(double u, Vector& out) const {
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    const Index i = std::min(static_cast<Index>(it - cdf_.begin()), nu_.support_size() - 1);
    nu_.location_into(i, out);
  }

  const Measure& nu_;
  std::vector<double> cdf_;
};

// Symmetric PSD square root of a; 1d fast path, eigendecomposition otherwise
// with eigenvalues clipped at zero.
void diffusion_sqrt(const Matrix& a, Matrix& sigma) {
  if (a.rows() == 1) {
    sigma(0, 0) = std::sqrt(std::max(a(0, 0), 0.0));
    return;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("simulate_particles: eigendecomposition of a(t,x) failed");
  }
  Vector lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  sigma = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

struct StepGrid {
  std::vector<double> knots;
  std::vector<int> substeps;
  double max_dt = 0.0;
};

StepGrid particle_steps(double s, double T, const std::vector<double>& record_times, double dt) {
  TimeGrid tg = build_time_grid(s, T, record_times, dt, 1);
  StepGrid g;
  g.knots = tg.knots;
  g.substeps = tg.substeps;
  g.max_dt = tg.max_dt();
  return g;
}

// Walks every path, calling on_state(particle, step_time, x) at s and after
// each step. Chunked across threads; per-particle streams make the output
// schedule-independent as long as on_state writes particle-disjoint data.
template <typename OnState>
void walk_paths(const Problem& p, const Measure& nu, int count, std::uint64_t seed,
                const StepGrid& grid, OnState&& on_state) {
  const int d = p.dimension();
  InitialSampler sampler(nu);

  auto run_chunk = [&](int begin, int end) {
    Vector x(d), b(d), noise(d);
    Matrix a(d, d), sigma(d, d);
    for (int i = begin; i < end; ++i) {
      NormalStream stream(seed, static_cast<std::uint64_t>(i));
      sampler.sample(stream.uniform(), x);
      on_state(i, grid.knots.front(), x);
      for (std::size_t j = 0; j + 1 < grid.knots.size(); ++j) {
        const double dt = (grid.knots[j + 1] - grid.knots[j]) / grid.substeps[j];
        const double sqdt = std::sqrt(dt);
        for (int m = 0; m < grid.substeps[j]; ++m) {
          const double t = grid.knots[j] + dt * m;
          p.coefficients.b(t, x, b);
          p.coefficients.a(t, x, a);
          diffusion_sqrt(a, sigma);
          for (int k = 0; k < d; ++k) noise[k] = stream.normal();
          x += b * dt + sigma * (sqdt * noise);
          const double t_next =
              (m + 1 == grid.substeps[j]) ? grid.knots[j + 1] : grid.knots[j] + dt * (m + 1);
          if (!x.allFinite()) {
            throw std::runtime_error("particle path " + std::to_string(i) +
                                     " became non-finite at t=" + fmt(t_next));
          }
          on_state(i, t_next, x);
        }
      }
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int n_threads = static_cast<int>(std::min<unsigned>(hw, 8));
  if (n_threads == 1 || count < 512) {
    run_chunk(0, count);
    return;
  }
  std::vector<std::thread> threads;
  std::exception_ptr error;
  std::mutex error_mutex;
  const int chunk = (count + n_threads - 1) / n_threads;
  for (int t = 0; t < n_threads; ++t) {
    const int begin = t * chunk;
    const int end = std::min(count, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&run_chunk, &error, &error_mutex, begin, end] {
      try {
        run_chunk(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

const Matrix& ParticleEnsemble::snapshot_at(double t) const {
  const Index i = find_time_index(record_times, t);
  if (i < 0) {
    throw std::invalid_argument("ParticleEnsemble: time " + fmt(t) + " was not recorded");
  }
  return snapshots[static_cast<std::size_t>(i)];
}

ParticleEnsemble simulate_particles(const Problem& p, double s, const Measure& nu, int count,
                                    double dt_target, std::uint64_t seed,
                                    const std::vector<double>& record_times) {
  if (count < 1) throw std::invalid_argument("simulate_particles: count must be >= 1");
  ParticleEnsemble e;
  e.count = count;
  e.dimension = p.dimension();
  e.s = s;
  e.T = p.horizon();
  e.seed = seed;
  e.problem = p;
  e.initial = nu;

  StepGrid grid = particle_steps(s, e.T, record_times, dt_target);
  e.dt = grid.max_dt;
  e.record_times = grid.knots;  // every requested record time is a knot
  e.snapshots.assign(e.record_times.size(), Matrix::Zero(count, e.dimension));

  walk_paths(p, nu, count, seed, grid, [&](int particle, double t, const Vector& x) {
    const Index slot = find_time_index(e.record_times, t);
    if (slot >= 0) e.snapshots[static_cast<std::size_t>(slot)].row(particle) = x.transpose();
  });

  // Sampling fidelity of the initial slice.
  const double w1 = wasserstein1(
      Measure::atoms(e.snapshots.front(), Vector::Constant(count, 1.0 / count)), nu);
  const double bound = 2.0 * std::sqrt(static_cast<double>(e.dimension) / count);
  if (w1 > bound) {
    throw std::runtime_error("simulate_particles: initial empirical W1 " + fmt(w1) +
                             " exceeds the sampling bound " + fmt(bound));
  }
  return e;
}

SolutionCurve marginals(const ParticleEnsemble& e, const std::vector<double>& times) {
  if (times.empty()) throw std::invalid_argument("marginals: no times requested");
  SolutionCurve curve;
  curve.s = times.front();
  curve.T = times.back();
  curve.provenance = Provenance::Particle;
  curve.key = "particles";
  const Vector w = Vector::Constant(e.count, 1.0 / e.count);
  for (double t : times) {
    curve.times.push_back(t);
    curve.marginals.push_back(Measure::atoms(e.snapshot_at(t), w));
  }
  curve.continuity_constant = compute_continuity_constant(curve);
  return curve;
}

MartingaleReport martingale_diagnostics(const ParticleEnsemble& e,
                                        const Problem& generator_problem,
                                        const std::vector<TestFunction>& phis,
                                        const std::vector<std::pair<double, double>>& pairs,
                                        int n_windows) {
  if (n_windows < 1) throw std::invalid_argument("martingale_diagnostics: n_windows must be >= 1");
  if (phis.empty() || pairs.empty()) {
    throw std::invalid_argument("martingale_diagnostics: need test functions and pairs");
  }
  for (const TestFunction& phi : phis) {
    if (!phi.has_analytic_derivatives()) {
      throw std::invalid_argument("martingale_diagnostics: test function '" + phi.id +
                                  "' has no registered derivatives");
    }
  }

  std::vector<double> needed;
  for (const auto& [r, t] : pairs) {
    if (t < r) throw std::invalid_argument("martingale_diagnostics: pair must satisfy r <= t");
    for (double v : {r, t}) {
      if (find_time_index(needed, v) < 0) needed.push_back(v);
    }
  }
  std::sort(needed.begin(), needed.end());
  for (double v : needed) {
    if (find_time_index(e.record_times, v) < 0) {
      throw std::invalid_argument("martingale_diagnostics: time " + fmt(v) +
                                  " is not on the ensemble's recorded grid");
    }
  }

  StepGrid grid = particle_steps(e.s, e.T, e.record_times, e.dt);
  const std::size_t n_phi = phis.size();
  const std::size_t n_times = needed.size();
  const int d = generator_problem.dimension();

  // M[phi](particle, slot) and the conditioning coordinate X(particle, slot).
  std::vector<Matrix> M(n_phi, Matrix::Zero(e.count, static_cast<Index>(n_times)));
  Matrix X = Matrix::Zero(e.count, static_cast<Index>(n_times));

  struct PathAccum {
    std::vector<double> integral;  // running left-Riemann sums, one per phi
    std::vector<double> lphi;      // L phi at the previous state
    double last_t = 0.0;
    bool started = false;
  };
  std::vector<PathAccum> accum(static_cast<std::size_t>(e.count));

  const Problem& gp = generator_problem;
  walk_paths(e.problem, e.initial, e.count, e.seed, grid,
             [&](int particle, double t, const Vector& x) {
    PathAccum& acc = accum[static_cast<std::size_t>(particle)];
    if (!acc.started) {
      acc.integral.assign(n_phi, 0.0);
      acc.lphi.assign(n_phi, 0.0);
      acc.started = true;
    } else {
      const double dt = t - acc.last_t;
      for (std::size_t ip = 0; ip < n_phi; ++ip) acc.integral[ip] += acc.lphi[ip] * dt;
    }
    const Index slot = find_time_index(needed, t);
    if (slot >= 0) {
      for (std::size_t ip = 0; ip < n_phi; ++ip) {
        M[ip](particle, slot) = phis[ip].value(x) - acc.integral[ip];
      }
      X(particle, slot) = x[0];
    }
    // L phi at the current state feeds the next left-Riemann increment.
    thread_local Matrix a, hess;
    thread_local Vector b, grad;
    a.resize(d, d);
    hess.resize(d, d);
    b.resize(d);
    grad.resize(d);
    gp.coefficients.a(t, x, a);
    gp.coefficients.b(t, x, b);
    for (std::size_t ip = 0; ip < n_phi; ++ip) {
      phis[ip].gradient_at(x, grad);
      phis[ip].hessian_at(x, hess);
      double v = b.dot(grad);
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) v += 0.5 * a(i, j) * hess(i, j);
      }
      acc.lphi[ip] = v;
    }
    acc.last_t = t;
  });

  MartingaleReport report;
  const double n = static_cast<double>(e.count);
  for (const auto& [r, t] : pairs) {
    const Index ir = find_time_index(needed, r);
    const Index it = find_time_index(needed, t);
    // Quantile breakpoints of the conditioning slice.
    std::vector<double> xs(static_cast<std::size_t>(e.count));
    for (int i = 0; i < e.count; ++i) xs[static_cast<std::size_t>(i)] = X(i, ir);
    std::sort(xs.begin(), xs.end());
    std::vector<double> breaks;
    for (int w = 1; w < n_windows; ++w) {
      breaks.push_back(xs[static_cast<std::size_t>(
          static_cast<long long>(e.count) * w / n_windows)]);
    }
    for (std::size_t ip = 0; ip < n_phi; ++ip) {
      std::vector<double> sum(static_cast<std::size_t>(n_windows), 0.0);
      std::vector<double> sumsq(static_cast<std::size_t>(n_windows), 0.0);
      for (int i = 0; i < e.count; ++i) {
        const double diff = M[ip](i, it) - M[ip](i, ir);
        const auto bin = static_cast<std::size_t>(
            std::upper_bound(breaks.begin(), breaks.end(), X(i, ir)) - breaks.begin());
        sum[bin] += diff;
        sumsq[bin] += diff * diff;
      }
      for (int w = 0; w < n_windows; ++w) {
        MartingaleCell cell;
        cell.phi_id = phis[ip].id;
        cell.r = r;
        cell.t = t;
        cell.window = w;
        const double mean = sum[static_cast<std::size_t>(w)] / n;
        // Variance of the windowed summand over all particles.
        const double ex2 = sumsq[static_cast<std::size_t>(w)] / n;
        const double var = std::max(0.0, ex2 - mean * mean) * n / std::max(1.0, n - 1.0);
        cell.stddev = std::sqrt(var);
        cell.statistic = std::abs(mean);
        cell.threshold = 3.0 * cell.stddev / std::sqrt(n) + 1e-12;
        const double ratio = cell.statistic / cell.threshold;
        report.max_statistic = std::max(report.max_statistic, cell.statistic);
        report.worst_ratio = std::max(report.worst_ratio, ratio);
        if (cell.statistic > cell.threshold) report.all_within_threshold = false;
        report.cells.push_back(std::move(cell));
      }
    }
  }
  return report;
}

double martingale_residual(const ParticleEnsemble& e, const Problem& generator_problem,
                           const std::vector<TestFunction>& phis,
                           const std::vector<std::pair<double, double>>& pairs, int n_windows) {
  return martingale_diagnostics(e, generator_problem, phis, pairs, n_windows).max_statistic;
}

}  // namespace fpkflow
