#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fpkflow/problem.hpp"
#include "fpkflow/solver.hpp"

namespace fpkflow {

/// Euler-Maruyama ensemble. Positions are stored at the recorded times only;
/// statistics needing the full step resolution re-stream the paths, which is
/// exact because every particle owns a counter-based random stream derived
/// from (seed, particle index).
struct ParticleEnsemble {
  int count = 0;
  int dimension = 1;
  double s = 0.0;
  double T = 1.0;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  Problem problem;  // coefficients the paths were simulated with
  Measure initial = Measure::dirac1d(0.0);
  std::vector<double> record_times;
  std::vector<Matrix> snapshots;  // one count x dimension matrix per record time

  const Matrix& snapshot_at(double t) const;
};

/// X_{k+1} = X_k + b(t_k, X_k) dt + sigma(t_k, X_k) sqrt(dt) xi_k with
/// sigma the symmetric PSD square root of a (eigenvalues clipped at zero).
/// Record times must include the interval ends; checkpoints land exactly.
ParticleEnsemble simulate_particles(const Problem& p, double s, const Measure& nu, int count,
                                    double dt_target, std::uint64_t seed,
                                    const std::vector<double>& record_times);

/// Equal-weight atomic marginals at the requested recorded times.
SolutionCurve marginals(const ParticleEnsemble& e, const std::vector<double>& times);

struct MartingaleCell {
  std::string phi_id;
  double r = 0.0, t = 0.0;
  int window = 0;
  double statistic = 0.0;
  double threshold = 0.0;  // 3 sd / sqrt(N) for the windowed summand
  double stddev = 0.0;
};

struct MartingaleReport {
  double max_statistic = 0.0;
  double worst_ratio = 0.0;  // statistic / threshold at the worst cell
  bool all_within_threshold = true;
  std::vector<MartingaleCell> cells;
};

/// Tests E[(M_t - M_r) G_r] = 0 for M_t = phi(X_t) - int_s^t L_u phi(X_u) du
/// (left Riemann sums on the step grid) against quantile-bin indicators G_r
/// of X_r. generator_problem supplies the L being tested, which may differ
/// from the ensemble's simulation coefficients.
MartingaleReport martingale_diagnostics(const ParticleEnsemble& e,
                                        const Problem& generator_problem,
                                        const std::vector<TestFunction>& phis,
                                        const std::vector<std::pair<double, double>>& pairs,
                                        int n_windows);

/// Max statistic of martingale_diagnostics.
double martingale_residual(const ParticleEnsemble& e, const Problem& generator_problem,
                           const std::vector<TestFunction>& phis,
                           const std::vector<std::pair<double, double>>& pairs, int n_windows);

}  // namespace fpkflow
