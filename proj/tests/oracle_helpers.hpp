#pragma once

// Independent oracles used by the test suites: quadrature, closed forms,
// brute-force selection, and a small deterministic RNG. Nothing here calls
// into the implementation paths being checked.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

// Composite Simpson on [a, b] with n panels (n rounded up to even).
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + h * i) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

inline double gauss_density(double x, double mean, double var) {
  const double z = (x - mean) * (x - mean) / (2.0 * var);
  return std::exp(-z) / std::sqrt(2.0 * M_PI * var);
}

// Departing solution of xdot = sqrt(x) from rest at time tau.
inline double branch_path(double t, double tau) {
  const double u = t - tau;
  return u <= 0.0 ? 0.0 : (u / 2.0) * (u / 2.0);
}

// splitmix64-based generator for property tests.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }

 private:
  std::uint64_t state_;
};

// Exhaustive lexicographic maximization over a value matrix: values[c][k] is
// the k-th criterion of candidate c. At each step keep candidates within
// tie_tol of the running maximum. Returns the per-step survivor sets.
inline std::vector<std::vector<std::size_t>> lexicographic_survivors(
    const std::vector<std::vector<double>>& values, double tie_tol) {
  std::vector<std::vector<std::size_t>> history;
  if (values.empty()) return history;
  std::vector<std::size_t> alive(values.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
  const std::size_t n_steps = values.front().size();
  for (std::size_t k = 0; k < n_steps; ++k) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c : alive) best = std::max(best, values[c][k]);
    std::vector<std::size_t> next;
    for (std::size_t c : alive) {
      if (values[c][k] >= best - tie_tol) next.push_back(c);
    }
    history.push_back(next);
    alive = next;
    if (alive.size() == 1) break;
  }
  return history;
}

}  // namespace oracle
