#include "fpkflow/types.hpp"

#include <cmath>
#include <cstddef>

namespace fpkflow {

Index find_time_index(const std::vector<double>& times, double t) {
  // Grids are short enough that a linear scan is fine and avoids any
  // assumption about spacing.
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - t) <= kTimeMatchTol) return static_cast<Index>(i);
  }
  return -1;
}

bool same_time_grid(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > kTimeMatchTol) return false;
  }
  return true;
}

std::vector<double> checkpoint_grid(double s, double T, int n) {
  std::vector<double> q;
  q.reserve(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    q.push_back(s + (T - s) * static_cast<double>(k) / static_cast<double>(n));
  }
  q.back() = T;
  return q;
}

}  // namespace fpkflow
