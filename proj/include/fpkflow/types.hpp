#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace fpkflow {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Absolute tolerance used when matching instants against a time grid.
inline constexpr double kTimeMatchTol = 1e-9;

/// Index of `t` in `times`, or -1 when no entry is within kTimeMatchTol.
Index find_time_index(const std::vector<double>& times, double t);

/// True when the two grids have equal length and agree pointwise within
/// kTimeMatchTol.
bool same_time_grid(const std::vector<double>& a, const std::vector<double>& b);

/// Evenly spaced checkpoint grid s + k*(T-s)/n, k = 0..n.
std::vector<double> checkpoint_grid(double s, double T, int n);

}  // namespace fpkflow
