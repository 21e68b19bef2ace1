#pragma once

#include <vector>

#include "fpkflow/measure.hpp"

namespace fpkflow {

/// The bounded smooth test corpus used for residual certification and
/// selection: sign * tanh(omega (u.x) + phi) with analytic derivatives,
/// closed under negation. In 1d: omega in {1/2, 1, 2, 4}, phi in {0, 1, -1}.
std::vector<TestFunction> bounded_tanh_functions(int dimension);

/// Parameters of one member, enough to rebuild it exactly (serialized with
/// selection traces).
struct TanhSpec {
  double omega = 1.0;
  double phi = 0.0;
  int sign = 1;
  double ux = 1.0, uy = 0.0;  // projection direction (1d: (1,0))
};

TestFunction make_tanh_function(const TanhSpec& spec, int dimension);
std::vector<TanhSpec> bounded_tanh_specs(int dimension);

}  // namespace fpkflow
