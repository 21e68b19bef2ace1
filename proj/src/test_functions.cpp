#include "fpkflow/test_functions.hpp"

#include <cmath>
#include <cstdio>

namespace fpkflow {

namespace {

std::string spec_id(const TanhSpec& s, int dimension) {
  char buf[96];
  std::string arg;
  if (dimension == 1) {
    char a[48];
    std::snprintf(a, sizeof(a), "%g*x", s.omega);
    arg = a;
  } else {
    char a[64];
    std::snprintf(a, sizeof(a), "%g*(%g*x%+g*y)", s.omega, s.ux, s.uy);
    arg = a;
  }
  if (s.phi != 0.0) {
    char ph[24];
    std::snprintf(ph, sizeof(ph), "%+g", s.phi);
    arg += ph;
  }
  std::snprintf(buf, sizeof(buf), "%stanh(%s)", s.sign < 0 ? "-" : "", arg.c_str());
  return buf;
}

}  // namespace

TestFunction make_tanh_function(const TanhSpec& spec, int dimension) {
  TestFunction f;
  f.id = spec_id(spec, dimension);
  f.bound = 1.0;
  f.lipschitz_bound = spec.omega;
  // sup |tanh''| = 4/(3 sqrt(3)).
  f.second_derivative_bound = spec.omega * spec.omega * 0.7698;
  const double w = spec.omega, phi = spec.phi;
  const double sg = spec.sign < 0 ? -1.0 : 1.0;
  const double ux = dimension == 1 ? 1.0 : spec.ux;
  const double uy = dimension == 1 ? 0.0 : spec.uy;
  f.value = [=](const Vector& x) {
    const double u = x.size() == 1 ? x[0] : ux * x[0] + uy * x[1];
    return sg * std::tanh(w * u + phi);
  };
  f.gradient = [=](const Vector& x, Vector& g) {
    const double u = x.size() == 1 ? x[0] : ux * x[0] + uy * x[1];
    const double th = std::tanh(w * u + phi);
    const double d = sg * w * (1.0 - th * th);
    g[0] = d * ux;
    if (x.size() == 2) g[1] = d * uy;
  };
  f.hessian = [=](const Vector& x, Matrix& h) {
    const double u = x.size() == 1 ? x[0] : ux * x[0] + uy * x[1];
    const double th = std::tanh(w * u + phi);
    const double dd = sg * w * w * (-2.0 * th) * (1.0 - th * th);
    h(0, 0) = dd * ux * ux;
    if (x.size() == 2) {
      h(0, 1) = dd * ux * uy;
      h(1, 0) = dd * ux * uy;
      h(1, 1) = dd * uy * uy;
    }
  };
  return f;
}

std::vector<TanhSpec> bounded_tanh_specs(int dimension) {
  std::vector<TanhSpec> specs;
  const double r = std::sqrt(0.5);
  std::vector<std::pair<double, double>> dirs =
      dimension == 1 ? std::vector<std::pair<double, double>>{{1.0, 0.0}}
                     : std::vector<std::pair<double, double>>{{1.0, 0.0}, {0.0, 1.0}, {r, r}, {r, -r}};
  const std::vector<double> omegas = dimension == 1 ? std::vector<double>{0.5, 1.0, 2.0, 4.0}
                                                    : std::vector<double>{1.0, 2.0};
  for (const auto& [ux, uy] : dirs) {
    for (double w : omegas) {
      for (double phi : {0.0, 1.0, -1.0}) {
        for (int sign : {1, -1}) {
          TanhSpec s;
          s.omega = w;
          s.phi = phi;
          s.sign = sign;
          s.ux = ux;
          s.uy = uy;
          specs.push_back(s);
        }
      }
    }
  }
  return specs;
}

std::vector<TestFunction> bounded_tanh_functions(int dimension) {
  std::vector<TestFunction> fs;
  for (const TanhSpec& s : bounded_tanh_specs(dimension)) {
    fs.push_back(make_tanh_function(s, dimension));
  }
  return fs;
}

}  // namespace fpkflow
