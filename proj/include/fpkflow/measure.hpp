#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "fpkflow/types.hpp"

namespace fpkflow {

enum class SupportKind { Grid, Atoms };

/// Uniform cell grid on an axis-aligned box, dimension 1 or 2.
/// Cell centers are origin[k] + (i + 1/2) * spacing along each axis;
/// for d = 2 the flat cell index is ix + cells[0] * iy.
struct GridSpec {
  Vector origin;
  double spacing = 0.0;
  std::array<Index, 2> cells{0, 0};
  int dimension = 1;

  Index cell_count() const;
  Vector center(Index flat) const;
  void center_into(Index flat, Vector& out) const;
  bool matches(const GridSpec& other) const;

  /// Grid covering [lo, hi] per axis with round((hi-lo)/spacing) cells.
  static GridSpec cover(const Vector& lo, const Vector& hi, double spacing);
};

/// Discrete probability measure: either per-cell masses on a GridSpec or a
/// finite list of weighted atoms. Weights are normalized to total mass one at
/// construction; a deficit beyond 1e-9 is reported through the warning log.
/// Immutable after construction.
class Measure {
 public:
  static Measure dirac(const Vector& location);
  static Measure dirac1d(double x);
  /// locations: n x d, one atom per row.
  static Measure atoms(const Matrix& locations, const Vector& weights);
  static Measure grid(const GridSpec& spec, const Vector& weights);
  /// Cell-averaged isotropic Gaussian density times cell volume.
  static Measure gaussian_on_grid(const GridSpec& spec, const Vector& mean,
                                  double variance);

  SupportKind kind() const { return kind_; }
  int dimension() const { return dimension_; }
  Index support_size() const { return weights_.size(); }
  const Vector& weights() const { return weights_; }
  const GridSpec& grid_spec() const;
  const Matrix& atom_locations() const;

  /// Location of support point i (atom or cell center).
  Vector location(Index i) const;
  void location_into(Index i, Vector& out) const;

  double mean1d() const;
  double second_moment1d() const;

 private:
  Measure() = default;
  void normalize_weights(const char* context);

  SupportKind kind_ = SupportKind::Atoms;
  int dimension_ = 1;
  GridSpec grid_;
  Matrix atoms_;
  Vector weights_;
};

/// Bounded test function with optional analytic first/second derivatives.
/// When the closures are absent, central differences with step 1e-5 are used.
struct TestFunction {
  std::string id;
  double bound = 1.0;
  double lipschitz_bound = 1.0;
  double second_derivative_bound = 1.0;
  std::function<double(const Vector&)> value;
  std::function<void(const Vector&, Vector&)> gradient;    // optional
  std::function<void(const Vector&, Matrix&)> hessian;     // optional

  bool has_analytic_derivatives() const {
    return static_cast<bool>(gradient) && static_cast<bool>(hessian);
  }
  void gradient_at(const Vector& x, Vector& out) const;
  void hessian_at(const Vector& x, Matrix& out) const;
};

/// integral of f against m; throws on a non-finite value, naming the point.
double integrate(const Measure& m, const TestFunction& f);

/// f evaluated on every support point, in support order.
Vector evaluate_on_support(const Measure& m, const TestFunction& f);

/// Exact W1 in 1d (L1 distance of the CDFs); sliced approximation with 64
/// fixed directions in 2d. Throws on dimension mismatch.
double wasserstein1(const Measure& a, const Measure& b);

/// Rescales the weights to total mass one. Throws when the mass is <= 0.
Measure normalize(const Measure& m);

/// Content-addressed key: equal discrete measures map to equal keys.
std::string canonical_key(const Measure& m);

/// CSV layout: `# kind,dimension` header (plus a grid-spec comment line for
/// grid measures), then one `location...,weight` row per support point.
void save_measure_csv(const Measure& m, const std::string& path);
Measure load_measure_csv(const std::string& path);

/// Nearest-cell deposition with linear (cloud-in-cell) splitting; exact for
/// grid measures already on `spec`.
Measure rasterize(const Measure& m, const GridSpec& spec);

}  // namespace fpkflow
