#include "fpkflow/measure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fpkflow/log.hpp"

namespace fpkflow {

namespace {

constexpr double kNumericDerivStep = 1e-5;
constexpr int kSlicedDirections = 64;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_point(const Vector& x) {
  std::string s = "(";
  for (Index i = 0; i < x.size(); ++i) {
    if (i) s += ", ";
    s += format_double(x[i]);
  }
  s += ")";
  return s;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Support of a 1d measure as (position, weight) pairs sorted by position.
std::vector<std::pair<double, double>> sorted_support_1d(const Measure& m) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(static_cast<std::size_t>(m.support_size()));
  Vector x(m.dimension());
  for (Index i = 0; i < m.support_size(); ++i) {
    m.location_into(i, x);
    pts.emplace_back(x[0], m.weights()[i]);
  }
  std::sort(pts.begin(), pts.end());
  return pts;
}

// Exact 1d W1 between two sorted discrete distributions: integral of the
// absolute CDF difference.
double w1_sorted(const std::vector<std::pair<double, double>>& a,
                 const std::vector<std::pair<double, double>>& b) {
  double cdf_a = 0.0, cdf_b = 0.0, total = 0.0;
  std::size_t ia = 0, ib = 0;
  double prev = 0.0;
  bool have_prev = false;
  while (ia < a.size() || ib < b.size()) {
    double xa = ia < a.size() ? a[ia].first : std::numeric_limits<double>::infinity();
    double xb = ib < b.size() ? b[ib].first : std::numeric_limits<double>::infinity();
    double x = std::min(xa, xb);
    if (have_prev) total += std::abs(cdf_a - cdf_b) * (x - prev);
    while (ia < a.size() && a[ia].first == x) cdf_a += a[ia++].second;
    while (ib < b.size() && b[ib].first == x) cdf_b += b[ib++].second;
    prev = x;
    have_prev = true;
  }
  return total;
}

std::vector<std::pair<double, double>> projected_support(const Measure& m,
                                                         double cx, double cy) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(static_cast<std::size_t>(m.support_size()));
  Vector x(m.dimension());
  for (Index i = 0; i < m.support_size(); ++i) {
    m.location_into(i, x);
    pts.emplace_back(cx * x[0] + cy * x[1], m.weights()[i]);
  }
  std::sort(pts.begin(), pts.end());
  return pts;
}

}  // namespace

Index GridSpec::cell_count() const {
  Index n = cells[0];
  if (dimension == 2) n *= cells[1];
  return n;
}

Vector GridSpec::center(Index flat) const {
  Vector out(dimension);
  center_into(flat, out);
  return out;
}

void GridSpec::center_into(Index flat, Vector& out) const {
  if (dimension == 1) {
    out[0] = origin[0] + (static_cast<double>(flat) + 0.5) * spacing;
  } else {
    const Index ix = flat % cells[0];
    const Index iy = flat / cells[0];
    out[0] = origin[0] + (static_cast<double>(ix) + 0.5) * spacing;
    out[1] = origin[1] + (static_cast<double>(iy) + 0.5) * spacing;
  }
}

bool GridSpec::matches(const GridSpec& other) const {
  if (dimension != other.dimension || cells != other.cells) return false;
  if (std::abs(spacing - other.spacing) > 1e-15 * std::max(1.0, spacing)) return false;
  for (int k = 0; k < dimension; ++k) {
    if (std::abs(origin[k] - other.origin[k]) > 1e-12) return false;
  }
  return true;
}

GridSpec GridSpec::cover(const Vector& lo, const Vector& hi, double spacing) {
  if (spacing <= 0.0) throw std::invalid_argument("GridSpec::cover: spacing must be > 0");
  GridSpec g;
  g.dimension = static_cast<int>(lo.size());
  if (g.dimension < 1 || g.dimension > 2) {
    throw std::invalid_argument("GridSpec::cover: dimension must be 1 or 2");
  }
  g.origin = lo;
  g.spacing = spacing;
  for (int k = 0; k < g.dimension; ++k) {
    g.cells[static_cast<std::size_t>(k)] =
        std::max<Index>(1, static_cast<Index>(std::llround((hi[k] - lo[k]) / spacing)));
  }
  return g;
}

void Measure::normalize_weights(const char* context) {
  if (weights_.size() == 0) throw std::invalid_argument(std::string(context) + ": empty support");
  if ((weights_.array() < 0.0).any()) {
    double mn = weights_.minCoeff();
    if (mn < -1e-14) {
      throw std::invalid_argument(std::string(context) + ": negative weight " + format_double(mn));
    }
    weights_ = weights_.cwiseMax(0.0);
  }
  const double total = weights_.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::invalid_argument(std::string(context) + ": total mass must be positive, got " +
                                format_double(total));
  }
  if (std::abs(total - 1.0) > 1e-9) {
    log::warn(std::string(context) + ": renormalizing measure with mass " + format_double(total));
  }
  if (total != 1.0) weights_ /= total;
}

Measure Measure::dirac(const Vector& location) {
  Matrix locs(1, location.size());
  locs.row(0) = location.transpose();
  Vector w(1);
  w[0] = 1.0;
  return atoms(locs, w);
}

Measure Measure::dirac1d(double x) {
  Vector v(1);
  v[0] = x;
  return dirac(v);
}

Measure Measure::atoms(const Matrix& locations, const Vector& weights) {
  if (locations.rows() != weights.size()) {
    throw std::invalid_argument("Measure::atoms: locations/weights size mismatch");
  }
  if (locations.cols() < 1 || locations.cols() > 2) {
    throw std::invalid_argument("Measure::atoms: dimension must be 1 or 2");
  }
  Measure m;
  m.kind_ = SupportKind::Atoms;
  m.dimension_ = static_cast<int>(locations.cols());
  m.atoms_ = locations;
  m.weights_ = weights;
  m.normalize_weights("Measure::atoms");
  return m;
}

Measure Measure::grid(const GridSpec& spec, const Vector& weights) {
  if (spec.cell_count() != weights.size()) {
    throw std::invalid_argument("Measure::grid: weight count does not match cell count");
  }
  Measure m;
  m.kind_ = SupportKind::Grid;
  m.dimension_ = spec.dimension;
  m.grid_ = spec;
  m.weights_ = weights;
  m.normalize_weights("Measure::grid");
  return m;
}

Measure Measure::gaussian_on_grid(const GridSpec& spec, const Vector& mean,
                                  double variance) {
  if (variance <= 0.0) throw std::invalid_argument("gaussian_on_grid: variance must be > 0");
  Vector w(spec.cell_count());
  Vector x(spec.dimension);
  for (Index i = 0; i < spec.cell_count(); ++i) {
    spec.center_into(i, x);
    double q = (x - mean).squaredNorm() / (2.0 * variance);
    w[i] = std::exp(-q);
  }
  return grid(spec, w);
}

const GridSpec& Measure::grid_spec() const {
  if (kind_ != SupportKind::Grid) throw std::logic_error("Measure: not a grid measure");
  return grid_;
}

const Matrix& Measure::atom_locations() const {
  if (kind_ != SupportKind::Atoms) throw std::logic_error("Measure: not an atomic measure");
  return atoms_;
}

Vector Measure::location(Index i) const {
  Vector out(dimension_);
  location_into(i, out);
  return out;
}

void Measure::location_into(Index i, Vector& out) const {
  if (kind_ == SupportKind::Atoms) {
    out = atoms_.row(i).transpose();
  } else {
    grid_.center_into(i, out);
  }
}

double Measure::mean1d() const {
  if (dimension_ != 1) throw std::logic_error("mean1d: measure is not 1d");
  double acc = 0.0;
  Vector x(1);
  for (Index i = 0; i < support_size(); ++i) {
    location_into(i, x);
    acc += weights_[i] * x[0];
  }
  return acc;
}

double Measure::second_moment1d() const {
  if (dimension_ != 1) throw std::logic_error("second_moment1d: measure is not 1d");
  double acc = 0.0;
  Vector x(1);
  for (Index i = 0; i < support_size(); ++i) {
    location_into(i, x);
    acc += weights_[i] * x[0] * x[0];
  }
  return acc;
}

void TestFunction::gradient_at(const Vector& x, Vector& out) const {
  if (gradient) {
    gradient(x, out);
    return;
  }
  Vector xp = x, xm = x;
  for (Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + kNumericDerivStep;
    xm[i] = x[i] - kNumericDerivStep;
    out[i] = (value(xp) - value(xm)) / (2.0 * kNumericDerivStep);
    xp[i] = x[i];
    xm[i] = x[i];
  }
}

void TestFunction::hessian_at(const Vector& x, Matrix& out) const {
  if (hessian) {
    hessian(x, out);
    return;
  }
  const double h = kNumericDerivStep;
  const double f0 = value(x);
  Vector xa = x, xb = x;
  for (Index i = 0; i < x.size(); ++i) {
    xa[i] = x[i] + h;
    xb[i] = x[i] - h;
    out(i, i) = (value(xa) - 2.0 * f0 + value(xb)) / (h * h);
    xa[i] = x[i];
    xb[i] = x[i];
  }
  for (Index i = 0; i < x.size(); ++i) {
    for (Index j = i + 1; j < x.size(); ++j) {
      Vector xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[i] += h; xpp[j] += h;
      xpm[i] += h; xpm[j] -= h;
      xmp[i] -= h; xmp[j] += h;
      xmm[i] -= h; xmm[j] -= h;
      const double v = (value(xpp) - value(xpm) - value(xmp) + value(xmm)) / (4.0 * h * h);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
}

double integrate(const Measure& m, const TestFunction& f) {
  double acc = 0.0;
  Vector x(m.dimension());
  for (Index i = 0; i < m.support_size(); ++i) {
    m.location_into(i, x);
    const double v = f.value(x);
    if (!std::isfinite(v)) {
      throw std::runtime_error("integrate: test function '" + f.id +
                               "' is not finite at support point " + format_point(x));
    }
    acc += m.weights()[i] * v;
  }
  return acc;
}

Vector evaluate_on_support(const Measure& m, const TestFunction& f) {
  Vector out(m.support_size());
  Vector x(m.dimension());
  for (Index i = 0; i < m.support_size(); ++i) {
    m.location_into(i, x);
    out[i] = f.value(x);
    if (!std::isfinite(out[i])) {
      throw std::runtime_error("evaluate_on_support: test function '" + f.id +
                               "' is not finite at support point " + format_point(x));
    }
  }
  return out;
}

double wasserstein1(const Measure& a, const Measure& b) {
  if (a.dimension() != b.dimension()) {
    throw std::invalid_argument("wasserstein1: dimension mismatch (" +
                                std::to_string(a.dimension()) + " vs " +
                                std::to_string(b.dimension()) + ")");
  }
  if (a.dimension() == 1) {
    return w1_sorted(sorted_support_1d(a), sorted_support_1d(b));
  }
  // Sliced approximation: average of 1d distances over fixed directions,
  // rescaled by pi/2 = 1 / E|cos(theta)| so Dirac pairs keep their distance.
  double acc = 0.0;
  for (int k = 0; k < kSlicedDirections; ++k) {
    const double theta = M_PI * static_cast<double>(k) / kSlicedDirections;
    const double cx = std::cos(theta), cy = std::sin(theta);
    acc += w1_sorted(projected_support(a, cx, cy), projected_support(b, cx, cy));
  }
  return acc * (M_PI / 2.0) / kSlicedDirections;
}

Measure normalize(const Measure& m) {
  // Construction normalizes; re-running through the factory revalidates.
  if (m.kind() == SupportKind::Atoms) return Measure::atoms(m.atom_locations(), m.weights());
  return Measure::grid(m.grid_spec(), m.weights());
}

std::string canonical_key(const Measure& m) {
  std::ostringstream os;
  if (m.kind() == SupportKind::Atoms) {
    // Sort atoms so the key is order-independent.
    std::vector<Index> order(static_cast<std::size_t>(m.support_size()));
    std::iota(order.begin(), order.end(), 0);
    const Matrix& locs = m.atom_locations();
    std::sort(order.begin(), order.end(), [&](Index i, Index j) {
      for (Index k = 0; k < locs.cols(); ++k) {
        if (locs(i, k) != locs(j, k)) return locs(i, k) < locs(j, k);
      }
      return false;
    });
    os << "a" << m.dimension() << "|";
    for (Index i : order) {
      for (Index k = 0; k < locs.cols(); ++k) os << format_double(locs(i, k)) << ",";
      os << format_double(m.weights()[i]) << ";";
    }
  } else {
    const GridSpec& g = m.grid_spec();
    os << "g" << m.dimension() << "|" << format_double(g.spacing) << "|";
    for (int k = 0; k < g.dimension; ++k) {
      os << format_double(g.origin[k]) << "," << g.cells[static_cast<std::size_t>(k)] << "|";
    }
    for (Index i = 0; i < m.weights().size(); ++i) os << format_double(m.weights()[i]) << ";";
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "m%016llx",
                static_cast<unsigned long long>(fnv1a(os.str())));
  return buf;
}

void save_measure_csv(const Measure& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_measure_csv: cannot open " + path);
  out << "# " << (m.kind() == SupportKind::Grid ? "grid" : "atoms") << ","
      << m.dimension() << "\n";
  if (m.kind() == SupportKind::Grid) {
    const GridSpec& g = m.grid_spec();
    out << "# spec";
    for (int k = 0; k < g.dimension; ++k) out << "," << format_double(g.origin[k]);
    out << "," << format_double(g.spacing);
    for (int k = 0; k < g.dimension; ++k) out << "," << g.cells[static_cast<std::size_t>(k)];
    out << "\n";
  }
  Vector x(m.dimension());
  for (Index i = 0; i < m.support_size(); ++i) {
    m.location_into(i, x);
    for (Index k = 0; k < x.size(); ++k) out << format_double(x[k]) << ",";
    out << format_double(m.weights()[i]) << "\n";
  }
  if (!out) throw std::runtime_error("save_measure_csv: write failed for " + path);
}

Measure load_measure_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_measure_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw std::runtime_error("load_measure_csv: missing `# kind,dimension` header in " + path);
  }
  std::string header = line.substr(2);
  const auto comma = header.find(',');
  if (comma == std::string::npos) {
    throw std::runtime_error("load_measure_csv: malformed header in " + path);
  }
  const std::string kind = header.substr(0, comma);
  const int dim = std::stoi(header.substr(comma + 1));
  if (dim < 1 || dim > 2) throw std::runtime_error("load_measure_csv: bad dimension in " + path);

  GridSpec spec;
  bool is_grid = (kind == "grid");
  if (is_grid) {
    if (!std::getline(in, line) || line.rfind("# spec,", 0) != 0) {
      throw std::runtime_error("load_measure_csv: missing grid spec line in " + path);
    }
    std::stringstream ss(line.substr(7));
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != static_cast<std::size_t>(2 * dim + 1)) {
      throw std::runtime_error("load_measure_csv: malformed grid spec in " + path);
    }
    spec.dimension = dim;
    spec.origin = Vector(dim);
    for (int k = 0; k < dim; ++k) spec.origin[k] = vals[static_cast<std::size_t>(k)];
    spec.spacing = vals[static_cast<std::size_t>(dim)];
    for (int k = 0; k < dim; ++k) {
      spec.cells[static_cast<std::size_t>(k)] =
          static_cast<Index>(std::llround(vals[static_cast<std::size_t>(dim + 1 + k)]));
    }
  } else if (kind != "atoms") {
    throw std::runtime_error("load_measure_csv: unknown kind '" + kind + "' in " + path);
  }

  std::vector<double> xs, ys, ws;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != static_cast<std::size_t>(dim + 1)) {
      throw std::runtime_error("load_measure_csv: malformed row in " + path);
    }
    xs.push_back(vals[0]);
    if (dim == 2) ys.push_back(vals[1]);
    ws.push_back(vals.back());
  }
  Vector w = Eigen::Map<Vector>(ws.data(), static_cast<Index>(ws.size()));
  if (is_grid) {
    if (w.size() != spec.cell_count()) {
      throw std::runtime_error("load_measure_csv: row count does not match grid in " + path);
    }
    return Measure::grid(spec, w);
  }
  Matrix locs(static_cast<Index>(xs.size()), dim);
  for (Index i = 0; i < locs.rows(); ++i) {
    locs(i, 0) = xs[static_cast<std::size_t>(i)];
    if (dim == 2) locs(i, 1) = ys[static_cast<std::size_t>(i)];
  }
  return Measure::atoms(locs, w);
}

Measure rasterize(const Measure& m, const GridSpec& spec) {
  if (m.dimension() != spec.dimension) {
    throw std::invalid_argument("rasterize: dimension mismatch");
  }
  if (m.kind() == SupportKind::Grid && m.grid_spec().matches(spec)) return m;
  Vector w = Vector::Zero(spec.cell_count());
  Vector x(m.dimension());
  // Cloud-in-cell: split each point linearly between the two bracketing cell
  // centers per axis; conserves the mean exactly.
  const auto nx = spec.cells[0];
  for (Index i = 0; i < m.support_size(); ++i) {
    m.location_into(i, x);
    double fx = (x[0] - spec.origin[0]) / spec.spacing - 0.5;
    Index ix0 = static_cast<Index>(std::floor(fx));
    double ax = fx - static_cast<double>(ix0);
    Index ix1 = ix0 + 1;
    ix0 = std::clamp<Index>(ix0, 0, nx - 1);
    ix1 = std::clamp<Index>(ix1, 0, nx - 1);
    if (spec.dimension == 1) {
      w[ix0] += m.weights()[i] * (1.0 - ax);
      w[ix1] += m.weights()[i] * ax;
    } else {
      const auto ny = spec.cells[1];
      double fy = (x[1] - spec.origin[1]) / spec.spacing - 0.5;
      Index iy0 = static_cast<Index>(std::floor(fy));
      double ay = fy - static_cast<double>(iy0);
      Index iy1 = iy0 + 1;
      iy0 = std::clamp<Index>(iy0, 0, ny - 1);
      iy1 = std::clamp<Index>(iy1, 0, ny - 1);
      w[ix0 + nx * iy0] += m.weights()[i] * (1.0 - ax) * (1.0 - ay);
      w[ix1 + nx * iy0] += m.weights()[i] * ax * (1.0 - ay);
      w[ix0 + nx * iy1] += m.weights()[i] * (1.0 - ax) * ay;
      w[ix1 + nx * iy1] += m.weights()[i] * ax * ay;
    }
  }
  return Measure::grid(spec, w);
}

}  // namespace fpkflow
