#include "mkv/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "call_syntax.hpp"
#include "mkv/error.hpp"
#include "mkv/parallel.hpp"

namespace mkv {

namespace {

constexpr double kWindow = 12.0;     // Gaussian support in standard deviations
constexpr double kResolved = 1.5;    // sd / dx above which point weights are exact enough
constexpr double kLeakTol = 1e-8;
constexpr double kQuadTol = 1e-11;

double gauss_pdf(double y, double m, double var) {
  const double z = y - m;
  return std::exp(-0.5 * z * z / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Probability that N(m, var) falls outside [lo, hi].
double tail_outside(double m, double var, double lo, double hi) {
  const double sd = std::sqrt(var);
  return normal_cdf((lo - m) / sd) + normal_cdf((m - hi) / sd);
}

struct Entry {
  const char* name;
  std::vector<std::pair<const char*, double>> params;
};

const std::vector<Entry>& test_registry() {
  static const std::vector<Entry> r{
      {"constant", {{"value", 0.0}}},
      {"linear", {{"slope", 1.0}, {"intercept", 0.0}}},
      {"quadratic", {{"a", 1.0}, {"center", 0.0}}},
      {"holder_power", {{"exponent", 0.5}, {"radius", 1.0}, {"center", 0.0}, {"scale", 1.0}}},
      {"gaussian_bump", {{"width", 1.0}, {"center", 0.0}, {"scale", 1.0}}},
  };
  return r;
}

bool same_axis(const GridAxis& a, const GridAxis& b) {
  return a.nodes == b.nodes && std::abs(a.min - b.min) <= 1e-12 * (1.0 + std::abs(a.min)) &&
         std::abs(a.max - b.max) <= 1e-12 * (1.0 + std::abs(a.max));
}

// Adaptive Gauss-Kronrod of g(y) N(y; m, var) over m +- 12 sd, split at cuts.
template <class G>
double integrate_against_gaussian(const G& g, double m, double var, std::vector<double> cuts) {
  const double sd = std::sqrt(var);
  const double a = m - kWindow * sd;
  const double b = m + kWindow * sd;
  std::vector<double> pts{a};
  std::sort(cuts.begin(), cuts.end());
  for (double c : cuts) {
    if (c > a && c < b && c - pts.back() > 1e-14 * sd) pts.push_back(c);
  }
  pts.push_back(b);
  auto integrand = [&](double y) { return g(y) * gauss_pdf(y, m, var); };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    total += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(integrand, pts[i],
                                                                            pts[i + 1], 12, kQuadTol);
  }
  return total;
}

}  // namespace

// ---------------------------------------------------------------------------
// Test functions

TestFunction TestFunction::make(const std::string& name, const std::map<std::string, double>& params) {
  const auto& reg = test_registry();
  const auto it = std::find_if(reg.begin(), reg.end(), [&](const Entry& e) { return name == e.name; });
  if (it == reg.end()) throw Error(Errc::InvalidArgument, "unknown test function '" + name + "'");
  TestFunction f;
  f.name = name;
  for (const auto& [k, v] : it->params) f.params[k] = v;
  for (const auto& [k, v] : params) {
    if (!f.params.count(k)) {
      throw Error(Errc::InvalidArgument, "unknown parameter '" + k + "' for " + name);
    }
    if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, "non-finite parameter '" + k + "'");
    f.params[k] = v;
  }
  const auto& p = f.params;
  if (name == "constant") {
    const double v = p.at("value");
    f.fn = [v](double) { return v; };
  } else if (name == "linear") {
    const double a = p.at("slope");
    const double b = p.at("intercept");
    f.fn = [a, b](double x) { return a * x + b; };
  } else if (name == "quadratic") {
    const double a = p.at("a");
    const double c = p.at("center");
    f.fn = [a, c](double x) { return a * (x - c) * (x - c); };
  } else if (name == "holder_power") {
    const double e = p.at("exponent");
    const double r = p.at("radius");
    const double c = p.at("center");
    const double sc = p.at("scale");
    if (!(e > 0.0)) throw Error(Errc::InvalidArgument, "holder_power needs exponent > 0");
    if (!(r > 0.0)) throw Error(Errc::InvalidArgument, "holder_power needs radius > 0");
    const double capv = std::pow(r, e);
    f.fn = [e, c, sc, capv](double x) { return sc * std::min(std::pow(std::abs(x - c), e), capv); };
    f.breakpoints = {c - r, c, c + r};
  } else {
    const double w = p.at("width");
    const double c = p.at("center");
    const double sc = p.at("scale");
    if (!(w > 0.0)) throw Error(Errc::InvalidArgument, "gaussian_bump needs width > 0");
    f.fn = [w, c, sc](double x) { return sc * std::exp(-0.5 * (x - c) * (x - c) / (w * w)); };
  }
  return f;
}

TestFunction TestFunction::parse(const std::string& expr) {
  const auto call = detail::parse_call(expr);
  return make(call.name, call.args);
}

std::string TestFunction::to_string() const {
  std::ostringstream os;
  os.precision(17);
  os << name << '(';
  bool first = true;
  for (const auto& [k, v] : params) {
    if (!first) os << ", ";
    os << k << '=' << v;
    first = false;
  }
  os << ')';
  return os.str();
}

// ---------------------------------------------------------------------------
// Fields

FieldOnGrid::FieldOnGrid(GridAxis axis, std::vector<double> values)
    : FieldOnGrid(axis, std::move(values), 0, axis.nodes == 0 ? 0 : axis.nodes - 1) {}

FieldOnGrid::FieldOnGrid(GridAxis axis, std::vector<double> values, std::size_t lo, std::size_t hi)
    : axis_(axis), values_(std::move(values)), lo_(lo), hi_(hi) {
  if (axis_.nodes < 4 || !(axis_.max > axis_.min)) {
    throw Error(Errc::InvalidArgument, "field grid needs at least 4 nodes on a proper interval");
  }
  if (values_.size() != axis_.nodes) {
    throw Error(Errc::GridMismatch, "field values do not match the grid");
  }
  if (lo_ > hi_ || hi_ >= axis_.nodes) {
    throw Error(Errc::InvalidArgument, "empty reliable band");
  }
}

FieldOnGrid FieldOnGrid::sample(const GridAxis& axis, const TestFunction& f) {
  std::vector<double> v(axis.nodes);
  for (std::size_t k = 0; k < axis.nodes; ++k) v[k] = f(axis.node(k));
  FieldOnGrid out(axis, std::move(v));
  out.exact_ = f;
  return out;
}

double FieldOnGrid::sup_norm() const noexcept {
  double s = 0.0;
  for (std::size_t k = lo_; k <= hi_; ++k) s = std::max(s, std::abs(values_[k]));
  return s;
}

double FieldOnGrid::interpolate(double y) const noexcept {
  if (exact_) return (*exact_)(y);
  const double dx = axis_.spacing();
  const double pos = std::clamp((y - axis_.min) / dx, 0.0, static_cast<double>(axis_.nodes - 1));
  // four-point Lagrange stencil k0..k0+3 around the cell
  const long n = static_cast<long>(axis_.nodes);
  long k0 = static_cast<long>(std::floor(pos)) - 1;
  k0 = std::clamp(k0, 0L, n - 4);
  const double u = pos - static_cast<double>(k0);
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    double l = 1.0;
    for (int j = 0; j < 4; ++j) {
      if (j != i) l *= (u - j) / static_cast<double>(i - j);
    }
    sum += l * values_[k0 + i];
  }
  return sum;
}

double gaussian_expectation(const FieldOnGrid& f, double m, double var) {
  if (!(var > 0.0)) return f.interpolate(m);
  if (f.exact()) {
    const auto& fn = *f.exact();
    return integrate_against_gaussian(fn, m, var, fn.breakpoints);
  }
  const GridAxis& ax = f.axis();
  const double dx = ax.spacing();
  const double sd = std::sqrt(var);
  const double lo_y = std::max(ax.min, m - kWindow * sd);
  const double hi_y = std::min(ax.max, m + kWindow * sd);
  if (lo_y >= hi_y) return f.interpolate(m);
  const auto k_lo = static_cast<std::size_t>(std::ceil((lo_y - ax.min) / dx - 1e-9));
  const auto k_hi = std::min<std::size_t>(
      static_cast<std::size_t>(std::floor((hi_y - ax.min) / dx + 1e-9)), ax.nodes - 1);
  if (sd >= kResolved * dx) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
      const double w = gauss_pdf(ax.node(k), m, var);
      num += w * f[k];
      den += w;
    }
    return den > 0.0 ? num / den : f.interpolate(m);
  }
  std::vector<double> cuts;
  for (std::size_t k = k_lo; k <= k_hi; ++k) cuts.push_back(ax.node(k));
  return integrate_against_gaussian([&f](double y) { return f.interpolate(y); }, m, var, cuts);
}

// ---------------------------------------------------------------------------
// Transition kernel

TransitionKernel::TransitionKernel(CoefficientSpec spec, MeasureFlow frozen, GridAxis grid, TimeGrid time)
    : spec_(std::move(spec)), frozen_(std::move(frozen)), grid_(grid), time_(time) {
  spec_.check();
  if (spec_.dim != 1) throw Error(Errc::DimensionMismatch, "transition kernels are one-dimensional");
  if (frozen_.dim() != 1) throw Error(Errc::DimensionMismatch, "frozen flow must be one-dimensional");
  if (grid_.nodes < 8 || !(grid_.max > grid_.min)) {
    throw Error(Errc::InvalidArgument, "kernel grid needs at least 8 nodes");
  }
  if (frozen_.size() > 1 && frozen_.horizon() + 1e-9 * time_.dt() < time_.node(time_.steps() - 1)) {
    throw Error(Errc::GridMismatch, "frozen flow ends before the kernel time grid");
  }
  frozen_atoms_.reserve(frozen_.size());
  for (const auto& m : frozen_.measures()) frozen_atoms_.push_back(to_empirical(m));
  exact_ = !spec_.depends_on_x();
  if (exact_) {
    const auto times = frozen_.times();
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (j > 0 && times[j] >= time_.horizon()) break;
      const auto [b, c] = coefficients(times[j], 0.0);
      piece_start_.push_back(times[j]);
      piece_b_.push_back(b);
      piece_c_.push_back(c);
    }
  } else {
    steps_.resize(time_.steps());
    row_mass_.assign(time_.steps(), 1.0);
  }
}

std::pair<double, double> TransitionKernel::coefficients(double t, double x) const {
  const auto& mu = frozen_atoms_[frozen_.index_at_or_before(t)];
  GeneratorCoefficients g(spec_, t, mu);
  double b = 0.0;
  double c = 0.0;
  const double xs[1] = {x};
  g.drift(xs, std::span<double>(&b, 1));
  g.cmatrix(xs, std::span<double>(&c, 1));
  return {b, c};
}

std::pair<double, double> TransitionKernel::gaussian_moments(double t, double s) const {
  if (!exact_) throw Error(Errc::InvalidArgument, "kernel is not an exact Gaussian");
  if (t > s) throw Error(Errc::ReversedTimes, "t must not exceed s");
  double shift = 0.0;
  double var = 0.0;
  for (std::size_t j = 0; j < piece_start_.size(); ++j) {
    const double a = std::max(t, piece_start_[j]);
    const double b = std::min(s, j + 1 < piece_start_.size() ? piece_start_[j + 1] : s);
    if (b > a) {
      shift += piece_b_[j] * (b - a);
      var += piece_c_[j] * (b - a);
    }
  }
  return {shift, var};
}

std::size_t TransitionKernel::step_index(double t) const {
  const double pos = t / time_.dt();
  const double k = std::round(pos);
  if (std::abs(pos - k) > 1e-9 || k < 0.0 || k > static_cast<double>(time_.steps())) {
    throw Error(Errc::GridMismatch, "time is not a node of the kernel time grid");
  }
  return static_cast<std::size_t>(k);
}

const std::vector<TransitionKernel::Row>& TransitionKernel::step(std::size_t k) const {
  auto& slot = steps_[k];
  if (slot) return *slot;
  const double t = time_.node(k);
  const double dt = time_.dt();
  const double dx = grid_.spacing();
  const std::size_t n = grid_.nodes;
  const auto& mu = frozen_atoms_[frozen_.index_at_or_before(t)];
  GeneratorCoefficients g(spec_, t, mu);
  std::vector<Row> rows(n);
  std::vector<double> mass(n, 1.0);
  std::vector<char> interior(n, 0);
  bool coarse = false;
  const long nl = static_cast<long>(n);
  const int threads = worker_count();
#pragma omp parallel for schedule(static) num_threads(threads)
  for (long i = 0; i < nl; ++i) {
    const double x = grid_.node(static_cast<std::size_t>(i));
    double b = 0.0;
    double c = 0.0;
    const double xs[1] = {x};
    g.drift(xs, std::span<double>(&b, 1));
    g.cmatrix(xs, std::span<double>(&c, 1));
    const double m = x + b * dt;
    const double var = c * dt;
    const double sd = std::sqrt(var);
    if (!(sd >= kResolved * dx)) {
#pragma omp atomic write
      coarse = true;
      continue;
    }
    const double lo_y = std::max(grid_.min, m - kWindow * sd);
    const double hi_y = std::min(grid_.max, m + kWindow * sd);
    Row r;
    if (lo_y >= hi_y) {
      // Gaussian entirely off the grid: keep the nearest boundary node
      r.first = m < grid_.min ? 0 : n - 1;
      r.w = {1.0};
      r.mass = 0.0;
      mass[i] = 0.0;
    } else {
      r.first = static_cast<std::size_t>(std::ceil((lo_y - grid_.min) / dx - 1e-9));
      const auto last = std::min<std::size_t>(
          static_cast<std::size_t>(std::floor((hi_y - grid_.min) / dx + 1e-9)), n - 1);
      r.w.resize(last - r.first + 1);
      double s = 0.0;
      for (std::size_t j = r.first; j <= last; ++j) {
        s += r.w[j - r.first] = grid_.weight(j) * gauss_pdf(grid_.node(j), m, var);
      }
      for (auto& w : r.w) w /= s;
      r.mass = s;
      mass[i] = s;
    }
    interior[i] = (m - 8.0 * sd > grid_.min && m + 8.0 * sd < grid_.max) ? 1 : 0;
    rows[i] = std::move(r);
  }
  if (coarse) {
    throw Error(Errc::GridMismatch,
                "Euler step variance is not resolved by the spatial grid; use fewer time steps");
  }
  double worst = 1.0;
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (interior[i]) {
      worst = any ? std::min(worst, mass[i]) : mass[i];
      any = true;
    }
  }
  row_mass_[k] = worst;
  slot = std::move(rows);
  return *slot;
}

double TransitionKernel::min_interior_row_mass() const {
  if (exact_) return 1.0;
  double worst = 1.0;
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    step(k);
    // closest to 1 from either side matters; report the worst deviation
    if (std::abs(row_mass_[k] - 1.0) > std::abs(worst - 1.0)) worst = row_mass_[k];
  }
  return worst;
}

std::vector<double> TransitionKernel::apply_backward(std::vector<double> v, double t, double s) const {
  if (t > s) throw Error(Errc::ReversedTimes, "t must not exceed s");
  if (v.size() != grid_.nodes) throw Error(Errc::GridMismatch, "field does not match the kernel grid");
  if (exact_) {
    const auto [shift, var] = gaussian_moments(t, s);
    if (var == 0.0 && shift == 0.0) return v;
    FieldOnGrid f(grid_, std::move(v));
    std::vector<double> out(grid_.nodes);
    const long n = static_cast<long>(grid_.nodes);
    const int threads = worker_count();
#pragma omp parallel for schedule(static) num_threads(threads)
    for (long i = 0; i < n; ++i) {
      out[i] = gaussian_expectation(f, grid_.node(static_cast<std::size_t>(i)) + shift, var);
    }
    return out;
  }
  const std::size_t a = step_index(t);
  const std::size_t b = step_index(s);
  std::vector<double> next(grid_.nodes);
  for (std::size_t k = b; k-- > a;) {
    const auto& rows = step(k);
    for (std::size_t i = 0; i < grid_.nodes; ++i) {
      const Row& r = rows[i];
      double acc = 0.0;
      for (std::size_t j = 0; j < r.w.size(); ++j) acc += r.w[j] * v[r.first + j];
      next[i] = acc;
    }
    v.swap(next);
  }
  return v;
}

std::vector<double> TransitionKernel::apply_forward(std::vector<double> rho, double t, double s) const {
  if (t > s) throw Error(Errc::ReversedTimes, "t must not exceed s");
  if (rho.size() != grid_.nodes) throw Error(Errc::GridMismatch, "density does not match the kernel grid");
  const std::size_t n = grid_.nodes;
  if (exact_) {
    const auto [shift, var] = gaussian_moments(t, s);
    if (var == 0.0) return rho;
    std::vector<double> out(n, 0.0);
    const long nl = static_cast<long>(n);
    const int threads = worker_count();
#pragma omp parallel for schedule(static) num_threads(threads)
    for (long m = 0; m < nl; ++m) {
      const double y = grid_.node(static_cast<std::size_t>(m));
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (rho[i] != 0.0) acc += grid_.weight(i) * rho[i] * gauss_pdf(y, grid_.node(i) + shift, var);
      }
      out[m] = acc;
    }
    return out;
  }
  const std::size_t a = step_index(t);
  const std::size_t b = step_index(s);
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = grid_.weight(i) * rho[i];
  std::vector<double> q(n);
  for (std::size_t k = a; k < b; ++k) {
    const auto& rows = step(k);
    std::fill(q.begin(), q.end(), 0.0);
    double leak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] == 0.0) continue;
      const Row& r = rows[i];
      leak += p[i] * std::max(0.0, 1.0 - r.mass);
      for (std::size_t j = 0; j < r.w.size(); ++j) q[r.first + j] += p[i] * r.w[j];
    }
    if (leak > kLeakTol) throw Error(Errc::OutOfDomain, "density mass leaves the spatial grid");
    p.swap(q);
  }
  for (std::size_t i = 0; i < n; ++i) p[i] /= grid_.weight(i);
  return p;
}

std::vector<double> TransitionKernel::density_from(std::size_t node, double t, double s) const {
  if (node >= grid_.nodes) throw Error(Errc::InvalidArgument, "node index out of range");
  if (t >= s) throw Error(Errc::ReversedTimes, "need t < s");
  if (exact_) {
    const auto [shift, var] = gaussian_moments(t, s);
    std::vector<double> out(grid_.nodes);
    for (std::size_t m = 0; m < grid_.nodes; ++m) {
      out[m] = gauss_pdf(grid_.node(m), grid_.node(node) + shift, var);
    }
    return out;
  }
  std::vector<double> rho(grid_.nodes, 0.0);
  rho[node] = 1.0 / grid_.weight(node);
  return apply_forward(std::move(rho), t, s);
}

// ---------------------------------------------------------------------------
// Operators

namespace {

void check_times(const TransitionKernel& k, double t, double s) {
  if (t > s) throw Error(Errc::ReversedTimes, "t must not exceed s");
  if (t < 0.0 || s > k.time().horizon() * (1.0 + 1e-12)) {
    throw Error(Errc::OutOfDomain, "times outside the kernel horizon");
  }
}

}  // namespace

GridDensity push_forward(const TransitionKernel& k, const EmpiricalMeasure& mu0, double s) {
  if (mu0.dim() != 1) throw Error(Errc::DimensionMismatch, "initial measure must be one-dimensional");
  check_times(k, 0.0, s);
  if (!(s > 0.0)) throw Error(Errc::InvalidArgument, "push_forward needs s > 0");
  const GridAxis& ax = k.grid();
  const std::size_t n = ax.nodes;
  std::vector<double> rho(n, 0.0);
  if (k.exact_gaussian()) {
    const auto [shift, var] = k.gaussian_moments(0.0, s);
    double leak = 0.0;
    for (std::size_t j = 0; j < mu0.size(); ++j) {
      const double m = mu0.point(j)[0] + shift;
      leak += mu0.weight(j) * tail_outside(m, var, ax.min, ax.max);
      for (std::size_t i = 0; i < n; ++i) rho[i] += mu0.weight(j) * gauss_pdf(ax.node(i), m, var);
    }
    if (leak > kLeakTol) {
      throw Error(Errc::OutOfDomain, "push-forward mass leaves the spatial grid");
    }
    return GridDensity({ax}, std::move(rho));
  }
  // first Euler step starts from the atoms themselves
  const double dt = k.time().dt();
  double leak = 0.0;
  for (std::size_t j = 0; j < mu0.size(); ++j) {
    const double x = mu0.point(j)[0];
    const auto [b, c] = k.coefficients(0.0, x);
    const double m = x + b * dt;
    const double var = c * dt;
    leak += mu0.weight(j) * tail_outside(m, var, ax.min, ax.max);
    double mass = 0.0;
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) mass += ax.weight(i) * (g[i] = gauss_pdf(ax.node(i), m, var));
    if (mass <= 0.0) throw Error(Errc::OutOfDomain, "initial atom outside the spatial grid");
    for (std::size_t i = 0; i < n; ++i) rho[i] += mu0.weight(j) * g[i] / mass;
  }
  if (leak > kLeakTol) throw Error(Errc::OutOfDomain, "push-forward mass leaves the spatial grid");
  const std::size_t last = k.step_index(s);
  if (last > 1) rho = k.apply_forward(std::move(rho), k.time().node(1), s);
  return GridDensity({ax}, std::move(rho));
}

FieldOnGrid pull_back(const TransitionKernel& k, const FieldOnGrid& f, double t, double s) {
  check_times(k, t, s);
  const GridAxis& ax = k.grid();
  if (!f.exact() && !same_axis(f.axis(), ax)) {
    throw Error(Errc::GridMismatch, "field grid differs from the kernel grid");
  }
  const std::size_t n = ax.nodes;
  const double dx = ax.spacing();
  if (t == s) {
    if (f.exact()) return FieldOnGrid::sample(ax, *f.exact());
    return f;
  }
  std::vector<double> out(n);
  double reach = 0.0;
  if (k.exact_gaussian()) {
    const auto [shift, var] = k.gaussian_moments(t, s);
    const long nl = static_cast<long>(n);
    const int threads = worker_count();
#pragma omp parallel for schedule(static) num_threads(threads)
    for (long i = 0; i < nl; ++i) {
      out[i] = gaussian_expectation(f, ax.node(static_cast<std::size_t>(i)) + shift, var);
    }
    reach = std::abs(shift) + 4.0 * std::sqrt(var);
  } else {
    std::vector<double> v = f.exact() ? FieldOnGrid::sample(ax, *f.exact()).values() : f.values();
    out = k.apply_backward(std::move(v), t, s);
    reach = k.spec().drift_bound() * (s - t) + 4.0 * std::sqrt(k.spec().cmatrix_bound() * (s - t));
  }
  if (f.exact() && k.exact_gaussian()) return FieldOnGrid(ax, std::move(out));
  const auto band = static_cast<std::size_t>(std::ceil(reach / dx));
  const std::size_t lo = f.lo() + band;
  const std::size_t hi = f.hi() >= band ? f.hi() - band : 0;
  if (f.exact()) {
    const std::size_t l2 = std::min(band, n - 1);
    const std::size_t h2 = n - 1 >= band ? n - 1 - band : 0;
    if (l2 > h2) throw Error(Errc::OutOfDomain, "spatial grid too small for the transition");
    return FieldOnGrid(ax, std::move(out), l2, h2);
  }
  if (lo > hi || hi >= n) throw Error(Errc::OutOfDomain, "spatial grid too small for the transition");
  return FieldOnGrid(ax, std::move(out), lo, hi);
}

FieldOnGrid finite_difference(const FieldOnGrid& g, int order) {
  if (order != 1 && order != 2) throw Error(Errc::InvalidArgument, "derivative order must be 1 or 2");
  const std::size_t lo = g.lo() + 2;
  if (g.hi() < lo + 2) throw Error(Errc::OutOfDomain, "reliable band too narrow for differences");
  const std::size_t hi = g.hi() - 2;
  const double dx = g.axis().spacing();
  const auto& v = g.values();
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t k = lo; k <= hi; ++k) {
    if (order == 1) {
      out[k] = (-v[k + 2] + 8.0 * v[k + 1] - 8.0 * v[k - 1] + v[k - 2]) / (12.0 * dx);
    } else {
      out[k] = (-v[k + 2] + 16.0 * v[k + 1] - 30.0 * v[k] + 16.0 * v[k - 1] - v[k - 2]) /
               (12.0 * dx * dx);
    }
  }
  return FieldOnGrid(g.axis(), std::move(out), lo, hi);
}

FieldOnGrid pull_back_derivative(const TransitionKernel& k, const FieldOnGrid& f, double t, double s,
                                 int order, std::size_t i, std::size_t j) {
  if (i != 0 || j != 0) throw Error(Errc::DimensionMismatch, "only the (0, 0) derivative exists in d = 1");
  return finite_difference(pull_back(k, f, t, s), order);
}

FieldOnGrid generator_apply_diff(const CoefficientSpec& spec_a, const CoefficientSpec& spec_b,
                                 const MeasureFlow& mu, const MeasureFlow& nu, const FieldOnGrid& g,
                                 double t) {
  if (spec_a.dim != 1 || spec_b.dim != 1 || mu.dim() != 1 || nu.dim() != 1) {
    throw Error(Errc::DimensionMismatch, "generator differences are one-dimensional");
  }
  if (t < 0.0) throw Error(Errc::GridMismatch, "negative time");
  for (const MeasureFlow* f : {&mu, &nu}) {
    if (f->size() > 1 && t > f->horizon() * (1.0 + 1e-12)) {
      throw Error(Errc::GridMismatch, "time beyond the frozen flow");
    }
  }
  const auto d1 = finite_difference(g, 1);
  const auto d2 = finite_difference(g, 2);
  const auto ma = to_empirical(mu.at(mu.index_at_or_before(t)));
  const auto mb = to_empirical(nu.at(nu.index_at_or_before(t)));
  GeneratorCoefficients ga(spec_a, t, ma);
  GeneratorCoefficients gb(spec_b, t, mb);
  std::vector<double> out(g.values().size(), 0.0);
  for (std::size_t k = d1.lo(); k <= d1.hi(); ++k) {
    const double xs[1] = {g.axis().node(k)};
    double ba = 0.0, bb = 0.0, ca = 0.0, cb = 0.0;
    ga.drift(xs, std::span<double>(&ba, 1));
    gb.drift(xs, std::span<double>(&bb, 1));
    ga.cmatrix(xs, std::span<double>(&ca, 1));
    gb.cmatrix(xs, std::span<double>(&cb, 1));
    out[k] = 0.5 * (ca - cb) * d2[k] + (ba - bb) * d1[k];
  }
  return FieldOnGrid(g.axis(), std::move(out), d1.lo(), d1.hi());
}

// ---------------------------------------------------------------------------
// Inversion identity

GridAxis inversion_axis(const CoefficientSpec& spec_a, const CoefficientSpec& spec_b,
                        const EmpiricalMeasure& mu0, double s, const InversionOptions& opt) {
  if (opt.nodes < 8) throw Error(Errc::InvalidArgument, "need at least 8 spatial nodes");
  double half = opt.half_width;
  if (half <= 0.0) {
    const double cmax = std::max(spec_a.cmatrix_bound(), spec_b.cmatrix_bound());
    const double bmax = std::max(spec_a.drift_bound(), spec_b.drift_bound());
    double radius = 0.0;
    for (std::size_t j = 0; j < mu0.size(); ++j) radius = std::max(radius, std::abs(mu0.point(j)[0]));
    half = std::max(8.0, 6.0 * std::sqrt(cmax * s)) + bmax * s + radius;
  }
  return GridAxis{-half, half, opt.nodes};
}

InversionReport verify_inversion(const CoefficientSpec& spec_a, const CoefficientSpec& spec_b,
                                 const MeasureFlow& mu, const MeasureFlow& nu,
                                 const EmpiricalMeasure& mu0, const TestFunction& f, double s,
                                 const InversionOptions& opt) {
  if (spec_a.dim != 1 || spec_b.dim != 1 || mu0.dim() != 1) {
    throw Error(Errc::DimensionMismatch, "the inversion check is one-dimensional");
  }
  if (!(s > 0.0)) throw Error(Errc::InvalidArgument, "s must be positive");
  if (opt.time_nodes < 2) throw Error(Errc::InvalidArgument, "need at least 2 time nodes");
  const GridAxis ax = inversion_axis(spec_a, spec_b, mu0, s, opt);
  const std::size_t m = opt.time_nodes;
  const TimeGrid tg(s, m);
  const TransitionKernel ka(spec_a, mu, ax, tg);
  const TransitionKernel kb(spec_b, nu, ax, tg);
  const bool exact = ka.exact_gaussian() && kb.exact_gaussian();
  const FieldOnGrid fs = FieldOnGrid::sample(ax, f);

  InversionReport rep;
  rep.nodes = ax.nodes;
  rep.time_nodes = m;
  rep.dx = ax.spacing();
  rep.domain_min = ax.min;
  rep.domain_max = ax.max;
  rep.s = s;
  rep.exact_gaussian = exact;

  // both push-forwards also check that the grid holds the mass
  const GridDensity ra = push_forward(ka, mu0, s);
  const GridDensity rb = push_forward(kb, mu0, s);
  if (exact) {
    const auto [sa, va] = ka.gaussian_moments(0.0, s);
    const auto [sb, vb] = kb.gaussian_moments(0.0, s);
    for (std::size_t j = 0; j < mu0.size(); ++j) {
      const double x = mu0.point(j)[0];
      rep.lhs += mu0.weight(j) *
                 (gaussian_expectation(fs, x + sa, va) - gaussian_expectation(fs, x + sb, vb));
    }
  } else {
    for (std::size_t i = 0; i < ax.nodes; ++i) {
      rep.lhs += ax.weight(i) * fs[i] * (ra.values()[i] - rb.values()[i]);
    }
  }

  // Integrand H(t) = int mu0(dx) P^mu_{0,t} (A^mu_t - A^nu_t) P^nu_{t,s} f (x)
  // sampled at u_j, j = 1..m, where t = s (1 - u^2) (graded) or t = s - u.
  std::vector<double> u(m + 1), vals(m + 1, 0.0);
  for (std::size_t j = 0; j <= m; ++j) {
    const double r = static_cast<double>(j) / static_cast<double>(m);
    u[j] = exact ? r : r * s;
  }
  auto time_of = [&](std::size_t j) {
    if (j == m) return 0.0;
    return exact ? s * (1.0 - u[j] * u[j]) : tg.node(m - j);
  };
  auto integrand = [&](std::size_t j) {
    const double t = time_of(j);
    const FieldOnGrid back = pull_back(kb, fs, t, s);
    const FieldOnGrid g = generator_apply_diff(spec_a, spec_b, mu, nu, back, t);
    double h = 0.0;
    if (exact) {
      const auto [sh, var] = ka.gaussian_moments(0.0, t);
      for (std::size_t a = 0; a < mu0.size(); ++a) {
        h += mu0.weight(a) * gaussian_expectation(g, mu0.point(a)[0] + sh, var);
      }
    } else {
      const FieldOnGrid pa = pull_back(ka, g, 0.0, t);
      for (std::size_t a = 0; a < mu0.size(); ++a) {
        h += mu0.weight(a) * pa.interpolate(mu0.point(a)[0]);
      }
    }
    // Jacobian of t = s (1 - u^2)
    return exact ? 2.0 * s * u[j] * h : h;
  };
  const long ml = static_cast<long>(m);
  const int threads = worker_count();
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long j = 1; j <= ml; ++j) {
    try {
      vals[j] = integrand(static_cast<std::size_t>(j));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  // first panel [0, u_1]: F ~ c u^gamma fitted through u_1, u_2
  double gamma = 1.0;
  if (vals[1] != 0.0 && vals[2] != 0.0 && (vals[1] > 0.0) == (vals[2] > 0.0)) {
    gamma = std::log(vals[2] / vals[1]) / std::log(u[2] / u[1]);
    gamma = std::clamp(gamma, -0.9, 3.0);
  }
  double total = vals[1] * u[1] / (gamma + 1.0);
  // composite Simpson on [u_1, u_m]; an odd panel count ends with the 3/8 rule
  const double h = u[2] - u[1];
  std::size_t panels = m - 1;
  std::size_t j = 1;
  if (panels == 1) {
    total += 0.5 * h * (vals[1] + vals[2]);
    panels = 0;
  } else if (panels % 2 == 1) {
    total += 3.0 * h / 8.0 * (vals[1] + 3.0 * vals[2] + 3.0 * vals[3] + vals[4]);
    j = 4;
    panels -= 3;
  }
  for (; panels > 0; panels -= 2, j += 2) total += h / 3.0 * (vals[j] + 4.0 * vals[j + 1] + vals[j + 2]);
  rep.rhs = total;
  rep.abs_gap = std::abs(rep.lhs - rep.rhs);
  const double scale = std::max(std::abs(rep.lhs), std::abs(rep.rhs));
  rep.rel_gap = scale > 0.0 ? rep.abs_gap / scale : 0.0;
  return rep;
}

}  // namespace mkv
