#include "mkv/measure.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <string>

#include "mkv/error.hpp"
#include "mkv/lp.hpp"
#include "mkv/parallel.hpp"

namespace mkv {

// ---------------------------------------------------------------------------
// EmpiricalMeasure

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> coords,
                                   std::vector<double> weights)
    : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)) {
  if (dim_ == 0) throw Error(Errc::DimensionMismatch, "dimension must be positive");
  if (weights_.empty()) throw Error(Errc::EmptySupport, "measure needs at least one atom");
  if (coords_.size() != weights_.size() * dim_) {
    throw Error(Errc::DimensionMismatch, "coordinate count does not match dim * atoms");
  }
  for (double c : coords_) {
    if (!std::isfinite(c)) throw Error(Errc::InvalidArgument, "non-finite atom coordinate");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(Errc::NegativeWeight, "weights must be finite and nonnegative");
    }
    total += w;
  }
  if (total <= 0.0) throw Error(Errc::EmptySupport, "weights sum to zero");
  for (double& w : weights_) w /= total;
}

EmpiricalMeasure EmpiricalMeasure::uniform(std::size_t dim, std::vector<double> coords) {
  const std::size_t n = dim == 0 ? 0 : coords.size() / dim;
  return EmpiricalMeasure(dim, std::move(coords), std::vector<double>(n, 1.0));
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> point) {
  return EmpiricalMeasure(point.size(), std::vector<double>(point.begin(), point.end()), {1.0});
}

std::vector<double> EmpiricalMeasure::mean() const {
  std::vector<double> m(dim_, 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t k = 0; k < dim_; ++k) m[k] += weights_[i] * coords_[i * dim_ + k];
  }
  return m;
}

EmpiricalMeasure make_empirical(const std::vector<std::vector<double>>& points,
                                const std::optional<std::vector<double>>& weights) {
  if (points.empty()) throw Error(Errc::EmptySupport, "no points given");
  const std::size_t dim = points.front().size();
  if (dim == 0) throw Error(Errc::DimensionMismatch, "points must have positive length");
  std::vector<double> coords;
  coords.reserve(points.size() * dim);
  for (const auto& p : points) {
    if (p.size() != dim) throw Error(Errc::DimensionMismatch, "points have inconsistent length");
    coords.insert(coords.end(), p.begin(), p.end());
  }
  std::vector<double> w = weights.value_or(std::vector<double>(points.size(), 1.0));
  if (w.size() != points.size()) {
    throw Error(Errc::DimensionMismatch, "weight count does not match point count");
  }
  return EmpiricalMeasure(dim, std::move(coords), std::move(w));
}

// ---------------------------------------------------------------------------
// GridDensity

double trapezoid_mass(const std::vector<GridAxis>& axes, std::span<const double> values) {
  if (axes.size() == 1) {
    double m = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) m += axes[0].weight(i) * values[i];
    return m;
  }
  const std::size_t ny = axes[1].nodes;
  double m = 0.0;
  for (std::size_t i = 0; i < axes[0].nodes; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < ny; ++j) row += axes[1].weight(j) * values[i * ny + j];
    m += axes[0].weight(i) * row;
  }
  return m;
}

GridDensity::GridDensity(std::vector<GridAxis> axes, std::vector<double> values)
    : axes_(std::move(axes)), values_(std::move(values)) {
  if (axes_.empty() || axes_.size() > 2) {
    throw Error(Errc::DimensionMismatch, "grid densities support dim 1 or 2");
  }
  std::size_t total = 1;
  for (const auto& ax : axes_) {
    if (ax.nodes < kMinNodes) {
      throw Error(Errc::InvalidArgument, "grid axis needs at least 8 nodes");
    }
    if (!(ax.max > ax.min) || !std::isfinite(ax.min) || !std::isfinite(ax.max)) {
      throw Error(Errc::InvalidArgument, "grid axis bounds must satisfy min < max");
    }
    total *= ax.nodes;
  }
  if (values_.size() != total) {
    throw Error(Errc::DimensionMismatch, "value count does not match grid size");
  }
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(Errc::NegativeWeight, "grid density values must be finite and nonnegative");
    }
  }
  const double m = trapezoid_mass(axes_, values_);
  if (!(m > 0.0)) throw Error(Errc::EmptySupport, "grid density has zero mass");
  for (double& v : values_) v /= m;
}

GridDensity GridDensity::from_function(
    std::vector<GridAxis> axes, const std::function<double(std::span<const double>)>& density) {
  std::size_t total = 1;
  for (const auto& ax : axes) total *= ax.nodes;
  std::vector<double> values(total);
  std::vector<double> x(axes.size());
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rest = flat;
    for (std::size_t k = axes.size(); k-- > 0;) {
      x[k] = axes[k].node(rest % axes[k].nodes);
      rest /= axes[k].nodes;
    }
    values[flat] = density(x);
  }
  return GridDensity(std::move(axes), std::move(values));
}

void GridDensity::node(std::size_t flat, std::span<double> out) const noexcept {
  for (std::size_t k = axes_.size(); k-- > 0;) {
    out[k] = axes_[k].node(flat % axes_[k].nodes);
    flat /= axes_[k].nodes;
  }
}

double GridDensity::cell_weight(std::size_t flat) const noexcept {
  double w = 1.0;
  for (std::size_t k = axes_.size(); k-- > 0;) {
    w *= axes_[k].weight(flat % axes_[k].nodes);
    flat /= axes_[k].nodes;
  }
  return w;
}

double GridDensity::mass() const noexcept { return trapezoid_mass(axes_, values_); }

EmpiricalMeasure grid_to_measure(const GridDensity& g) {
  const std::size_t d = g.dim();
  std::vector<double> coords(g.size() * d);
  std::vector<double> weights(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.node(i, std::span<double>(coords.data() + i * d, d));
    weights[i] = g.values()[i] * g.cell_weight(i);
  }
  return EmpiricalMeasure(d, std::move(coords), std::move(weights));
}

MeasureKind kind_of(const Measure& m) noexcept {
  return std::holds_alternative<EmpiricalMeasure>(m) ? MeasureKind::empirical : MeasureKind::grid;
}

std::size_t dim_of(const Measure& m) noexcept {
  return std::visit([](const auto& x) { return x.dim(); }, m);
}

EmpiricalMeasure to_empirical(const Measure& m) {
  if (const auto* e = std::get_if<EmpiricalMeasure>(&m)) return *e;
  return grid_to_measure(std::get<GridDensity>(m));
}

// ---------------------------------------------------------------------------
// MeasureFlow

MeasureFlow::MeasureFlow(std::vector<double> times, std::vector<Measure> measures)
    : times_(std::move(times)), measures_(std::move(measures)) {
  if (times_.empty()) throw Error(Errc::EmptySupport, "flow needs at least one time node");
  if (times_.size() != measures_.size()) {
    throw Error(Errc::GridMismatch, "flow needs one measure per time node");
  }
  if (times_.front() != 0.0) throw Error(Errc::GridMismatch, "flow times must start at 0");
  for (std::size_t k = 1; k < times_.size(); ++k) {
    if (!(times_[k] > times_[k - 1])) {
      throw Error(Errc::GridMismatch, "flow times must increase strictly");
    }
  }
  const MeasureKind kind = kind_of(measures_.front());
  const std::size_t dim = dim_of(measures_.front());
  for (const auto& m : measures_) {
    if (kind_of(m) != kind) throw Error(Errc::GridMismatch, "flow mixes measure kinds");
    if (dim_of(m) != dim) throw Error(Errc::DimensionMismatch, "flow mixes dimensions");
  }
}

MeasureFlow MeasureFlow::constant(std::vector<double> times, const Measure& m) {
  std::vector<Measure> ms(times.size(), m);
  return MeasureFlow(std::move(times), std::move(ms));
}

std::size_t MeasureFlow::index_at_or_before(double t) const noexcept {
  const double tol = 1e-12 * std::max(1.0, horizon());
  auto it = std::upper_bound(times_.begin(), times_.end(), t + tol);
  if (it == times_.begin()) return 0;
  return static_cast<std::size_t>(std::distance(times_.begin(), it)) - 1;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

void check_metric_args(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double alpha) {
  if (mu.dim() != nu.dim()) throw Error(Errc::DimensionMismatch, "measures differ in dimension");
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error(Errc::InvalidAlpha, "alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
}

/// Positive and negative parts of mu - nu on the merged union support.
struct SignedSupport {
  std::size_t dim = 0;
  std::vector<double> pos_coords;
  std::vector<double> pos_mass;
  std::vector<double> neg_coords;
  std::vector<double> neg_mass;
};

SignedSupport signed_difference(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  const std::size_t d = mu.dim();
  struct Entry {
    const double* x;
    double w;
  };
  std::vector<Entry> entries;
  entries.reserve(mu.size() + nu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) entries.push_back({mu.point(i).data(), mu.weight(i)});
  for (std::size_t i = 0; i < nu.size(); ++i) entries.push_back({nu.point(i).data(), -nu.weight(i)});
  auto less = [d](const Entry& a, const Entry& b) {
    return std::lexicographical_compare(a.x, a.x + d, b.x, b.x + d);
  };
  auto same = [d](const Entry& a, const Entry& b) { return std::equal(a.x, a.x + d, b.x); };
  std::stable_sort(entries.begin(), entries.end(), less);

  SignedSupport out;
  out.dim = d;
  for (std::size_t i = 0; i < entries.size();) {
    std::size_t j = i;
    double g = 0.0;
    while (j < entries.size() && same(entries[i], entries[j])) g += entries[j++].w;
    if (g > 0.0) {
      out.pos_coords.insert(out.pos_coords.end(), entries[i].x, entries[i].x + d);
      out.pos_mass.push_back(g);
    } else if (g < 0.0) {
      out.neg_coords.insert(out.neg_coords.end(), entries[i].x, entries[i].x + d);
      out.neg_mass.push_back(-g);
    }
    i = j;
  }
  return out;
}

double holder_distance(const double* x, const double* y, std::size_t d, double alpha) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
  const double r = std::sqrt(s);
  return alpha == 1.0 ? r : std::pow(r, alpha);
}

std::vector<double> cross_distances(const SignedSupport& s, double alpha) {
  const std::size_t m = s.pos_mass.size();
  const std::size_t n = s.neg_mass.size();
  std::vector<double> dist(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      dist[i * n + j] =
          holder_distance(&s.pos_coords[i * s.dim], &s.neg_coords[j * s.dim], s.dim, alpha);
    }
  }
  return dist;
}

double bl_dense_lp(const SignedSupport& s, double alpha) {
  const std::size_t d = s.dim;
  std::vector<const double*> pts;
  std::vector<double> g;
  for (std::size_t i = 0; i < s.pos_mass.size(); ++i) {
    pts.push_back(&s.pos_coords[i * d]);
    g.push_back(s.pos_mass[i]);
  }
  for (std::size_t i = 0; i < s.neg_mass.size(); ++i) {
    pts.push_back(&s.neg_coords[i * d]);
    g.push_back(-s.neg_mass[i]);
  }
  const std::size_t n = g.size();
  // Columns: f_i^+ (n), f_i^- (n), a, b.
  const std::size_t cols = 2 * n + 2;
  const std::size_t ia = 2 * n;
  const std::size_t ib = 2 * n + 1;
  std::vector<double> c(cols, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = g[i];
    c[n + i] = -g[i];
  }
  std::vector<double> a;
  std::vector<double> rhs;
  auto add_row = [&](auto&& fill, double bound) {
    const std::size_t r = rhs.size();
    a.resize((r + 1) * cols, 0.0);
    fill(std::span<double>(a.data() + r * cols, cols));
    rhs.push_back(bound);
  };
  for (std::size_t i = 0; i < n; ++i) {
    add_row([&](std::span<double> row) { row[i] = 1; row[n + i] = -1; row[ia] = -1; }, 0.0);
    add_row([&](std::span<double> row) { row[i] = -1; row[n + i] = 1; row[ia] = -1; }, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dij = holder_distance(pts[i], pts[j], d, alpha);
      add_row(
          [&](std::span<double> row) {
            row[i] = 1;
            row[n + i] = -1;
            row[j] = -1;
            row[n + j] = 1;
            row[ib] = -dij;
          },
          0.0);
    }
  }
  add_row([&](std::span<double> row) { row[ia] = 1; row[ib] = 1; }, 1.0);
  return lp::maximize_packing(c, a, rhs).objective;
}

struct Line {
  double intercept;
  double slope;
  double operator()(double a) const noexcept { return intercept + slope * a; }
};

/// Maximizer on [0, 1] of the lower envelope of `lines`.
std::pair<double, double> envelope_peak(const std::vector<Line>& lines) {
  auto envelope = [&](double a) {
    double v = lines.front()(a);
    for (const auto& l : lines) v = std::min(v, l(a));
    return v;
  };
  double best_a = 0.0;
  double best_v = envelope(0.0);
  auto consider = [&](double a) {
    if (!(a >= 0.0 && a <= 1.0)) return;
    const double v = envelope(a);
    if (v > best_v) {
      best_v = v;
      best_a = a;
    }
  };
  consider(1.0);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      const double ds = lines[i].slope - lines[j].slope;
      if (ds == 0.0) continue;
      consider((lines[j].intercept - lines[i].intercept) / ds);
    }
  }
  return {best_a, best_v};
}

double bl_parametric(const SignedSupport& s, double alpha) {
  const std::size_t m = s.pos_mass.size();
  const std::size_t n = s.neg_mass.size();
  const std::vector<double> dist = cross_distances(s, alpha);
  const double pos_total = std::accumulate(s.pos_mass.begin(), s.pos_mass.end(), 0.0);

  lp::TransportSimplex transport(s.pos_mass, s.neg_mass);
  const double w = transport.solve(dist);
  // Every flow gives an upper line on the value: routing all mass through
  // the "destroy and recreate" hub costs 2a per unit, direct transport
  // costs (1 - a) d.
  std::vector<Line> lines{{0.0, 2.0 * pos_total}, {w, -w}};
  double best = 0.0;
  std::vector<double> cost(m * n);
  constexpr int kMaxCuts = 500;
  for (int iter = 0; iter < kMaxCuts; ++iter) {
    const auto [a, upper] = envelope_peak(lines);
    const double b = 1.0 - a;
    for (std::size_t k = 0; k < cost.size(); ++k) cost[k] = std::min(b * dist[k], 2.0 * a);
    const double value = transport.solve(cost);
    best = std::max(best, value);
    if (upper - value <= 1e-13 * std::max(1.0, upper)) break;
    double direct = 0.0;
    double hub = 0.0;
    for (const auto& cell : transport.basis()) {
      const double dk = dist[cell.row * n + cell.col];
      if (b * dk <= 2.0 * a) {
        direct += cell.flow * dk;
      } else {
        hub += 2.0 * cell.flow;
      }
    }
    lines.push_back({direct, hub - direct});
  }
  return std::clamp(best, 0.0, 2.0);
}

constexpr std::size_t kDenseLpMaxSupport = 12;

}  // namespace

double metric_bl_alpha(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double alpha,
                       BlMethod method) {
  check_metric_args(mu, nu, alpha);
  const SignedSupport s = signed_difference(mu, nu);
  if (s.pos_mass.empty() || s.neg_mass.empty()) return 0.0;
  const std::size_t support = s.pos_mass.size() + s.neg_mass.size();
  if (method == BlMethod::automatic) {
    method = support <= kDenseLpMaxSupport ? BlMethod::dense_lp : BlMethod::parametric_transport;
  }
  const double v = method == BlMethod::dense_lp ? bl_dense_lp(s, alpha) : bl_parametric(s, alpha);
  return std::clamp(v, 0.0, 2.0);
}

double metric_w_alpha(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double alpha) {
  check_metric_args(mu, nu, alpha);
  const SignedSupport s = signed_difference(mu, nu);
  if (s.pos_mass.empty() || s.neg_mass.empty()) return 0.0;
  lp::TransportSimplex transport(s.pos_mass, s.neg_mass);
  return std::max(0.0, transport.solve(cross_distances(s, alpha)));
}

// Upper bound for both metrics from the 1-d signed difference g = mu - nu:
// int f dg <= sup|f| |g| and <= [f]_alpha W_alpha(g+, g-), where
// W_alpha(g+, g-) <= m^{1 - alpha} W_1(g+, g-)^alpha with m = |g| / 2 and
// W_1 the integral of |G| for the distribution function G of g.
static double distance_upper_bound_1d(const Measure& mu, const Measure& nu, double alpha, MetricKind kind) {
  const EmpiricalMeasure a = to_empirical(mu);
  const EmpiricalMeasure b = to_empirical(nu);
  std::vector<std::pair<double, double>> pts;
  pts.reserve(a.size() + b.size());
  for (std::size_t j = 0; j < a.size(); ++j) pts.emplace_back(a.point(j)[0], a.weight(j));
  for (std::size_t j = 0; j < b.size(); ++j) pts.emplace_back(b.point(j)[0], -b.weight(j));
  std::sort(pts.begin(), pts.end());
  double total = 0.0;
  double w1 = 0.0;
  double cdf = 0.0;
  for (std::size_t i = 0; i < pts.size();) {
    double g = 0.0;
    const double x = pts[i].first;
    while (i < pts.size() && pts[i].first == x) g += pts[i++].second;
    total += std::abs(g);
    cdf += g;
    if (i < pts.size()) w1 += std::abs(cdf) * (pts[i].first - x);
  }
  const double half = 0.5 * total;
  if (!(half > 0.0)) return 0.0;
  const double wa = half * std::pow(w1 / half, alpha);
  const double u = kind == MetricKind::bounded_lipschitz ? total * wa / (total + wa) : wa;
  // slack for rounding in the exact solvers
  return u * (1.0 + 1e-9) + 1e-14;
}

static bool same_measure(const Measure& a, const Measure& b) {
  if (a.index() != b.index()) return false;
  if (const auto* ga = std::get_if<GridDensity>(&a)) {
    const auto& gb = std::get<GridDensity>(b);
    return ga->axes() == gb.axes() && std::equal(ga->values().begin(), ga->values().end(),
                                                 gb.values().begin(), gb.values().end());
  }
  const auto& ea = std::get<EmpiricalMeasure>(a);
  const auto& eb = std::get<EmpiricalMeasure>(b);
  return ea.dim() == eb.dim() &&
         std::equal(ea.coords().begin(), ea.coords().end(), eb.coords().begin(), eb.coords().end()) &&
         std::equal(ea.weights().begin(), ea.weights().end(), eb.weights().begin(), eb.weights().end());
}

double measure_distance(const Measure& mu, const Measure& nu, double alpha, MetricKind kind) {
  const EmpiricalMeasure a = to_empirical(mu);
  const EmpiricalMeasure b = to_empirical(nu);
  return kind == MetricKind::bounded_lipschitz ? metric_bl_alpha(a, b, alpha)
                                               : metric_w_alpha(a, b, alpha);
}

double flow_distance(const MeasureFlow& a, const MeasureFlow& b, double alpha, MetricKind kind) {
  if (a.size() != b.size()) throw Error(Errc::GridMismatch, "flows have different time grids");
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (std::abs(a.times()[k] - b.times()[k]) > 1e-12 * std::max(1.0, a.horizon())) {
      throw Error(Errc::GridMismatch, "flows have different time grids");
    }
  }
  if (a.kind() != b.kind()) throw Error(Errc::GridMismatch, "flows hold different measure kinds");
  if (a.dim() != b.dim()) throw Error(Errc::DimensionMismatch, "flows differ in dimension");

  // Exact max over nodes. In d = 1 the nodes are visited in decreasing order
  // of a cheap upper bound and the scan stops once no bound can beat the max.
  const std::size_t n = a.size();
  std::vector<double> bound(n, std::numeric_limits<double>::infinity());
  if (a.dim() == 1) {
    for (std::size_t k = 0; k < n; ++k) bound[k] = distance_upper_bound_1d(a.at(k), b.at(k), alpha, kind);
  }
  // a node repeating the previous pair adds nothing to the max
  for (std::size_t k = 1; k < n; ++k) {
    if (same_measure(a.at(k), a.at(k - 1)) && same_measure(b.at(k), b.at(k - 1))) bound[k] = -1.0;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return bound[i] > bound[j]; });

  const int threads = worker_count();
  const std::size_t batch = static_cast<std::size_t>(threads);
  double best = 0.0;
  for (std::size_t start = 0; start < n; start += batch) {
    if (bound[order[start]] <= best) break;
    const std::size_t stop = std::min(n, start + batch);
    std::vector<double> got(stop - start, 0.0);
    bool failed = false;
    std::string failure;
    const long m = static_cast<long>(stop - start);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (long i = 0; i < m; ++i) {
      const std::size_t k = order[start + static_cast<std::size_t>(i)];
      try {
        got[i] = measure_distance(a.at(k), b.at(k), alpha, kind);
      } catch (const std::exception& e) {
#pragma omp critical
        {
          failed = true;
          failure = e.what();
        }
      }
    }
    if (failed) throw Error(Errc::Numerical, "flow distance failed: " + failure);
    for (double v : got) best = std::max(best, v);
  }
  return best;
}

}  // namespace mkv
