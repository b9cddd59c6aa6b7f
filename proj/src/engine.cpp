#include "mkv/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <string>

#include "mkv/error.hpp"
#include "mkv/parallel.hpp"
#include "mkv/rng.hpp"

namespace mkv {

TimeGrid::TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw Error(Errc::InvalidArgument, "time horizon must be positive");
  }
  if (steps == 0) throw Error(Errc::InvalidArgument, "time grid needs at least one step");
}

std::vector<double> TimeGrid::nodes() const {
  std::vector<double> t(steps_ + 1);
  for (std::size_t k = 0; k <= steps_; ++k) t[k] = node(k);
  return t;
}

namespace {

constexpr double kMaxLeak = 1e-8;
constexpr double kMaxMassDefect = 1e-4;

// Frozen-flow measures as empirical measures, converted on first use.
class FrozenLookup {
 public:
  FrozenLookup(const MeasureFlow& flow, const CoefficientSpec& spec, const TimeGrid& grid)
      : flow_(flow), cache_(flow.size()) {
    if (flow.dim() != spec.dim) {
      throw Error(Errc::DimensionMismatch, "frozen flow dimension differs from coefficients");
    }
    const double last_used = grid.node(grid.steps() - 1);
    if (flow.size() > 1 && flow.horizon() + 1e-9 * grid.dt() < last_used) {
      throw Error(Errc::GridMismatch, "frozen flow ends before the simulation grid");
    }
  }

  const EmpiricalMeasure& at(double t) {
    const std::size_t j = flow_.index_at_or_before(t);
    if (!cache_[j]) cache_[j] = to_empirical(flow_.at(j));
    return *cache_[j];
  }

 private:
  const MeasureFlow& flow_;
  std::vector<std::optional<EmpiricalMeasure>> cache_;
};

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

// ---------------------------------------------------------------------------
// Particles

SimulationOutput simulate_particles(const CoefficientSpec& spec, const MeasureFlow& frozen,
                                    const EmpiricalMeasure& init, const TimeGrid& grid,
                                    std::size_t n_particles, std::uint64_t seed) {
  spec.check();
  if (n_particles == 0) throw Error(Errc::InvalidArgument, "need at least one particle");
  if (init.dim() != spec.dim) {
    throw Error(Errc::DimensionMismatch, "initial law dimension differs from coefficients");
  }
  validate_spec(spec, 100);  // throws DegenerateDiffusion
  FrozenLookup lookup(frozen, spec, grid);

  const std::size_t d = spec.dim;
  const long n = static_cast<long>(n_particles);
  std::vector<double> cdf(init.size());
  {
    double acc = 0.0;
    for (std::size_t j = 0; j < init.size(); ++j) cdf[j] = (acc += init.weight(j));
    cdf.back() = 1.0;
  }
  std::vector<double> pos(n_particles * d);
  const int threads = worker_count();
#pragma omp parallel for schedule(static) num_threads(threads)
  for (long i = 0; i < n; ++i) {
    CounterStream s(seed, static_cast<std::uint64_t>(i), 0, StreamTag::initial);
    const double u = s.uniform();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t atom = std::min<std::size_t>(it - cdf.begin(), init.size() - 1);
    const auto p = init.point(atom);
    std::copy(p.begin(), p.end(), pos.begin() + i * static_cast<long>(d));
  }

  std::vector<Measure> marginals;
  marginals.reserve(grid.steps() + 1);
  marginals.emplace_back(EmpiricalMeasure::uniform(d, pos));
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  bool finite = true;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const double t = grid.node(k);
    const EmpiricalMeasure& mu = lookup.at(t);
    const GeneratorCoefficients g(spec, t, mu);
#pragma omp parallel for schedule(static) num_threads(threads) reduction(&& : finite)
    for (long i = 0; i < n; ++i) {
      double buf[2 * 4 + 16];
      std::vector<double> heap;
      double* x = pos.data() + i * static_cast<long>(d);
      double* b = buf;
      double* z = buf + 4;
      double* sig = buf + 8;
      if (d > 4) {
        heap.resize(2 * d + d * d);
        b = heap.data();
        z = b + d;
        sig = z + d;
      }
      const std::span<const double> xs(x, d);
      g.drift(xs, std::span<double>(b, d));
      g.diffusion(xs, std::span<double>(sig, d * d));
      CounterStream s(seed, static_cast<std::uint64_t>(i), static_cast<std::uint32_t>(k),
                      StreamTag::increment);
      for (std::size_t c = 0; c < d; ++c) z[c] = s.normal();
      for (std::size_t r = 0; r < d; ++r) {
        double noise = 0.0;
        for (std::size_t c = 0; c < d; ++c) noise += sig[r * d + c] * z[c];
        x[r] += b[r] * dt + noise * sqdt;
      }
      for (std::size_t r = 0; r < d; ++r) finite = finite && std::isfinite(x[r]);
    }
    if (!finite) throw Error(Errc::Numerical, "particle left the finite range");
    marginals.emplace_back(EmpiricalMeasure::uniform(d, pos));
  }
  return SimulationOutput{MeasureFlow(grid.nodes(), std::move(marginals)), EngineKind::particle,
                          seed, {}};
}

// ---------------------------------------------------------------------------
// Density

namespace {

struct Source1 {
  double mean;
  double inv2var;
  double coef;
};

std::vector<double> density_step_1d(const GridDensity& rho, const GeneratorCoefficients& g,
                                    double dt, double& leak) {
  const GridAxis& ax = rho.axes()[0];
  const std::size_t n = ax.nodes;
  std::vector<Source1> src;
  src.reserve(n);
  leak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double mass = rho.values()[i] * ax.weight(i);
    if (mass == 0.0) continue;
    const double x = ax.node(i);
    double b;
    double c;
    g.drift(std::span<const double>(&x, 1), std::span<double>(&b, 1));
    g.cmatrix(std::span<const double>(&x, 1), std::span<double>(&c, 1));
    if (!(c > 0.0)) {
      throw Error(Errc::DegenerateDiffusion, "diffusion vanishes at x = " + std::to_string(x));
    }
    const double var = c * dt;
    const double sd = std::sqrt(var);
    const double m = x + b * dt;
    leak += mass * (normal_cdf((ax.min - m) / sd) + normal_cdf((m - ax.max) / sd));
    src.push_back({m, 0.5 / var, mass / std::sqrt(2.0 * std::numbers::pi * var)});
  }
  std::vector<double> out(n, 0.0);
  const long nn = static_cast<long>(n);
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (long j = 0; j < nn; ++j) {
    const double y = ax.node(static_cast<std::size_t>(j));
    double acc = 0.0;
    for (const auto& s : src) {
      const double e = (y - s.mean) * (y - s.mean) * s.inv2var;
      if (e < 80.0) acc += s.coef * std::exp(-e);
    }
    out[j] = acc;
  }
  return out;
}

struct Source2 {
  double m0, m1;
  double p00, p01, p11;  // half the precision matrix
  double coef;
};

std::vector<double> density_step_2d(const GridDensity& rho, const GeneratorCoefficients& g,
                                    double dt, double& leak) {
  const GridAxis& a0 = rho.axes()[0];
  const GridAxis& a1 = rho.axes()[1];
  std::vector<Source2> src;
  leak = 0.0;
  double x[2];
  double b[2];
  double c[4];
  for (std::size_t f = 0; f < rho.size(); ++f) {
    const double mass = rho.values()[f] * rho.cell_weight(f);
    if (mass == 0.0) continue;
    rho.node(f, x);
    g.drift(x, b);
    g.cmatrix(x, c);
    const double v00 = c[0] * dt, v01 = c[1] * dt, v11 = c[3] * dt;
    const double det = v00 * v11 - v01 * v01;
    if (!(det > 0.0)) {
      throw Error(Errc::DegenerateDiffusion, "diffusion matrix is singular on the grid");
    }
    const double m0 = x[0] + b[0] * dt;
    const double m1 = x[1] + b[1] * dt;
    const double s0 = std::sqrt(v00), s1 = std::sqrt(v11);
    leak += mass * (normal_cdf((a0.min - m0) / s0) + normal_cdf((m0 - a0.max) / s0) +
                    normal_cdf((a1.min - m1) / s1) + normal_cdf((m1 - a1.max) / s1));
    src.push_back({m0, m1, 0.5 * v11 / det, -0.5 * v01 / det, 0.5 * v00 / det,
                   mass / (2.0 * std::numbers::pi * std::sqrt(det))});
  }
  std::vector<double> out(rho.size(), 0.0);
  const long nn = static_cast<long>(rho.size());
  const std::size_t n1 = a1.nodes;
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (long f = 0; f < nn; ++f) {
    const double y0 = a0.node(static_cast<std::size_t>(f) / n1);
    const double y1 = a1.node(static_cast<std::size_t>(f) % n1);
    double acc = 0.0;
    for (const auto& s : src) {
      const double d0 = y0 - s.m0, d1 = y1 - s.m1;
      const double e = s.p00 * d0 * d0 + 2.0 * s.p01 * d0 * d1 + s.p11 * d1 * d1;
      if (e < 80.0) acc += s.coef * std::exp(-e);
    }
    out[f] = acc;
  }
  return out;
}

}  // namespace

SimulationOutput propagate_density(const CoefficientSpec& spec, const MeasureFlow& frozen,
                                   const GridDensity& init, const TimeGrid& grid) {
  spec.check();
  if (init.dim() != spec.dim) {
    throw Error(Errc::DimensionMismatch, "initial density dimension differs from coefficients");
  }
  if (spec.dim > 2) throw Error(Errc::DimensionMismatch, "density engine supports d <= 2");
  FrozenLookup lookup(frozen, spec, grid);

  std::vector<Measure> marginals;
  marginals.reserve(grid.steps() + 1);
  marginals.emplace_back(init);
  std::vector<double> step_mass;
  step_mass.reserve(grid.steps());
  const double dt = grid.dt();
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const double t = grid.node(k);
    const GeneratorCoefficients g(spec, t, lookup.at(t));
    const GridDensity& rho = std::get<GridDensity>(marginals.back());
    double leak = 0.0;
    std::vector<double> next =
        spec.dim == 1 ? density_step_1d(rho, g, dt, leak) : density_step_2d(rho, g, dt, leak);
    if (leak > kMaxLeak) {
      throw Error(Errc::OutOfDomain, "Gaussian step at t = " + std::to_string(t) +
                                         " leaves the grid with mass " + std::to_string(leak));
    }
    const double mass = trapezoid_mass(rho.axes(), next);
    step_mass.push_back(mass);
    if (!(std::abs(1.0 - mass) <= kMaxMassDefect)) {
      throw Error(Errc::MassLeak, "step at t = " + std::to_string(t) + " has mass " +
                                      std::to_string(mass) + " before renormalization");
    }
    marginals.emplace_back(GridDensity(rho.axes(), std::move(next)));
  }
  return SimulationOutput{MeasureFlow(grid.nodes(), std::move(marginals)), EngineKind::density,
                          std::nullopt, std::move(step_mass)};
}

MeasureFlow extract_marginal_flow(const SimulationOutput& out) { return out.flow; }

void write_marginals_csv(std::ostream& os, const MeasureFlow& flow) {
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  const std::size_t d = flow.dim();
  if (flow.kind() == MeasureKind::grid) {
    os << "t";
    if (d == 1) {
      os << ",x";
    } else {
      for (std::size_t c = 0; c < d; ++c) os << ",x" << c + 1;
    }
    os << ",density\n";
    std::vector<double> x(d);
    for (std::size_t k = 0; k < flow.size(); ++k) {
      const auto& g = std::get<GridDensity>(flow.at(k));
      for (std::size_t f = 0; f < g.size(); ++f) {
        g.node(f, x);
        put(flow.times()[k]);
        for (double v : x) {
          os << ',';
          put(v);
        }
        os << ',';
        put(g.values()[f]);
        os << '\n';
      }
    }
    return;
  }
  os << "t,particle_id";
  for (std::size_t c = 0; c < d; ++c) os << ",x" << c + 1;
  os << '\n';
  for (std::size_t k = 0; k < flow.size(); ++k) {
    const auto& m = std::get<EmpiricalMeasure>(flow.at(k));
    for (std::size_t i = 0; i < m.size(); ++i) {
      put(flow.times()[k]);
      os << ',' << i;
      for (double v : m.point(i)) {
        os << ',';
        put(v);
      }
      os << '\n';
    }
  }
}

}  // namespace mkv
