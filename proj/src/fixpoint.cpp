#include "mkv/fixpoint.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mkv {

namespace {

constexpr MetricKind kMetric = MetricKind::bounded_lipschitz;

void check_flow_on_grid(const MeasureFlow& mu, const TimeGrid& grid) {
  const auto times = mu.times();
  if (times.size() != grid.steps() + 1) {
    throw Error(Errc::GridMismatch, "frozen flow does not live on the scenario time grid");
  }
  const double tol = 1e-9 * grid.dt();
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (std::abs(times[k] - grid.node(k)) > tol) {
      throw Error(Errc::GridMismatch, "frozen flow does not live on the scenario time grid");
    }
  }
}

// Fit of log y on log x.
std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {slope, (sy - slope * sx) / n};
}

}  // namespace

void Scenario::check() const {
  spec.check();
  if (dim_of(initial) != spec.dim) {
    throw Error(Errc::DimensionMismatch, "initial law dimension differs from coefficients");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidAlpha, "alpha must lie in (0, 1]");
  if (engine == EngineKind::density && kind_of(initial) != MeasureKind::grid) {
    throw Error(Errc::InvalidArgument, "the density engine needs a grid initial law");
  }
  if (engine == EngineKind::particle && particles == 0) {
    throw Error(Errc::InvalidArgument, "the particle engine needs at least one particle");
  }
}

MaxIterationsError::MaxIterationsError(const std::string& message, PicardDiagnostics diagnostics,
                                       MeasureFlow last)
    : Error(Errc::MaxIterationsExceeded, message),
      diagnostics_(std::move(diagnostics)),
      last_(std::move(last)) {}

MeasureFlow picard_step(const Scenario& sc, const MeasureFlow& mu) {
  check_flow_on_grid(mu, sc.grid);
  if (sc.engine == EngineKind::particle) {
    return simulate_particles(sc.spec, mu, to_empirical(sc.initial), sc.grid, sc.particles, sc.seed).flow;
  }
  return propagate_density(sc.spec, mu, std::get<GridDensity>(sc.initial), sc.grid).flow;
}

FixedPointResult solve_fixed_point(const Scenario& sc, double tol, std::size_t max_iter,
                                   const std::optional<MeasureFlow>& start) {
  sc.check();
  if (!(tol > 0.0)) throw Error(Errc::InvalidArgument, "tol must be positive");
  if (max_iter < 1) throw Error(Errc::InvalidArgument, "max_iter must be at least 1");
  MeasureFlow mu = start ? *start : MeasureFlow::constant(sc.grid.nodes(), sc.initial);
  check_flow_on_grid(mu, sc.grid);

  PicardDiagnostics diag;
  if (!sc.spec.depends_on_measure()) {
    // Phi is constant, so its first output is already fixed: Phi(Phi mu) == Phi mu.
    diag.distances.push_back(0.0);
    diag.iterations = 1;
    diag.converged = true;
    return {picard_step(sc, mu), diag};
  }
  for (std::size_t k = 0; k < max_iter; ++k) {
    MeasureFlow next = picard_step(sc, mu);
    const double d = flow_distance(next, mu, sc.alpha, kMetric);
    if (!diag.distances.empty() && diag.distances.back() > 0.0) {
      diag.rates.push_back(d / diag.distances.back());
    }
    diag.distances.push_back(d);
    diag.iterations = k + 1;
    mu = std::move(next);
    if (d < tol) {
      diag.converged = true;
      return {std::move(mu), diag};
    }
  }
  throw MaxIterationsError("no convergence after " + std::to_string(max_iter) +
                               " iterations, last distance " + std::to_string(diag.distances.back()),
                           diag, std::move(mu));
}

ContractionEstimate estimate_contraction(const Scenario& tmpl, double alpha,
                                         const std::vector<double>& horizons,
                                         std::uint64_t pair_seed) {
  tmpl.check();
  if (tmpl.engine != EngineKind::density) {
    throw Error(Errc::InvalidArgument, "contraction estimates use the density engine");
  }
  if (horizons.empty()) throw Error(Errc::InvalidArgument, "no horizons given");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidAlpha, "alpha must lie in (0, 1]");
  const auto& init = std::get<GridDensity>(tmpl.initial);

  // Two Gaussians of distinct widths sharing (nearly) the initial mean, well
  // inside the grid.
  std::mt19937_64 rng(pair_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto centre = to_empirical(tmpl.initial).mean();
  std::vector<double> width(init.dim());
  for (std::size_t a = 0; a < init.dim(); ++a) width[a] = init.axes()[a].max - init.axes()[a].min;
  auto gaussian = [&](double lo, double hi) {
    std::vector<double> m(init.dim());
    std::vector<double> sd(init.dim());
    for (std::size_t a = 0; a < init.dim(); ++a) {
      m[a] = centre[a] + (unit(rng) - 0.5) * 0.01 * width[a];
      sd[a] = (lo + (hi - lo) * unit(rng)) * width[a];
    }
    return GridDensity::from_function(init.axes(), [m, sd](std::span<const double> x) {
      double e = 0.0;
      for (std::size_t a = 0; a < x.size(); ++a) e += 0.5 * std::pow((x[a] - m[a]) / sd[a], 2);
      return std::exp(-e);
    });
  };
  const GridDensity ga = gaussian(0.10, 0.15);
  const GridDensity gb = gaussian(0.20, 0.25);

  ContractionEstimate out;
  out.horizons = horizons;
  const double dt = tmpl.grid.dt();
  for (double t_h : horizons) {
    if (!(t_h > 0.0)) throw Error(Errc::InvalidArgument, "horizons must be positive");
    Scenario sc = tmpl;
    sc.alpha = alpha;
    sc.grid = TimeGrid(t_h, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(t_h / dt))));
    const auto mu = MeasureFlow::constant(sc.grid.nodes(), ga);
    const auto nu = MeasureFlow::constant(sc.grid.nodes(), gb);
    const double base = flow_distance(mu, nu, alpha, kMetric);
    if (!(base > 0.0)) throw Error(Errc::DegenerateInput, "the two frozen flows coincide");
    out.rates.push_back(flow_distance(picard_step(sc, mu), picard_step(sc, nu), alpha, kMetric) / base);
  }
  const bool positive = std::all_of(out.rates.begin(), out.rates.end(), [](double r) { return r > 0.0; });
  if (horizons.size() >= 2 && positive) {
    const auto [slope, intercept] = loglog_fit(horizons, out.rates);
    out.slope = slope;
    out.intercept = intercept;
  }
  return out;
}

ChainResult chain_solve(const Scenario& sc, double t_total, double t_sub, double tol, std::size_t max_iter) {
  sc.check();
  if (!(t_total > 0.0) || !(t_sub > 0.0)) throw Error(Errc::InvalidArgument, "horizons must be positive");
  if (t_sub > t_total * (1.0 + 1e-12)) throw Error(Errc::InvalidArgument, "T_sub exceeds T_total");
  const double dt = sc.grid.dt();
  const auto total_steps = static_cast<std::size_t>(std::llround(t_total / dt));
  const auto window_steps = static_cast<std::size_t>(std::floor(t_sub / dt + 1e-9));
  if (total_steps == 0 || window_steps == 0) {
    throw Error(Errc::InvalidArgument, "windows are shorter than the scenario time step");
  }
  if (std::abs(static_cast<double>(total_steps) * dt - t_total) > 1e-9 * t_total) {
    throw Error(Errc::GridMismatch, "T_total is not a multiple of the scenario time step");
  }

  ChainResult out{MeasureFlow::constant({0.0}, sc.initial), {}, {}};
  std::vector<double> times{0.0};
  std::vector<Measure> measures{sc.initial};
  std::size_t done = 0;
  std::size_t window = 0;
  while (done < total_steps) {
    std::size_t steps = std::min(window_steps, total_steps - done);
    for (;;) {
      Scenario w = sc;
      w.initial = measures.back();
      w.grid = TimeGrid(static_cast<double>(steps) * dt, steps);
      // distinct increments per window for the particle engine
      w.seed = sc.seed + 0x9e3779b97f4a7c15ULL * window;
      try {
        auto res = solve_fixed_point(w, tol, max_iter);
        bool contracting = true;
        for (std::size_t i = 0; i < res.diagnostics.rates.size(); ++i) {
          if (res.diagnostics.distances[i] > 10.0 * tol && res.diagnostics.rates[i] >= 1.0) contracting = false;
        }
        if (!contracting && steps > 1) {
          steps = (steps + 1) / 2;
          continue;
        }
        for (std::size_t k = 1; k <= steps; ++k) {
          times.push_back(static_cast<double>(done + k) * dt);
          measures.push_back(res.flow.at(k));
        }
        out.windows.push_back(std::move(res.diagnostics));
        break;
      } catch (const MaxIterationsError&) {
        if (steps == 1) throw;
        steps = (steps + 1) / 2;
      }
    }
    done += steps;
    out.window_ends.push_back(static_cast<double>(done) * dt);
    ++window;
  }
  out.flow = MeasureFlow(std::move(times), std::move(measures));
  return out;
}

}  // namespace mkv
