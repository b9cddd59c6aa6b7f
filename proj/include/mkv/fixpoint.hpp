#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "mkv/coeffs.hpp"
#include "mkv/engine.hpp"
#include "mkv/error.hpp"
#include "mkv/measure.hpp"

namespace mkv {

/// Everything a Picard solve needs. The particle engine takes any initial
/// law; the density engine needs a GridDensity and propagates on its grid.
struct Scenario {
  CoefficientSpec spec;
  Measure initial = EmpiricalMeasure::dirac(std::vector<double>{0.0});
  TimeGrid grid{1.0, 1};
  EngineKind engine = EngineKind::density;
  std::size_t particles = 0;
  std::uint64_t seed = 0;
  double alpha = 1.0;

  /// Throws on inconsistent dimensions, a density engine without a grid
  /// initial law, a particle engine without particles or a bad alpha.
  void check() const;
};

struct PicardDiagnostics {
  std::vector<double> distances;
  /// distances[k] / distances[k-1] where the previous distance is positive.
  std::vector<double> rates;
  bool converged = false;
  std::size_t iterations = 0;
};

/// MaxIterationsExceeded with the state reached so far.
class MaxIterationsError : public Error {
 public:
  MaxIterationsError(const std::string& message, PicardDiagnostics diagnostics, MeasureFlow last);

  const PicardDiagnostics& diagnostics() const noexcept { return diagnostics_; }
  const MeasureFlow& last_flow() const noexcept { return last_; }

 private:
  PicardDiagnostics diagnostics_;
  MeasureFlow last_;
};

/// mu -> marginal flow of the SDE with mu frozen. The particle engine reuses
/// the scenario seed, so the map is deterministic.
MeasureFlow picard_step(const Scenario& sc, const MeasureFlow& mu);

struct FixedPointResult {
  MeasureFlow flow;
  PicardDiagnostics diagnostics;
};

/// Iterates from the constant-in-time initial law (or `start`) until
/// flow_distance(mu^{k+1}, mu^k) < tol. Throws MaxIterationsError.
FixedPointResult solve_fixed_point(const Scenario& sc, double tol, std::size_t max_iter,
                                   const std::optional<MeasureFlow>& start = std::nullopt);

struct ContractionEstimate {
  std::vector<double> horizons;
  std::vector<double> rates;
  /// Least-squares fit of log rate against log T; absent with fewer than
  /// two horizons or a zero rate.
  std::optional<double> slope;
  std::optional<double> intercept;
};

/// For each T builds two constant frozen flows at distinct Gaussians on the
/// scenario grid and measures
///   r(T) = flow_distance(Phi mu, Phi nu) / flow_distance(mu, nu)
/// with the density engine and the scenario time step.
ContractionEstimate estimate_contraction(const Scenario& tmpl, double alpha,
                                         const std::vector<double>& horizons,
                                         std::uint64_t pair_seed);

struct ChainResult {
  MeasureFlow flow;
  std::vector<PicardDiagnostics> windows;
  std::vector<double> window_ends;
};

/// Solves [0, T_total] window by window (windows of at most T_sub, on the
/// scenario time step); each window starts from the previous terminal law.
/// A window that fails to converge or to contract is retried at half length.
ChainResult chain_solve(const Scenario& sc, double t_total, double t_sub, double tol,
                        std::size_t max_iter);

}  // namespace mkv
