#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "mkv/coeffs.hpp"
#include "mkv/measure.hpp"

namespace mkv {

/// Uniform partition 0 = t_0 < ... < t_steps = T.
class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t steps);

  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return steps_; }
  double dt() const noexcept { return horizon_ / static_cast<double>(steps_); }
  double node(std::size_t k) const noexcept {
    return k == steps_ ? horizon_ : static_cast<double>(k) * dt();
  }
  std::vector<double> nodes() const;

 private:
  double horizon_;
  std::size_t steps_;
};

enum class EngineKind { particle, density };

struct SimulationOutput {
  MeasureFlow flow;
  EngineKind engine = EngineKind::particle;
  std::optional<std::uint64_t> seed;
  /// Density engine: mass before renormalization after each step.
  std::vector<double> step_mass;
};

/// Euler-Maruyama for dX = B(t, X, mu_t) dt + Sigma(t, X, mu_t) dW with the
/// flow `frozen` read left-constant in time. Initial positions are drawn
/// from `init` by inverse CDF; increments come from per-(particle, step)
/// counter streams, so the output is independent of the thread count.
SimulationOutput simulate_particles(const CoefficientSpec& spec, const MeasureFlow& frozen,
                                    const EmpiricalMeasure& init, const TimeGrid& grid,
                                    std::size_t n_particles, std::uint64_t seed);

/// Euler frozen-coefficient Gaussian steps on the grid of `init` (d = 1, 2):
///   rho_{k+1}(y) = sum_x w(x) rho_k(x) N(y; x + B dt, C dt)
/// followed by renormalization to unit mass. Throws OutOfDomain when the
/// Gaussian tails leaving the grid exceed 1e-8 in a step and MassLeak when
/// the pre-renormalization mass is off by more than 1e-4.
SimulationOutput propagate_density(const CoefficientSpec& spec, const MeasureFlow& frozen,
                                   const GridDensity& init, const TimeGrid& grid);

MeasureFlow extract_marginal_flow(const SimulationOutput& out);

/// `t,x,density` (grid, one column per axis) or `t,particle_id,x1..xd`.
void write_marginals_csv(std::ostream& os, const MeasureFlow& flow);

}  // namespace mkv
