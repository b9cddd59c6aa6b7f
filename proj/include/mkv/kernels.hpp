#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mkv/coeffs.hpp"
#include "mkv/engine.hpp"
#include "mkv/measure.hpp"

namespace mkv {

/// Analytic scalar test function from a small registry:
///   constant(value)
///   linear(slope, intercept)
///   quadratic(a, center)                    a (x - center)^2
///   holder_power(exponent, radius, center, scale)
///                                           scale min(|x - center|^e, radius^e)
///   gaussian_bump(width, center, scale)     scale exp(-(x - center)^2 / (2 width^2))
/// Breakpoints list the points where the function is not smooth; quadrature
/// splits there.
struct TestFunction {
  std::string name;
  std::map<std::string, double> params;
  std::function<double(double)> fn;
  std::vector<double> breakpoints;

  static TestFunction make(const std::string& name, const std::map<std::string, double>& params = {});
  /// `name(key=value, ...)`.
  static TestFunction parse(const std::string& expr);

  double operator()(double x) const { return fn(x); }
  std::string to_string() const;
};

/// Values on the nodes of a 1-d grid. Nodes lo..hi (inclusive) are reliable;
/// outside that band the values are affected by the truncated domain. A
/// field sampled from a TestFunction keeps it, and integrals use it exactly.
class FieldOnGrid {
 public:
  FieldOnGrid(GridAxis axis, std::vector<double> values);
  FieldOnGrid(GridAxis axis, std::vector<double> values, std::size_t lo, std::size_t hi);

  static FieldOnGrid sample(const GridAxis& axis, const TestFunction& f);

  const GridAxis& axis() const noexcept { return axis_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double operator[](std::size_t k) const noexcept { return values_[k]; }
  std::size_t lo() const noexcept { return lo_; }
  std::size_t hi() const noexcept { return hi_; }
  bool reliable(std::size_t k) const noexcept { return k >= lo_ && k <= hi_; }
  const std::optional<TestFunction>& exact() const noexcept { return exact_; }

  /// Max |value| over the reliable band.
  double sup_norm() const noexcept;
  /// Piecewise-cubic interpolation (the exact function when present).
  double interpolate(double y) const noexcept;

 private:
  GridAxis axis_;
  std::vector<double> values_;
  std::size_t lo_ = 0;
  std::size_t hi_ = 0;
  std::optional<TestFunction> exact_;
};

/// E f(m + sqrt(var) Z). With an exact function: adaptive Gauss-Kronrod on
/// m +- 12 sd split at breakpoints. On grid values: trapezoid with point
/// Gaussian weights when the Gaussian is resolved by the grid, otherwise the
/// exact integral of the piecewise cubic interpolant.
double gaussian_expectation(const FieldOnGrid& f, double m, double var);

/// Numerical stand-in for the transition density p(t, x; s, y) of
///   dX = B(t, X, mu_t) dt + Sigma(t, X, mu_t) dW,   d = 1,
/// on a spatial grid. When B and C do not depend on x every transition is an
/// exact Gaussian and any times in [0, T] may be used. Otherwise transitions
/// are products of Euler step matrices on `time`; each row is a point
/// Gaussian renormalized to unit trapezoid mass, and t, s must be nodes.
class TransitionKernel {
 public:
  TransitionKernel(CoefficientSpec spec, MeasureFlow frozen, GridAxis grid, TimeGrid time);

  const CoefficientSpec& spec() const noexcept { return spec_; }
  const GridAxis& grid() const noexcept { return grid_; }
  const TimeGrid& time() const noexcept { return time_; }
  bool exact_gaussian() const noexcept { return exact_; }

  /// Mean shift and variance of the Gaussian transition over [t, s]
  /// (exact_gaussian kernels only).
  std::pair<double, double> gaussian_moments(double t, double s) const;

  /// Mass of the Euler step rows before renormalization, smallest over rows
  /// whose Gaussian lies inside the grid. 1 for exact kernels.
  double min_interior_row_mass() const;

  /// p(t, x_node; s, .) on the grid.
  std::vector<double> density_from(std::size_t node, double t, double s) const;

  /// Apply the step operators: backward on a field, forward on a density.
  std::vector<double> apply_backward(std::vector<double> v, double t, double s) const;
  std::vector<double> apply_forward(std::vector<double> rho, double t, double s) const;

  /// Index of t in the Euler grid; throws GridMismatch if t is not a node.
  std::size_t step_index(double t) const;

  /// Coefficients B, C at (t, x) with the frozen measure at t.
  std::pair<double, double> coefficients(double t, double x) const;

 private:
  struct Row {
    std::size_t first = 0;
    std::vector<double> w;  // trapezoid-weighted, sums to 1
    double mass = 1.0;      // before renormalization
  };
  const std::vector<Row>& step(std::size_t k) const;

  CoefficientSpec spec_;
  MeasureFlow frozen_;
  GridAxis grid_;
  TimeGrid time_;
  bool exact_;
  std::vector<EmpiricalMeasure> frozen_atoms_;
  // Left-constant coefficient pieces for exact kernels.
  std::vector<double> piece_start_;
  std::vector<double> piece_b_;
  std::vector<double> piece_c_;
  mutable std::vector<std::optional<std::vector<Row>>> steps_;
  mutable std::vector<double> row_mass_;
};

/// Density at s of the law started from mu0 at time 0.
GridDensity push_forward(const TransitionKernel& k, const EmpiricalMeasure& mu0, double s);

/// (P f)(x) = int p(t, x; s, y) f(y) dy at the grid nodes.
FieldOnGrid pull_back(const TransitionKernel& k, const FieldOnGrid& f, double t, double s);

/// Central finite difference (fourth-order stencil) of the pulled-back field.
/// order 1 or 2; in d = 1 the index pair is (0, 0).
FieldOnGrid pull_back_derivative(const TransitionKernel& k, const FieldOnGrid& f, double t,
                                 double s, int order, std::size_t i = 0, std::size_t j = 0);

/// Central finite differences of g on its reliable band.
FieldOnGrid finite_difference(const FieldOnGrid& g, int order);

/// ((A^mu_t - A^nu_t) g)(x) = 1/2 (C^mu - C^nu) g'' + (B^mu - B^nu) g'.
FieldOnGrid generator_apply_diff(const CoefficientSpec& spec_a, const CoefficientSpec& spec_b,
                                 const MeasureFlow& mu, const MeasureFlow& nu,
                                 const FieldOnGrid& g, double t);

struct InversionOptions {
  std::size_t nodes = 401;
  std::size_t time_nodes = 64;
  /// Spatial half-width; 0 selects max(8, 6 sqrt(C_max s)) + drift + support radius.
  double half_width = 0.0;
};

struct InversionReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_gap = 0.0;
  double rel_gap = 0.0;
  std::size_t nodes = 0;
  std::size_t time_nodes = 0;
  double dx = 0.0;
  double domain_min = 0.0;
  double domain_max = 0.0;
  double s = 0.0;
  bool exact_gaussian = false;
};

/// Grid used by verify_inversion for the given inputs.
GridAxis inversion_axis(const CoefficientSpec& spec_a, const CoefficientSpec& spec_b,
                        const EmpiricalMeasure& mu0, double s, const InversionOptions& opt);

/// Both sides of the inversion identity
///   int f d(P^mu_{0,s} - P^nu_{0,s}) mu0
///     = int mu0(dx) int_0^s P^mu_{0,t} (A^mu_t - A^nu_t) P^nu_{t,s} f (x) dt.
/// Time nodes are t_j = s (1 - (j/m)^2) for x-independent coefficients and
/// uniform otherwise; the panel touching t = s is integrated with a fitted
/// power law so the integrand is never evaluated at t = s.
InversionReport verify_inversion(const CoefficientSpec& spec_a, const CoefficientSpec& spec_b,
                                 const MeasureFlow& mu, const MeasureFlow& nu,
                                 const EmpiricalMeasure& mu0, const TestFunction& f, double s,
                                 const InversionOptions& opt = {});

}  // namespace mkv
