#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace mkv {

/// Finitely supported probability measure on R^d.
///
/// Points are stored row-major (`size() * dim()` coordinates). Weights are
/// normalized to sum to one on construction.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::size_t dim, std::vector<double> coords, std::vector<double> weights);

  /// Uniform weights.
  static EmpiricalMeasure uniform(std::size_t dim, std::vector<double> coords);
  static EmpiricalMeasure dirac(std::span<const double> point);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return weights_.size(); }

  std::span<const double> point(std::size_t i) const noexcept {
    return {coords_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const noexcept { return weights_[i]; }

  std::span<const double> coords() const noexcept { return coords_; }
  std::span<const double> weights() const noexcept { return weights_; }

  std::vector<double> mean() const;

 private:
  std::size_t dim_;
  std::vector<double> coords_;
  std::vector<double> weights_;
};

/// Construction from a list of points; `weights` defaults to uniform.
/// Throws EmptySupport, NegativeWeight or DimensionMismatch.
EmpiricalMeasure make_empirical(const std::vector<std::vector<double>>& points,
                                const std::optional<std::vector<double>>& weights = std::nullopt);

struct GridAxis {
  double min = 0.0;
  double max = 1.0;
  std::size_t nodes = 0;

  double spacing() const noexcept { return (max - min) / static_cast<double>(nodes - 1); }
  double node(std::size_t k) const noexcept {
    return k + 1 == nodes ? max : min + static_cast<double>(k) * spacing();
  }
  /// Trapezoidal cell weight of node k.
  double weight(std::size_t k) const noexcept {
    return (k == 0 || k + 1 == nodes) ? 0.5 * spacing() : spacing();
  }

  bool operator==(const GridAxis&) const = default;
};

/// Density sampled on a uniform tensor grid in one or two dimensions.
/// Values are flattened with the first axis outermost. The constructor
/// rescales the values to unit trapezoidal mass.
class GridDensity {
 public:
  static constexpr std::size_t kMinNodes = 8;

  GridDensity(std::vector<GridAxis> axes, std::vector<double> values);

  static GridDensity from_function(std::vector<GridAxis> axes,
                                   const std::function<double(std::span<const double>)>& density);

  std::size_t dim() const noexcept { return axes_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<GridAxis>& axes() const noexcept { return axes_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Coordinates of the flat node index.
  void node(std::size_t flat, std::span<double> out) const noexcept;
  double cell_weight(std::size_t flat) const noexcept;
  double mass() const noexcept;

 private:
  std::vector<GridAxis> axes_;
  std::vector<double> values_;
};

/// Trapezoidal mass of raw grid values (no normalization).
double trapezoid_mass(const std::vector<GridAxis>& axes, std::span<const double> values);

/// Atoms at the grid nodes with weight value * cell weight, renormalized.
EmpiricalMeasure grid_to_measure(const GridDensity& g);

using Measure = std::variant<EmpiricalMeasure, GridDensity>;

enum class MeasureKind { empirical, grid };

MeasureKind kind_of(const Measure& m) noexcept;
std::size_t dim_of(const Measure& m) noexcept;
EmpiricalMeasure to_empirical(const Measure& m);

/// Time-indexed family of measures of one kind and dimension. Times start at
/// zero and increase strictly.
class MeasureFlow {
 public:
  MeasureFlow(std::vector<double> times, std::vector<Measure> measures);

  /// Same measure at every time node.
  static MeasureFlow constant(std::vector<double> times, const Measure& m);

  std::size_t size() const noexcept { return times_.size(); }
  std::span<const double> times() const noexcept { return times_; }
  const Measure& at(std::size_t k) const noexcept { return measures_[k]; }
  const std::vector<Measure>& measures() const noexcept { return measures_; }
  MeasureKind kind() const noexcept { return kind_of(measures_.front()); }
  std::size_t dim() const noexcept { return dim_of(measures_.front()); }
  double horizon() const noexcept { return times_.back(); }

  /// Index of the last node with time <= t (left-constant interpolation).
  std::size_t index_at_or_before(double t) const noexcept;

 private:
  std::vector<double> times_;
  std::vector<Measure> measures_;
};

// ---------------------------------------------------------------------------
// Metrics

enum class MetricKind { bounded_lipschitz, wasserstein };

/// How the bounded-Hölder dual LP is solved. Both routes are exact.
///  - dense_lp: the LP in the test-function values f_i and the budget split
///    (a, b), solved by the dense simplex; quadratic constraint count.
///  - parametric_transport: for fixed (a, 1-a) the dual of the LP is a
///    transport problem with truncated cost min((1-a)|x-y|^alpha, 2a); the
///    optimal value is concave piecewise linear in a and is maximized exactly
///    by cutting-plane on the optimal flows' cost lines.
///  - automatic: dense_lp for small supports, parametric_transport otherwise.
enum class BlMethod { automatic, dense_lp, parametric_transport };

/// sup of int f d(mu - nu) over sup|f| + [f]_alpha <= 1. Result in [0, 2].
double metric_bl_alpha(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double alpha,
                       BlMethod method = BlMethod::automatic);

/// Optimal transport cost with ground cost |x - y|^alpha.
double metric_w_alpha(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double alpha);

/// Dispatch on kind; grid densities are converted with grid_to_measure.
double measure_distance(const Measure& mu, const Measure& nu, double alpha, MetricKind kind);

/// Max over the shared time nodes of the per-time metric.
double flow_distance(const MeasureFlow& a, const MeasureFlow& b, double alpha, MetricKind kind);

}  // namespace mkv
