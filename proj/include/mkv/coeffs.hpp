#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mkv/measure.hpp"

namespace mkv {

enum class KernelType {
  constant,             // value
  linear,               // c0 + cx x_i + cy y_i
  linear_mean_field,    // kappa (y_i - x_i)
  trig,                 // amp sin(x_i + y_i + shift)
  bounded_interaction,  // amp exp(-|x - y|^2 / (2 length^2))
  holder_bump,          // min(|x - y|^exponent, cap)
};

/// Registry kernel k(t, x, y) = offset + scale * base(x, y). Component
/// kernels read coordinate i of x and y, where i is the drift entry or the
/// diffusion row the kernel sits in; radial kernels use |x - y|.
///
/// declared_bound bounds the bC^alpha norm sup|k| + [k]_alpha with the
/// seminorm taken jointly in (x, y). Its default is computed from the
/// parameters. Kernels that grow linearly (linear, linear_mean_field) are
/// only bounded on a box; the default uses kValidationRadius.
class KernelFn {
 public:
  static constexpr double kValidationRadius = 4.0;

  KernelFn() = default;

  /// Throws InvalidArgument for unknown names or parameters, InvalidAlpha if
  /// declared_alpha is outside (0, 1] or exceeds what the kernel supports.
  static KernelFn make(const std::string& name, const std::map<std::string, double>& params = {},
                       std::optional<double> declared_alpha = std::nullopt,
                       std::optional<double> declared_bound = std::nullopt);
  static KernelFn constant(double value);

  /// Parses `name(key=value, ...)`; the reserved keys `alpha` and `bound`
  /// set the declared exponent and bound.
  static KernelFn parse(const std::string& expr);

  KernelType type() const noexcept { return type_; }
  const std::string& name() const noexcept { return name_; }
  const std::map<std::string, double>& params() const noexcept { return params_; }
  double declared_alpha() const noexcept { return declared_alpha_; }
  double declared_bound() const noexcept { return declared_bound_; }

  /// Analytic bounds on sup|k| and on the declared_alpha seminorm.
  double sup_bound() const noexcept { return sup_bound_; }
  double seminorm_bound() const noexcept { return seminorm_bound_; }

  bool depends_on_x() const noexcept;
  bool depends_on_y() const noexcept;
  bool is_constant() const noexcept { return !depends_on_x() && !depends_on_y(); }

  double operator()(double t, std::span<const double> x, std::span<const double> y,
                    std::size_t coord) const noexcept;

  std::string to_string() const;

 private:
  KernelType type_ = KernelType::constant;
  std::string name_ = "constant";
  std::map<std::string, double> params_;
  double p_[3] = {0.0, 0.0, 0.0};
  double scale_ = 1.0;
  double offset_ = 0.0;
  double declared_alpha_ = 1.0;
  double declared_bound_ = 0.0;
  double sup_bound_ = 0.0;
  double seminorm_bound_ = 0.0;

  friend class GeneratorCoefficients;
};

/// General-form coefficient functionals of (t, x, mu).
enum class FunctionalType {
  tanh_mean_reversion,    // drift:  scale tanh(gain (mean_i(mu) - x_i))
  constant_drift,         // drift:  value
  local_mass_volatility,  // diffusion: sqrt(base^2 + gain int exp(-|x-y|^2/(2 length^2)) dmu) I
  constant_volatility,    // diffusion: value I
};

class FunctionalFn {
 public:
  FunctionalFn() = default;
  static FunctionalFn make(const std::string& name, const std::map<std::string, double>& params = {});
  static FunctionalFn parse(const std::string& expr);

  FunctionalType type() const noexcept { return type_; }
  const std::string& name() const noexcept { return name_; }
  const std::map<std::string, double>& params() const noexcept { return params_; }
  bool is_drift() const noexcept;
  bool depends_on_x() const noexcept;
  bool depends_on_measure() const noexcept;
  /// Bound on |B_i| (drift) or on the scalar volatility (diffusion).
  double sup_bound() const noexcept;
  /// Bound on the alpha-Hoelder seminorm in x at fixed mu.
  double seminorm_bound(double alpha) const noexcept;

  std::string to_string() const;

 private:
  FunctionalType type_ = FunctionalType::constant_drift;
  std::string name_ = "constant_drift";
  std::map<std::string, double> params_;
  double p_[3] = {0.0, 0.0, 0.0};

  friend class GeneratorCoefficients;
};

enum class CoefficientMode { kernel_form, general_form };

/// Coefficients of the McKean-Vlasov SDE
///   dX = B(t, X, mu_t) dt + Sigma(t, X, mu_t) dW.
/// In kernel form B_i = int b_i(t, x, y) mu(dy) and Sigma_ij likewise with
/// `sigma` stored row-major. In general form the two functionals are used.
struct CoefficientSpec {
  std::size_t dim = 1;
  CoefficientMode mode = CoefficientMode::kernel_form;
  std::vector<KernelFn> b;
  std::vector<KernelFn> sigma;
  std::optional<FunctionalFn> drift_functional;
  std::optional<FunctionalFn> diffusion_functional;
  double alpha = 1.0;
  double lambda = 1.0;

  /// Throws DimensionMismatch / InvalidArgument / InvalidAlpha on structural
  /// problems. Does not sample ellipticity (see validate_spec).
  void check() const;

  bool depends_on_measure() const noexcept;
  bool depends_on_x() const noexcept;
  bool diffusion_depends_on_x() const noexcept;

  /// Upper bound on the largest eigenvalue of C = Sigma Sigma^T.
  double cmatrix_bound() const noexcept;
  /// Upper bound on |B| (Euclidean), using the validation box for linear kernels.
  double drift_bound() const noexcept;

  std::string describe() const;
};

/// Kernel-form spec from entry lists; alpha defaults to the smallest kernel
/// exponent.
CoefficientSpec kernel_spec(std::size_t dim, std::vector<KernelFn> b, std::vector<KernelFn> sigma,
                            std::optional<double> alpha = std::nullopt, double lambda = 1.0);

/// x- and measure-independent spec with drift `drift` and Sigma = `sigma`.
CoefficientSpec constant_spec(std::vector<double> drift, std::vector<double> sigma,
                              double lambda = 1.0);

/// Coefficients frozen at (t, mu). Evaluation writes into caller buffers and
/// does not allocate. Holds references to `spec` and `mu`.
class GeneratorCoefficients {
 public:
  GeneratorCoefficients(const CoefficientSpec& spec, double t, const EmpiricalMeasure& mu);

  std::size_t dim() const noexcept { return spec_.dim; }
  double time() const noexcept { return t_; }

  void drift(std::span<const double> x, std::span<double> out) const noexcept;
  /// Row-major d x d.
  void diffusion(std::span<const double> x, std::span<double> out) const noexcept;
  /// C = Sigma Sigma^T, row-major d x d.
  void cmatrix(std::span<const double> x, std::span<double> out) const noexcept;

 private:
  double integrate(const KernelFn& k, std::span<const double> x, std::size_t coord) const noexcept;
  double radial_sum(const KernelFn& k, std::span<const double> x) const noexcept;
  double gaussian_sum(double length, std::span<const double> x) const noexcept;
  double holder_sum(double beta, double cap, std::span<const double> x) const noexcept;

  const CoefficientSpec& spec_;
  double t_;
  const EmpiricalMeasure& mu_;
  std::vector<double> mean_;
  std::vector<double> sin_moment_;
  std::vector<double> cos_moment_;
};

std::vector<double> eval_drift(const CoefficientSpec& spec, double t, std::span<const double> x,
                               const EmpiricalMeasure& mu);
Eigen::MatrixXd eval_diffusion(const CoefficientSpec& spec, double t, std::span<const double> x,
                               const EmpiricalMeasure& mu);
Eigen::MatrixXd eval_cmatrix(const CoefficientSpec& spec, double t, std::span<const double> x,
                             const EmpiricalMeasure& mu);

struct ValidationReport {
  double lambda_hat = 0.0;
  /// Largest sampled Hoelder quotient over all kernel entries.
  double holder_hat = 0.0;
  /// Largest sampled quotient / declared bound over entries.
  double holder_ratio = 0.0;
  /// Largest sampled |entry| / declared bound over entries.
  double bound_ratio = 0.0;
  bool pass = false;
};

/// Samples random (t, x, mu) in the validation box: mu has 1 to 5 atoms.
/// Throws InvalidArgument if sample_budget < 100 and DegenerateDiffusion if
/// the smallest sampled eigenvalue of C is not positive.
ValidationReport validate_spec(const CoefficientSpec& spec, int sample_budget,
                               std::uint64_t seed = 0x5eed);

}  // namespace mkv
