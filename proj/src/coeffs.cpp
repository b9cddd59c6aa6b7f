#include "mkv/coeffs.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include "call_syntax.hpp"
#include "mkv/error.hpp"

namespace mkv {

namespace {

using detail::ParsedCall;
using detail::parse_call;
using detail::trim;

struct Registry {
  const char* name;
  KernelType type;
  std::vector<std::pair<const char*, double>> params;  // with defaults
};

const std::vector<Registry>& kernel_registry() {
  static const std::vector<Registry> r = {
      {"constant", KernelType::constant, {{"value", 0.0}}},
      {"linear", KernelType::linear, {{"c0", 0.0}, {"cx", 0.0}, {"cy", 0.0}}},
      {"linear_mean_field", KernelType::linear_mean_field, {{"kappa", 1.0}}},
      {"trig", KernelType::trig, {{"amp", 1.0}, {"shift", 0.0}}},
      {"bounded_interaction", KernelType::bounded_interaction, {{"amp", 1.0}, {"length", 1.0}}},
      {"holder_bump", KernelType::holder_bump, {{"exponent", 1.0}, {"cap", 1.0}}},
  };
  return r;
}

std::string format_call(const std::string& name, const std::map<std::string, double>& params) {
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

// min(L r, osc) <= L^a osc^(1-a) r^a
double lipschitz_to_holder(double lip, double osc, double a) {
  if (lip == 0.0 || osc == 0.0) return 0.0;
  return std::pow(lip, a) * std::pow(osc, 1.0 - a);
}

double euclid(std::span<const double> x, std::span<const double> y) noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
  return std::sqrt(s);
}

}  // namespace

// ---------------------------------------------------------------------------
// KernelFn

KernelFn KernelFn::make(const std::string& name, const std::map<std::string, double>& params,
                        std::optional<double> declared_alpha,
                        std::optional<double> declared_bound) {
  const auto& reg = kernel_registry();
  const auto it = std::find_if(reg.begin(), reg.end(), [&](const Registry& r) { return name == r.name; });
  if (it == reg.end()) throw Error(Errc::InvalidArgument, "unknown kernel '" + name + "'");

  KernelFn k;
  k.type_ = it->type;
  k.name_ = name;
  std::map<std::string, double> rest = params;
  auto take = [&](const char* key, double fallback) {
    auto f = rest.find(key);
    if (f == rest.end()) return fallback;
    const double v = f->second;
    rest.erase(f);
    if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, std::string("non-finite ") + key);
    return v;
  };
  for (std::size_t i = 0; i < it->params.size(); ++i) {
    k.p_[i] = take(it->params[i].first, it->params[i].second);
    k.params_[it->params[i].first] = k.p_[i];
  }
  k.scale_ = take("scale", 1.0);
  k.offset_ = take("offset", 0.0);
  if (k.scale_ != 1.0) k.params_["scale"] = k.scale_;
  if (k.offset_ != 0.0) k.params_["offset"] = k.offset_;
  if (!rest.empty()) {
    throw Error(Errc::InvalidArgument,
                "unknown parameter '" + rest.begin()->first + "' for kernel '" + name + "'");
  }

  const double s = std::abs(k.scale_);
  const double off = std::abs(k.offset_);
  const double r = kValidationRadius;
  double natural_alpha = 1.0;
  double lip = 0.0;
  double osc = 0.0;
  switch (k.type_) {
    case KernelType::constant:
      k.sup_bound_ = std::abs(k.offset_ + k.scale_ * k.p_[0]);
      break;
    case KernelType::linear: {
      const double c0 = k.p_[0], cx = k.p_[1], cy = k.p_[2];
      k.sup_bound_ = off + s * (std::abs(c0) + (std::abs(cx) + std::abs(cy)) * r);
      lip = s * std::hypot(cx, cy);
      osc = 2.0 * s * (std::abs(cx) + std::abs(cy)) * r;
      break;
    }
    case KernelType::linear_mean_field:
      k.sup_bound_ = off + s * std::abs(k.p_[0]) * 2.0 * r;
      lip = s * std::abs(k.p_[0]) * std::sqrt(2.0);
      osc = 2.0 * s * std::abs(k.p_[0]) * 2.0 * r;
      break;
    case KernelType::trig:
      k.sup_bound_ = off + s * std::abs(k.p_[0]);
      lip = s * std::abs(k.p_[0]) * std::sqrt(2.0);
      osc = 2.0 * s * std::abs(k.p_[0]);
      break;
    case KernelType::bounded_interaction:
      if (!(k.p_[1] > 0.0)) throw Error(Errc::InvalidArgument, "length must be positive");
      k.sup_bound_ = off + s * std::abs(k.p_[0]);
      lip = std::sqrt(2.0) * s * std::abs(k.p_[0]) * std::exp(-0.5) / k.p_[1];
      osc = s * std::abs(k.p_[0]);
      break;
    case KernelType::holder_bump:
      if (!(k.p_[0] > 0.0 && k.p_[0] <= 1.0)) {
        throw Error(Errc::InvalidAlpha, "holder_bump exponent must lie in (0, 1]");
      }
      if (!(k.p_[1] > 0.0)) throw Error(Errc::InvalidArgument, "cap must be positive");
      natural_alpha = k.p_[0];
      k.sup_bound_ = off + s * k.p_[1];
      break;
  }
  k.declared_alpha_ = declared_alpha.value_or(natural_alpha);
  const double a = k.declared_alpha_;
  if (!(a > 0.0 && a <= 1.0)) throw Error(Errc::InvalidAlpha, "declared_alpha must lie in (0, 1]");
  if (a > natural_alpha + 1e-15) {
    throw Error(Errc::InvalidAlpha, "kernel '" + name + "' is not Hoelder of the declared order");
  }
  if (k.type_ == KernelType::holder_bump) {
    // |r^b - s^b| <= |r - s|^b, capped; |x-y| moves by at most sqrt(2)|z - z'|.
    k.seminorm_bound_ = s * std::pow(2.0, 0.5 * a) * std::pow(k.p_[1], 1.0 - a / k.p_[0]);
  } else {
    k.seminorm_bound_ = lipschitz_to_holder(lip, osc, a);
  }
  k.declared_bound_ = declared_bound.value_or(k.sup_bound_ + k.seminorm_bound_);
  if (!(k.declared_bound_ > 0.0)) {
    // A kernel that is identically zero still needs a positive bound.
    if (declared_bound) throw Error(Errc::InvalidArgument, "declared_bound must be positive");
    k.declared_bound_ = 1e-300;
  }
  return k;
}

KernelFn KernelFn::constant(double value) { return make("constant", {{"value", value}}); }

KernelFn KernelFn::parse(const std::string& expr) {
  ParsedCall call = parse_call(expr);
  std::optional<double> alpha;
  std::optional<double> bound;
  if (auto it = call.args.find("alpha"); it != call.args.end()) {
    alpha = it->second;
    call.args.erase(it);
  }
  if (auto it = call.args.find("bound"); it != call.args.end()) {
    bound = it->second;
    call.args.erase(it);
  }
  return make(call.name, call.args, alpha, bound);
}

bool KernelFn::depends_on_x() const noexcept {
  switch (type_) {
    case KernelType::constant: return false;
    case KernelType::linear: return p_[1] != 0.0 && scale_ != 0.0;
    default: return scale_ != 0.0 && p_[0] != 0.0;
  }
}

bool KernelFn::depends_on_y() const noexcept {
  switch (type_) {
    case KernelType::constant: return false;
    case KernelType::linear: return p_[2] != 0.0 && scale_ != 0.0;
    default: return scale_ != 0.0 && p_[0] != 0.0;
  }
}

double KernelFn::operator()(double /*t*/, std::span<const double> x, std::span<const double> y,
                            std::size_t coord) const noexcept {
  double base = 0.0;
  switch (type_) {
    case KernelType::constant: base = p_[0]; break;
    case KernelType::linear: base = p_[0] + p_[1] * x[coord] + p_[2] * y[coord]; break;
    case KernelType::linear_mean_field: base = p_[0] * (y[coord] - x[coord]); break;
    case KernelType::trig: base = p_[0] * std::sin(x[coord] + y[coord] + p_[1]); break;
    case KernelType::bounded_interaction: {
      const double r = euclid(x, y);
      base = p_[0] * std::exp(-r * r / (2.0 * p_[1] * p_[1]));
      break;
    }
    case KernelType::holder_bump:
      base = std::min(std::pow(euclid(x, y), p_[0]), p_[1]);
      break;
  }
  return offset_ + scale_ * base;
}

std::string KernelFn::to_string() const { return format_call(name_, params_); }

// ---------------------------------------------------------------------------
// FunctionalFn

FunctionalFn FunctionalFn::make(const std::string& name,
                                const std::map<std::string, double>& params) {
  struct Entry {
    const char* name;
    FunctionalType type;
    std::vector<std::pair<const char*, double>> params;
  };
  static const std::vector<Entry> reg = {
      {"tanh_mean_reversion", FunctionalType::tanh_mean_reversion, {{"scale", 1.0}, {"gain", 1.0}}},
      {"constant_drift", FunctionalType::constant_drift, {{"value", 0.0}}},
      {"local_mass_volatility",
       FunctionalType::local_mass_volatility,
       {{"base", 1.0}, {"gain", 1.0}, {"length", 1.0}}},
      {"constant_volatility", FunctionalType::constant_volatility, {{"value", 1.0}}},
  };
  const auto it = std::find_if(reg.begin(), reg.end(), [&](const Entry& e) { return name == e.name; });
  if (it == reg.end()) throw Error(Errc::InvalidArgument, "unknown functional '" + name + "'");
  FunctionalFn f;
  f.type_ = it->type;
  f.name_ = name;
  std::map<std::string, double> rest = params;
  for (std::size_t i = 0; i < it->params.size(); ++i) {
    auto found = rest.find(it->params[i].first);
    f.p_[i] = found == rest.end() ? it->params[i].second : found->second;
    if (found != rest.end()) rest.erase(found);
    if (!std::isfinite(f.p_[i])) throw Error(Errc::InvalidArgument, "non-finite parameter");
    f.params_[it->params[i].first] = f.p_[i];
  }
  if (!rest.empty()) {
    throw Error(Errc::InvalidArgument,
                "unknown parameter '" + rest.begin()->first + "' for functional '" + name + "'");
  }
  if (f.type_ == FunctionalType::local_mass_volatility) {
    if (!(f.p_[0] > 0.0)) throw Error(Errc::InvalidArgument, "base must be positive");
    if (!(f.p_[1] >= 0.0)) throw Error(Errc::InvalidArgument, "gain must be nonnegative");
    if (!(f.p_[2] > 0.0)) throw Error(Errc::InvalidArgument, "length must be positive");
  }
  return f;
}

FunctionalFn FunctionalFn::parse(const std::string& expr) {
  const ParsedCall call = parse_call(expr);
  return make(call.name, call.args);
}

bool FunctionalFn::is_drift() const noexcept {
  return type_ == FunctionalType::tanh_mean_reversion || type_ == FunctionalType::constant_drift;
}

bool FunctionalFn::depends_on_x() const noexcept {
  switch (type_) {
    case FunctionalType::tanh_mean_reversion: return p_[0] != 0.0 && p_[1] != 0.0;
    case FunctionalType::local_mass_volatility: return p_[1] != 0.0;
    default: return false;
  }
}

bool FunctionalFn::depends_on_measure() const noexcept { return depends_on_x(); }

double FunctionalFn::sup_bound() const noexcept {
  switch (type_) {
    case FunctionalType::tanh_mean_reversion: return std::abs(p_[0]);
    case FunctionalType::constant_drift: return std::abs(p_[0]);
    case FunctionalType::local_mass_volatility: return std::sqrt(p_[0] * p_[0] + p_[1]);
    case FunctionalType::constant_volatility: return std::abs(p_[0]);
  }
  return 0.0;
}

double FunctionalFn::seminorm_bound(double alpha) const noexcept {
  switch (type_) {
    case FunctionalType::tanh_mean_reversion:
      return lipschitz_to_holder(std::abs(p_[0] * p_[1]), 2.0 * std::abs(p_[0]), alpha);
    case FunctionalType::local_mass_volatility: {
      const double lip = p_[1] * std::exp(-0.5) / (2.0 * p_[0] * p_[2]);
      return lipschitz_to_holder(lip, sup_bound() - p_[0], alpha);
    }
    default: return 0.0;
  }
}

std::string FunctionalFn::to_string() const { return format_call(name_, params_); }

// ---------------------------------------------------------------------------
// CoefficientSpec

void CoefficientSpec::check() const {
  if (dim == 0) throw Error(Errc::DimensionMismatch, "dimension must be positive");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidAlpha, "alpha must lie in (0, 1]");
  if (!(lambda > 0.0)) throw Error(Errc::InvalidArgument, "lambda must be positive");
  if (mode == CoefficientMode::kernel_form) {
    if (b.size() != dim) throw Error(Errc::DimensionMismatch, "drift needs dim kernel entries");
    if (sigma.size() != dim * dim) {
      throw Error(Errc::DimensionMismatch, "sigma needs dim*dim kernel entries");
    }
    for (const auto* list : {&b, &sigma}) {
      for (const auto& k : *list) {
        if (k.declared_alpha() + 1e-15 < alpha) {
          throw Error(Errc::InvalidAlpha,
                      "kernel " + k.to_string() + " is declared less regular than alpha");
        }
      }
    }
  } else {
    if (!drift_functional || !diffusion_functional) {
      throw Error(Errc::InvalidArgument, "general form needs drift and diffusion functionals");
    }
    if (!drift_functional->is_drift()) {
      throw Error(Errc::InvalidArgument, drift_functional->name() + " is not a drift functional");
    }
    if (diffusion_functional->is_drift()) {
      throw Error(Errc::InvalidArgument,
                  diffusion_functional->name() + " is not a diffusion functional");
    }
  }
}

bool CoefficientSpec::depends_on_measure() const noexcept {
  if (mode == CoefficientMode::general_form) {
    return drift_functional->depends_on_measure() || diffusion_functional->depends_on_measure();
  }
  for (const auto* list : {&b, &sigma}) {
    for (const auto& k : *list) {
      if (k.depends_on_y()) return true;
    }
  }
  return false;
}

bool CoefficientSpec::diffusion_depends_on_x() const noexcept {
  if (mode == CoefficientMode::general_form) return diffusion_functional->depends_on_x();
  return std::any_of(sigma.begin(), sigma.end(), [](const KernelFn& k) { return k.depends_on_x(); });
}

bool CoefficientSpec::depends_on_x() const noexcept {
  if (diffusion_depends_on_x()) return true;
  if (mode == CoefficientMode::general_form) return drift_functional->depends_on_x();
  return std::any_of(b.begin(), b.end(), [](const KernelFn& k) { return k.depends_on_x(); });
}

double CoefficientSpec::cmatrix_bound() const noexcept {
  if (mode == CoefficientMode::general_form) {
    const double v = diffusion_functional->sup_bound();
    return v * v;
  }
  // Largest eigenvalue of Sigma Sigma^T is at most the squared Frobenius norm.
  double s = 0.0;
  for (const auto& k : sigma) s += k.sup_bound() * k.sup_bound();
  return s;
}

double CoefficientSpec::drift_bound() const noexcept {
  if (mode == CoefficientMode::general_form) {
    return drift_functional->sup_bound() * std::sqrt(static_cast<double>(dim));
  }
  double s = 0.0;
  for (const auto& k : b) s += k.sup_bound() * k.sup_bound();
  return std::sqrt(s);
}

std::string CoefficientSpec::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "dim=" << dim << " alpha=" << alpha << " lambda=" << lambda;
  if (mode == CoefficientMode::general_form) {
    os << " drift=" << drift_functional->to_string()
       << " diffusion=" << diffusion_functional->to_string();
  } else {
    for (std::size_t i = 0; i < b.size(); ++i) os << " b." << i << "=" << b[i].to_string();
    for (std::size_t i = 0; i < sigma.size(); ++i) {
      os << " sigma." << i / dim << "." << i % dim << "=" << sigma[i].to_string();
    }
  }
  return os.str();
}

CoefficientSpec kernel_spec(std::size_t dim, std::vector<KernelFn> b, std::vector<KernelFn> sigma,
                            std::optional<double> alpha, double lambda) {
  CoefficientSpec s;
  s.dim = dim;
  s.b = std::move(b);
  s.sigma = std::move(sigma);
  s.lambda = lambda;
  double a = 1.0;
  for (const auto* list : {&s.b, &s.sigma}) {
    for (const auto& k : *list) a = std::min(a, k.declared_alpha());
  }
  s.alpha = alpha.value_or(a);
  s.check();
  return s;
}

CoefficientSpec constant_spec(std::vector<double> drift, std::vector<double> sigma, double lambda) {
  const std::size_t d = drift.size();
  if (sigma.size() != d * d) throw Error(Errc::DimensionMismatch, "sigma must be d x d");
  std::vector<KernelFn> b;
  std::vector<KernelFn> s;
  for (double v : drift) b.push_back(KernelFn::constant(v));
  for (double v : sigma) s.push_back(KernelFn::constant(v));
  return kernel_spec(d, std::move(b), std::move(s), 1.0, lambda);
}

// ---------------------------------------------------------------------------
// GeneratorCoefficients

GeneratorCoefficients::GeneratorCoefficients(const CoefficientSpec& spec, double t,
                                             const EmpiricalMeasure& mu)
    : spec_(spec), t_(t), mu_(mu) {
  if (mu.dim() != spec.dim) {
    throw Error(Errc::DimensionMismatch, "measure dimension differs from coefficient dimension");
  }
  const std::size_t d = spec.dim;
  mean_ = mu.mean();
  bool need_trig = false;
  for (const auto* list : {&spec.b, &spec.sigma}) {
    for (const auto& k : *list) need_trig |= k.type() == KernelType::trig;
  }
  if (need_trig) {
    sin_moment_.assign(d, 0.0);
    cos_moment_.assign(d, 0.0);
    for (std::size_t j = 0; j < mu.size(); ++j) {
      const auto y = mu.point(j);
      for (std::size_t c = 0; c < d; ++c) {
        sin_moment_[c] += mu.weight(j) * std::sin(y[c]);
        cos_moment_[c] += mu.weight(j) * std::cos(y[c]);
      }
    }
  }
}

double GeneratorCoefficients::radial_sum(const KernelFn& k, std::span<const double> x) const noexcept {
  if (k.type() == KernelType::bounded_interaction) return k.p_[0] * gaussian_sum(k.p_[1], x);
  return holder_sum(k.p_[0], k.p_[1], x);
}

double GeneratorCoefficients::gaussian_sum(double length, std::span<const double> x) const noexcept {
  const std::size_t d = spec_.dim;
  const auto coords = mu_.coords();
  const auto w = mu_.weights();
  const double inv = 1.0 / (2.0 * length * length);
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    double r2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = x[c] - coords[j * d + c];
      r2 += diff * diff;
    }
    acc += w[j] * std::exp(-r2 * inv);
  }
  return acc;
}

double GeneratorCoefficients::holder_sum(double beta, double cap,
                                         std::span<const double> x) const noexcept {
  const std::size_t d = spec_.dim;
  const auto coords = mu_.coords();
  const auto w = mu_.weights();
  const std::size_t n = w.size();
  double acc = 0.0;
  const double cap_r2 = std::pow(cap, 2.0 / beta);
  for (std::size_t j = 0; j < n; ++j) {
    double r2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = x[c] - coords[j * d + c];
      r2 += diff * diff;
    }
    acc += w[j] * (r2 >= cap_r2 ? cap : std::pow(r2, 0.5 * beta));
  }
  return acc;
}

double GeneratorCoefficients::integrate(const KernelFn& k, std::span<const double> x,
                                        std::size_t coord) const noexcept {
  double base = 0.0;
  switch (k.type()) {
    case KernelType::constant: base = k.p_[0]; break;
    case KernelType::linear: base = k.p_[0] + k.p_[1] * x[coord] + k.p_[2] * mean_[coord]; break;
    case KernelType::linear_mean_field: base = k.p_[0] * (mean_[coord] - x[coord]); break;
    case KernelType::trig: {
      // sin(x + y + s) = sin(x + s) cos y + cos(x + s) sin y
      const double u = x[coord] + k.p_[1];
      base = k.p_[0] * (std::sin(u) * cos_moment_[coord] + std::cos(u) * sin_moment_[coord]);
      break;
    }
    case KernelType::bounded_interaction:
    case KernelType::holder_bump:
      base = radial_sum(k, x);
      break;
  }
  return k.offset_ + k.scale_ * base;
}

void GeneratorCoefficients::drift(std::span<const double> x, std::span<double> out) const noexcept {
  const std::size_t d = spec_.dim;
  if (spec_.mode == CoefficientMode::kernel_form) {
    for (std::size_t i = 0; i < d; ++i) out[i] = integrate(spec_.b[i], x, i);
    return;
  }
  const FunctionalFn& f = *spec_.drift_functional;
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = f.type_ == FunctionalType::tanh_mean_reversion
                 ? f.p_[0] * std::tanh(f.p_[1] * (mean_[i] - x[i]))
                 : f.p_[0];
  }
}

void GeneratorCoefficients::diffusion(std::span<const double> x,
                                      std::span<double> out) const noexcept {
  const std::size_t d = spec_.dim;
  if (spec_.mode == CoefficientMode::kernel_form) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = integrate(spec_.sigma[i * d + j], x, i);
    }
    return;
  }
  const FunctionalFn& f = *spec_.diffusion_functional;
  double v = f.p_[0];
  if (f.type_ == FunctionalType::local_mass_volatility) {
    v = std::sqrt(f.p_[0] * f.p_[0] + f.p_[1] * gaussian_sum(f.p_[2], x));
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = i == j ? v : 0.0;
  }
}

void GeneratorCoefficients::cmatrix(std::span<const double> x, std::span<double> out) const noexcept {
  const std::size_t d = spec_.dim;
  if (d == 1) {
    double s;
    diffusion(x, std::span<double>(&s, 1));
    out[0] = s * s;
    return;
  }
  double buf[16];
  double* s = buf;
  std::vector<double> heap;
  if (d * d > 16) {
    heap.resize(d * d);
    s = heap.data();
  }
  diffusion(x, std::span<double>(s, d * d));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += s[i * d + k] * s[j * d + k];
      out[i * d + j] = acc;
      out[j * d + i] = acc;
    }
  }
}

std::vector<double> eval_drift(const CoefficientSpec& spec, double t, std::span<const double> x,
                               const EmpiricalMeasure& mu) {
  if (x.size() != spec.dim) throw Error(Errc::DimensionMismatch, "point dimension differs");
  GeneratorCoefficients g(spec, t, mu);
  std::vector<double> out(spec.dim);
  g.drift(x, out);
  return out;
}

Eigen::MatrixXd eval_diffusion(const CoefficientSpec& spec, double t, std::span<const double> x,
                               const EmpiricalMeasure& mu) {
  if (x.size() != spec.dim) throw Error(Errc::DimensionMismatch, "point dimension differs");
  GeneratorCoefficients g(spec, t, mu);
  const auto d = static_cast<Eigen::Index>(spec.dim);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(d, d);
  g.diffusion(x, std::span<double>(m.data(), spec.dim * spec.dim));
  return m;
}

Eigen::MatrixXd eval_cmatrix(const CoefficientSpec& spec, double t, std::span<const double> x,
                             const EmpiricalMeasure& mu) {
  const Eigen::MatrixXd s = eval_diffusion(spec, t, x, mu);
  return s * s.transpose();
}

// ---------------------------------------------------------------------------
// validate_spec

ValidationReport validate_spec(const CoefficientSpec& spec, int sample_budget, std::uint64_t seed) {
  spec.check();
  if (sample_budget < 100) throw Error(Errc::InvalidArgument, "sample_budget must be at least 100");
  const std::size_t d = spec.dim;
  const double r = KernelFn::kValidationRadius;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-r, r);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> natoms(1, 5);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto random_measure = [&]() {
    const int n = natoms(rng);
    std::vector<double> coords(n * d);
    std::vector<double> w(n);
    for (auto& c : coords) c = box(rng);
    for (auto& v : w) v = 0.05 + unit(rng);
    return EmpiricalMeasure(d, std::move(coords), std::move(w));
  };
  auto random_point = [&](std::size_t n) {
    std::vector<double> p(n);
    for (auto& c : p) c = box(rng);
    return p;
  };
  // Partner at a random distance 10^[-4, 0.5] in a random direction, kept in the box.
  auto partner = [&](const std::vector<double>& z) {
    std::vector<double> dir(z.size());
    double norm = 0.0;
    for (auto& c : dir) {
      c = gauss(rng);
      norm += c * c;
    }
    norm = std::sqrt(norm);
    const double h = std::pow(10.0, -4.0 + 4.5 * unit(rng));
    std::vector<double> out(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) out[k] = std::clamp(z[k] + h * dir[k] / norm, -r, r);
    return out;
  };

  ValidationReport rep;
  rep.lambda_hat = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd c(d, d);
  for (int s = 0; s < sample_budget; ++s) {
    const double t = unit(rng);
    const EmpiricalMeasure mu = random_measure();
    const std::vector<double> x = random_point(d);
    GeneratorCoefficients g(spec, t, mu);
    std::vector<double> cm(d * d);
    g.cmatrix(x, cm);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) c(i, j) = cm[i * d + j];
    }
    const double lmin = d == 1 ? c(0, 0) : Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c).eigenvalues()(0);
    rep.lambda_hat = std::min(rep.lambda_hat, lmin);

    if (spec.mode == CoefficientMode::kernel_form) {
      std::vector<double> z = random_point(2 * d);
      std::vector<double> zeta = s % 4 == 0 ? random_point(2 * d) : partner(z);
      double dist = 0.0;
      for (std::size_t k = 0; k < 2 * d; ++k) dist += (z[k] - zeta[k]) * (z[k] - zeta[k]);
      dist = std::sqrt(dist);
      std::span<const double> zx(z.data(), d), zy(z.data() + d, d);
      std::span<const double> wx(zeta.data(), d), wy(zeta.data() + d, d);
      auto visit = [&](const KernelFn& k, std::size_t coord) {
        const double v1 = k(t, zx, zy, coord);
        const double v2 = k(t, wx, wy, coord);
        rep.bound_ratio = std::max(rep.bound_ratio, std::abs(v1) / k.declared_bound());
        if (dist > 0.0) {
          const double q = std::abs(v1 - v2) / std::pow(dist, k.declared_alpha());
          rep.holder_hat = std::max(rep.holder_hat, q);
          rep.holder_ratio = std::max(rep.holder_ratio, q / k.declared_bound());
        }
      };
      for (std::size_t i = 0; i < d; ++i) visit(spec.b[i], i);
      for (std::size_t i = 0; i < d * d; ++i) visit(spec.sigma[i], i / d);
    } else {
      const std::vector<double> x2 = s % 4 == 0 ? random_point(d) : partner(x);
      double dist = 0.0;
      for (std::size_t k = 0; k < d; ++k) dist += (x[k] - x2[k]) * (x[k] - x2[k]);
      dist = std::sqrt(dist);
      std::vector<double> b1(d), b2(d), s1(d * d), s2(d * d);
      g.drift(x, b1);
      g.drift(x2, b2);
      g.diffusion(x, s1);
      g.diffusion(x2, s2);
      const FunctionalFn& fd = *spec.drift_functional;
      const FunctionalFn& fs = *spec.diffusion_functional;
      const double bound_d = fd.sup_bound() + fd.seminorm_bound(spec.alpha);
      const double bound_s = fs.sup_bound() + fs.seminorm_bound(spec.alpha);
      for (std::size_t i = 0; i < d; ++i) {
        rep.bound_ratio = std::max(rep.bound_ratio, std::abs(b1[i]) / std::max(bound_d, 1e-300));
        rep.bound_ratio = std::max(rep.bound_ratio, std::abs(s1[i * d + i]) / bound_s);
        if (dist > 0.0) {
          const double qd = std::abs(b1[i] - b2[i]) / std::pow(dist, spec.alpha);
          const double qs = std::abs(s1[i * d + i] - s2[i * d + i]) / std::pow(dist, spec.alpha);
          rep.holder_hat = std::max({rep.holder_hat, qd, qs});
          rep.holder_ratio =
              std::max({rep.holder_ratio, qd / std::max(bound_d, 1e-300), qs / bound_s});
        }
      }
    }
  }
  if (!(rep.lambda_hat > 1e-12)) {
    throw Error(Errc::DegenerateDiffusion,
                "sampled diffusion matrix is singular (min eigenvalue " +
                    std::to_string(rep.lambda_hat) + ")");
  }
  rep.pass = rep.lambda_hat >= 0.5 * spec.lambda && rep.holder_ratio <= 2.0 &&
             rep.bound_ratio <= 1.0 + 1e-12;
  return rep;
}

}  // namespace mkv
