#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mkv/coeffs.hpp"
#include "mkv/fixpoint.hpp"
#include "mkv/kernels.hpp"

namespace mkv {

/// Scenario files are INI documents with a fixed schema. Every section and
/// key is checked against the schema of the command reading it; anything
/// unknown is a ConfigParse error. Lists of kernels are separated by ';',
/// lists of numbers by ','. Comments are whole lines starting with ';' or
/// '#'; there are no trailing comments.
///
///   [coefficients]   also [mu] / [nu] for verify-inversion
///     mode                  kernel (default) | general
///     dim                   default 1
///     drift, sigma          kernel mode: dim and dim*dim (row-major) kernels
///     drift_functional,
///     diffusion_functional  general mode
///     alpha                 default: smallest kernel exponent
///     lambda                default 1
///   [initial]        kind = dirac (point) | gaussian (mean, variance) |
///                    file (path, relative to the config file)
///   [time]           T, steps
///   [engine]         kind = density | particle, particles, seed,
///                    grid_min, grid_max, grid_nodes (every axis alike)
///   [solver]         tol, max_iter, T_sub
///   [inversion]      s, f, nodes, time_nodes, half_width, threshold
///   [contraction]    horizons, alphas, dt, pair_seed
struct SolverSettings {
  double tol = 1e-6;
  std::size_t max_iter = 30;
  std::optional<double> t_sub;
};

struct RunConfig {
  Scenario scenario;
  SolverSettings solver;
  ValidationReport validation;
};

struct InversionConfig {
  CoefficientSpec spec_a;
  CoefficientSpec spec_b;
  EmpiricalMeasure mu0 = EmpiricalMeasure::dirac(std::vector<double>{0.0});
  TestFunction f;
  double s = 1.0;
  InversionOptions options;
  double threshold = 5e-3;
};

struct ContractionConfig {
  Scenario tmpl;
  std::vector<double> horizons;
  std::vector<double> alphas;
  std::uint64_t pair_seed = 7;
  ValidationReport validation;
};

/// `base_dir` resolves relative file paths. All loaders throw ConfigParse
/// for schema violations and pass on the library's validation errors
/// (DegenerateDiffusion, InvalidAlpha, ...).
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
InversionConfig parse_inversion_config(const std::string& text, const std::filesystem::path& base_dir = {});
ContractionConfig parse_contraction_config(const std::string& text,
                                           const std::filesystem::path& base_dir = {});

/// Whole file as bytes; ConfigParse if unreadable.
std::string read_config_file(const std::filesystem::path& path);

}  // namespace mkv
