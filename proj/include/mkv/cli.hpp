#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace mkv::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kSolverError = 2, kAboveThreshold = 3 };

/// Solves the scenario and writes marginals.csv, diagnostics.json and
/// run-manifest.json into `out_dir` (created if missing). A failed solve
/// still writes the last flow and its diagnostics.
int cmd_run(const std::filesystem::path& config, const std::filesystem::path& out_dir,
            std::optional<std::uint64_t> seed, std::ostream& log);

/// Writes the inversion report as JSON; kAboveThreshold if rel_gap exceeds
/// the configured threshold.
int cmd_verify_inversion(const std::filesystem::path& config, const std::filesystem::path& out,
                         std::ostream& log);

/// Writes the (T, alpha, rate) table to `out` and the fits to
/// <stem>_fit.json next to it.
int cmd_contraction(const std::filesystem::path& config, const std::filesystem::path& out, std::ostream& log);

/// Prints the distance between two measure files with 12 significant digits.
int cmd_metric(const std::filesystem::path& a, const std::filesystem::path& b, double alpha,
               const std::string& kind, std::ostream& out, std::ostream& log);

/// Hex SHA-256 of `bytes`.
std::string sha256_hex(const std::string& bytes);

/// `mkv <subcommand> ...`.
int main(int argc, char** argv);

}  // namespace mkv::cli
