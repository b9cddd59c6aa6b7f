#include "mkv/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "mkv/config.hpp"
#include "mkv/engine.hpp"
#include "mkv/error.hpp"
#include "mkv/fixpoint.hpp"
#include "mkv/kernels.hpp"
#include "mkv/measure_io.hpp"

namespace mkv::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw Error(Errc::InvalidArgument, "cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json diagnostics_json(const PicardDiagnostics& d) {
  return json{{"iterations", d.iterations}, {"distances", d.distances}, {"rates", d.rates},
              {"converged", d.converged}};
}

// Chained windows: totals on top, one entry per window below.
json chain_json(const std::vector<PicardDiagnostics>& windows, const std::vector<double>& ends) {
  PicardDiagnostics total;
  total.converged = true;
  json per = json::array();
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& d = windows[w];
    total.iterations += d.iterations;
    total.distances.insert(total.distances.end(), d.distances.begin(), d.distances.end());
    total.rates.insert(total.rates.end(), d.rates.begin(), d.rates.end());
    total.converged = total.converged && d.converged;
    json j = diagnostics_json(d);
    j["t_end"] = ends[w];
    per.push_back(j);
  }
  json out = diagnostics_json(total);
  out["windows"] = per;
  return out;
}

void write_marginals(const fs::path& path, const MeasureFlow& flow) {
  std::ofstream os(path, std::ios::binary);
  write_marginals_csv(os, flow);
  if (!os) throw Error(Errc::InvalidArgument, "cannot write " + path.string());
}

// Config stage: any failure is a config error.
template <class F>
auto load(const fs::path& config, std::ostream& log, F&& parse) -> std::optional<decltype(parse(""))> {
  try {
    return parse(read_config_file(config));
  } catch (const Error& e) {
    log << "config error [" << to_string(e.code()) << "]: " << e.what() << '\n';
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << '\n';
  }
  return std::nullopt;
}

int solver_failure(const std::exception& e, std::ostream& log) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    log << "solver error [" << to_string(err->code()) << "]: " << err->what() << '\n';
  } else {
    log << "solver error: " << e.what() << '\n';
  }
  return kSolverError;
}

void warn_validation(const ValidationReport& r, std::ostream& log) {
  if (!r.pass) {
    log << "warning: coefficient validation failed (sampled lambda " << r.lambda_hat << ", holder ratio "
        << r.holder_ratio << ", bound ratio " << r.bound_ratio << ")\n";
  }
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::Numerical, "SHA-256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

int cmd_run(const fs::path& config, const fs::path& out_dir, std::optional<std::uint64_t> seed,
            std::ostream& log) {
  std::string bytes;
  const auto cfg = load(config, log, [&](const std::string& text) {
    bytes = text;
    return parse_run_config(text, config.parent_path());
  });
  if (!cfg) return kConfigError;
  warn_validation(cfg->validation, log);
  Scenario sc = cfg->scenario;
  if (seed) sc.seed = *seed;

  try {
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    log << "cannot create " << out_dir << ": " << e.what() << '\n';
    return kConfigError;
  }

  json manifest{{"command", "run"},
                {"config", config.string()},
                {"config_sha256", sha256_hex(bytes)},
                {"seed", sc.seed},
                {"engine", sc.engine == EngineKind::density ? "density" : "particle"},
                {"T", sc.grid.horizon()},
                {"steps", sc.grid.steps()},
                {"tol", cfg->solver.tol},
                {"max_iter", cfg->solver.max_iter}};
  if (sc.engine == EngineKind::particle) manifest["particles"] = sc.particles;
  if (cfg->solver.t_sub) manifest["T_sub"] = *cfg->solver.t_sub;

  int code = kOk;
  try {
    write_json(out_dir / "run-manifest.json", manifest);
    const bool chained = cfg->solver.t_sub && *cfg->solver.t_sub < sc.grid.horizon();
    if (chained) {
      const auto res = chain_solve(sc, sc.grid.horizon(), *cfg->solver.t_sub, cfg->solver.tol, cfg->solver.max_iter);
      write_marginals(out_dir / "marginals.csv", res.flow);
      write_json(out_dir / "diagnostics.json", chain_json(res.windows, res.window_ends));
    } else {
      const auto res = solve_fixed_point(sc, cfg->solver.tol, cfg->solver.max_iter);
      write_marginals(out_dir / "marginals.csv", res.flow);
      write_json(out_dir / "diagnostics.json", diagnostics_json(res.diagnostics));
    }
  } catch (const MaxIterationsError& e) {
    log << "solver error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    try {
      write_marginals(out_dir / "marginals.csv", e.last_flow());
      write_json(out_dir / "diagnostics.json", diagnostics_json(e.diagnostics()));
    } catch (const std::exception& w) {
      log << w.what() << '\n';
    }
    code = kSolverError;
  } catch (const std::exception& e) {
    code = solver_failure(e, log);
  }
  return code;
}

int cmd_verify_inversion(const fs::path& config, const fs::path& out, std::ostream& log) {
  const auto cfg = load(config, log, [&](const std::string& text) {
    return parse_inversion_config(text, config.parent_path());
  });
  if (!cfg) return kConfigError;

  InversionReport rep;
  try {
    // measure-dependent coefficients are frozen at the initial law
    const auto flow = MeasureFlow::constant({0.0, cfg->s}, cfg->mu0);
    rep = verify_inversion(cfg->spec_a, cfg->spec_b, flow, flow, cfg->mu0, cfg->f, cfg->s, cfg->options);
  } catch (const std::exception& e) {
    return solver_failure(e, log);
  }
  const json j{{"lhs", rep.lhs},
               {"rhs", rep.rhs},
               {"abs_gap", rep.abs_gap},
               {"rel_gap", rep.rel_gap},
               {"params",
                {{"s", rep.s},
                 {"f", cfg->f.to_string()},
                 {"mu", cfg->spec_a.describe()},
                 {"nu", cfg->spec_b.describe()},
                 {"nodes", rep.nodes},
                 {"time_nodes", rep.time_nodes},
                 {"dx", rep.dx},
                 {"domain_min", rep.domain_min},
                 {"domain_max", rep.domain_max},
                 {"exact_gaussian", rep.exact_gaussian},
                 {"threshold", cfg->threshold}}}};
  try {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_json(out, j);
  } catch (const std::exception& e) {
    log << e.what() << '\n';
    return kConfigError;
  }
  if (rep.rel_gap > cfg->threshold) {
    log << "rel_gap " << rep.rel_gap << " exceeds threshold " << cfg->threshold << '\n';
    return kAboveThreshold;
  }
  return kOk;
}

int cmd_contraction(const fs::path& config, const fs::path& out, std::ostream& log) {
  const auto cfg = load(config, log, [&](const std::string& text) {
    return parse_contraction_config(text, config.parent_path());
  });
  if (!cfg) return kConfigError;
  warn_validation(cfg->validation, log);

  std::vector<ContractionEstimate> est;
  try {
    for (double a : cfg->alphas) est.push_back(estimate_contraction(cfg->tmpl, a, cfg->horizons, cfg->pair_seed));
  } catch (const std::exception& e) {
    return solver_failure(e, log);
  }

  std::string table = "T,alpha,rate\n";
  json fits = json::array();
  char buf[96];
  for (std::size_t i = 0; i < est.size(); ++i) {
    for (std::size_t h = 0; h < est[i].horizons.size(); ++h) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", est[i].horizons[h], cfg->alphas[i], est[i].rates[h]);
      table += buf;
    }
    json f{{"alpha", cfg->alphas[i]}, {"horizons", est[i].horizons}, {"rates", est[i].rates}};
    if (est[i].slope) {
      f["slope"] = *est[i].slope;
      f["intercept"] = *est[i].intercept;
    }
    fits.push_back(f);
  }
  try {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text(out, table);
    write_json(out.parent_path() / (out.stem().string() + "_fit.json"),
               json{{"pair_seed", cfg->pair_seed}, {"dt", cfg->tmpl.grid.dt()}, {"fits", fits}});
  } catch (const std::exception& e) {
    log << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}

int cmd_metric(const fs::path& a, const fs::path& b, double alpha, const std::string& kind, std::ostream& out,
               std::ostream& log) {
  try {
    MetricKind k;
    if (kind == "bl") {
      k = MetricKind::bounded_lipschitz;
    } else if (kind == "w") {
      k = MetricKind::wasserstein;
    } else {
      throw Error(Errc::InvalidArgument, "kind must be bl or w");
    }
    const Measure ma = read_measure_csv(a);
    const Measure mb = read_measure_csv(b);
    const double v = measure_distance(ma, mb, alpha, k);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    out << buf << '\n';
    return kOk;
  } catch (const Error& e) {
    log << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
  }
  return kConfigError;
}

int main(int argc, char** argv) {
  CLI::App app{"McKean-Vlasov fixed-point solver and verification harness", "mkv"};
  app.require_subcommand(1);

  std::string config, out, file_a, file_b, kind;
  std::optional<std::uint64_t> seed;
  double alpha = 1.0;

  auto* run = app.add_subcommand("run", "Solve a scenario");
  run->add_option("--config", config, "Scenario file")->required();
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--seed", seed, "Override the engine seed");

  auto* inv = app.add_subcommand("verify-inversion", "Check both sides of the inversion identity");
  inv->add_option("--config", config, "Scenario file")->required();
  inv->add_option("--out", out, "Report file (JSON)")->required();

  auto* con = app.add_subcommand("contraction", "Measure Picard contraction rates");
  con->add_option("--config", config, "Scenario file")->required();
  con->add_option("--out", out, "Table file (CSV)")->required();

  auto* met = app.add_subcommand("metric", "Distance between two measure files");
  met->add_option("--a", file_a, "First measure (CSV)")->required();
  met->add_option("--b", file_b, "Second measure (CSV)")->required();
  met->add_option("--alpha", alpha, "Hoelder exponent in (0, 1]")->required();
  met->add_option("--kind", kind, "bl or w")->required()->check(CLI::IsMember({"bl", "w"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*run) return cmd_run(config, out, seed, std::cerr);
  if (*inv) return cmd_verify_inversion(config, out, std::cerr);
  if (*con) return cmd_contraction(config, out, std::cerr);
  return cmd_metric(file_a, file_b, alpha, kind, std::cout, std::cerr);
}

}  // namespace mkv::cli
