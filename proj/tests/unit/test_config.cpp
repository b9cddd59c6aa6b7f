#include <doctest.h>

#include <regex>

#include "mkv/config.hpp"
#include "mkv/error.hpp"
#include "mkv/measure_io.hpp"
#include "unit/temp_dir.hpp"

using namespace mkv;

namespace {

const std::string kOu = R"([coefficients]
drift = linear_mean_field(kappa=1)
sigma = constant(value=1)

[initial]
kind = gaussian
mean = 1
variance = 0.25

[time]
T = 1
steps = 200

[engine]
kind = density
grid_min = -4
grid_max = 6
grid_nodes = 201

[solver]
tol = 1e-6
max_iter = 30
)";

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Numerical;
}

Errc run_code(const std::string& text) {
  return code_of([&] { parse_run_config(text); });
}

}  // namespace

TEST_CASE("run config: mean-field OU") {
  const auto cfg = parse_run_config(kOu);
  const auto& sc = cfg.scenario;
  CHECK(sc.engine == EngineKind::density);
  CHECK(sc.grid.horizon() == 1.0);
  CHECK(sc.grid.steps() == 200);
  CHECK(sc.spec.dim == 1);
  CHECK(sc.spec.b[0].type() == KernelType::linear_mean_field);
  CHECK(sc.alpha == 1.0);
  CHECK(cfg.solver.tol == 1e-6);
  CHECK(cfg.solver.max_iter == 30);
  CHECK_FALSE(cfg.solver.t_sub.has_value());
  const auto& g = std::get<GridDensity>(sc.initial);
  CHECK(g.axes()[0] == GridAxis{-4.0, 6.0, 201});
  CHECK(to_empirical(g).mean()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cfg.validation.pass);

  // defaults
  const auto d = parse_run_config(replace(kOu, "tol = 1e-6\nmax_iter = 30\n", "T_sub = 0.25\n"));
  CHECK(d.solver.tol == 1e-6);
  CHECK(d.solver.max_iter == 30);
  CHECK(*d.solver.t_sub == 0.25);
}

TEST_CASE("run config: particle engine, two dimensions, general form") {
  const std::string text = R"([coefficients]
dim = 2
drift = linear_mean_field(kappa=1); trig(amp=0.5)
sigma = constant(value=1); constant(value=0); constant(value=0); holder_bump(exponent=0.5, cap=1, scale=0.2, offset=1)
lambda = 0.5

[initial]
kind = dirac
point = 0.5, -1

[time]
T = 0.5
steps = 10

[engine]
kind = particle
particles = 1000
seed = 17
)";
  const auto cfg = parse_run_config(text);
  CHECK(cfg.scenario.engine == EngineKind::particle);
  CHECK(cfg.scenario.particles == 1000);
  CHECK(cfg.scenario.seed == 17);
  CHECK(cfg.scenario.spec.dim == 2);
  CHECK(cfg.scenario.spec.sigma.size() == 4);
  CHECK(cfg.scenario.alpha == 0.5);
  CHECK(cfg.scenario.spec.lambda == 0.5);
  const auto& init = std::get<EmpiricalMeasure>(cfg.scenario.initial);
  CHECK(init.point(0)[1] == -1.0);

  const std::string general = R"([coefficients]
mode = general
drift_functional = tanh_mean_reversion(scale=1, gain=2)
diffusion_functional = constant_volatility(value=0.7)
alpha = 0.75

[initial]
kind = dirac
point = 0

[time]
T = 1
steps = 4

[engine]
kind = particle
)";
  const auto g = parse_run_config(general);
  CHECK(g.scenario.spec.mode == CoefficientMode::general_form);
  CHECK(g.scenario.alpha == 0.75);
  CHECK(g.scenario.particles == 10000);
  CHECK(g.scenario.seed == 0);
}

TEST_CASE("run config: initial law from a file") {
  TempDir dir;
  write_measure_csv(dir / "mu0.csv", EmpiricalMeasure(1, {0.0, 1.0}, {1.0, 1.0}));
  const std::string particle = replace(replace(kOu, "kind = gaussian\nmean = 1\nvariance = 0.25", "kind = file\npath = mu0.csv"),
                                       "kind = density\ngrid_min = -4\ngrid_max = 6\ngrid_nodes = 201",
                                       "kind = particle\nparticles = 10");
  const auto cfg = parse_run_config(particle, dir.path());
  CHECK(std::get<EmpiricalMeasure>(cfg.scenario.initial).size() == 2);
  // relative paths resolve against the config directory only
  CHECK(code_of([&] { parse_run_config(particle, dir / "elsewhere"); }) == Errc::ConfigParse);

  const auto grid = GridDensity::from_function({GridAxis{-3.0, 5.0, 161}}, [](std::span<const double> x) {
    return std::exp(-2.0 * (x[0] - 1.0) * (x[0] - 1.0));
  });
  write_measure_csv(dir / "grid.csv", grid);
  const std::string density = replace(kOu, "kind = gaussian\nmean = 1\nvariance = 0.25", "kind = file\npath = grid.csv");
  // the grid comes from the file
  CHECK(code_of([&] { parse_run_config(density, dir.path()); }) == Errc::ConfigParse);
  const auto from_file = parse_run_config(
      replace(density, "grid_min = -4\ngrid_max = 6\ngrid_nodes = 201\n", ""), dir.path());
  CHECK(std::get<GridDensity>(from_file.scenario.initial).axes()[0] == GridAxis{-3.0, 5.0, 161});
  // empirical file on the density engine
  CHECK(code_of([&] { parse_run_config(replace(replace(density, "grid.csv", "mu0.csv"), "grid_min = -4\ngrid_max = 6\ngrid_nodes = 201\n", ""), dir.path()); }) ==
        Errc::ConfigParse);
}

TEST_CASE("run config: strict schema") {
  CHECK(run_code(kOu + "extra = 1\n") == Errc::ConfigParse);
  CHECK(run_code(kOu + "[output]\npath = x\n") == Errc::ConfigParse);
  CHECK(run_code("stray = 1\n" + kOu) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "[time]\nT = 1\nsteps = 200\n", "")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "steps = 200", "steps = 200.5")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "steps = 200", "steps = -3")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "T = 1", "T = one")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "T = 1", "T = nan")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "T = 1", "T = 0")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "T = 1", "T = 1\nT = 2")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "variance = 0.25", "variance = 0.25\npoint = 0")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "kind = gaussian", "kind = uniform")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "kind = density", "kind = quantum")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "kind = density", "kind = density\nparticles = 10")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "kind = gaussian\nmean = 1\nvariance = 0.25", "kind = dirac\npoint = 0")) ==
        Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "max_iter = 30", "max_iter = 30\nT_sub = 2")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "sigma = constant(value=1)", "sigma = constant(value=1); constant(value=1)")) ==
        Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "sigma = constant(value=1)", "sigma = constant(value=1\n")) == Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "drift = linear", "drift_functional = constant_drift(value=1)\ndrift = linear")) ==
        Errc::ConfigParse);
  CHECK(run_code(replace(kOu, "drift = linear", "mode = mixed\ndrift = linear")) == Errc::ConfigParse);
  CHECK(run_code(kOu + "[coefficients]\nlambda = 2\n") == Errc::ConfigParse);
}

TEST_CASE("run config: validation errors") {
  CHECK(run_code(replace(kOu, "sigma = constant(value=1)", "sigma = constant(value=0)")) ==
        Errc::DegenerateDiffusion);
  CHECK(run_code(replace(kOu, "sigma = constant(value=1)", "sigma = constant(value=1)\nalpha = 1.5")) ==
        Errc::InvalidAlpha);
  CHECK(run_code(replace(kOu, "drift = linear_mean_field(kappa=1)", "drift = linear_mean_field(rate=1)")) ==
        Errc::InvalidArgument);
  CHECK(run_code(replace(kOu, "grid_nodes = 201", "grid_nodes = 3")) == Errc::InvalidArgument);
}

TEST_CASE("inversion config") {
  const std::string text = R"([mu]
drift = constant(value=0)
sigma = constant(value=1)

[nu]
drift = constant(value=0.3)
sigma = constant(value=1)

[initial]
kind = dirac
point = 0

[inversion]
s = 1
f = holder_power(exponent=0.5, radius=1)
)";
  const auto cfg = parse_inversion_config(text);
  CHECK(cfg.threshold == 5e-3);
  CHECK(cfg.s == 1.0);
  CHECK(cfg.options.nodes == 401);
  CHECK(cfg.options.time_nodes == 64);
  CHECK(cfg.f(0.25) == doctest::Approx(0.5));
  CHECK(cfg.f(9.0) == doctest::Approx(1.0));
  CHECK(cfg.spec_b.b[0](0.0, std::vector<double>{0.0}, std::vector<double>{0.0}, 0) == 0.3);
  CHECK(cfg.mu0.size() == 1);

  auto code = [&](const std::string& t) { return code_of([&] { parse_inversion_config(t); }); };
  CHECK(parse_inversion_config(text + "threshold = 0\n").threshold == 0.0);
  CHECK(code(text + "horizon = 1\n") == Errc::ConfigParse);
  CHECK(code(replace(text, "[nu]", "[other]")) == Errc::ConfigParse);
  CHECK(code(replace(text, "kind = dirac\npoint = 0", "kind = gaussian\nmean = 0\nvariance = 1")) ==
        Errc::ConfigParse);
  CHECK(code(replace(text, "f = holder_power(exponent=0.5, radius=1)", "f = sawtooth(width=1)")) ==
        Errc::InvalidArgument);
  CHECK(code(replace(text, "s = 1", "s = -1")) == Errc::ConfigParse);
}

TEST_CASE("contraction config") {
  const std::string text = R"([coefficients]
drift = constant(value=0)
sigma = holder_bump(exponent=1, cap=5, scale=0.1, offset=0.2)
lambda = 0.04

[initial]
kind = gaussian
mean = 0
variance = 0.0004

[engine]
grid_min = -2
grid_max = 2
grid_nodes = 401

[contraction]
horizons = 0.05, 0.1, 0.2, 0.4
alphas = 0.5, 1
dt = 0.0025
)";
  const auto cfg = parse_contraction_config(text);
  CHECK(cfg.horizons == std::vector<double>{0.05, 0.1, 0.2, 0.4});
  CHECK(cfg.alphas == std::vector<double>{0.5, 1.0});
  CHECK(cfg.pair_seed == 7);
  CHECK(cfg.tmpl.grid.dt() == 0.0025);
  CHECK(cfg.tmpl.engine == EngineKind::density);
  CHECK(cfg.validation.pass);

  auto code = [&](const std::string& t) { return code_of([&] { parse_contraction_config(t); }); };
  CHECK(code(replace(text, "alphas = 0.5, 1", "alphas = 0.5, 2")) == Errc::ConfigParse);
  CHECK(code(replace(text, "alphas = 0.5, 1", "alphas = 0.5,")) == Errc::ConfigParse);
  CHECK(code(replace(text, "horizons = 0.05,", "horizons = -0.05,")) == Errc::ConfigParse);
  CHECK(code(replace(text, "[engine]", "[engine]\nkind = particle")) == Errc::ConfigParse);
  CHECK(code(replace(text, "[engine]", "[engine]\nseed = 1")) == Errc::ConfigParse);
  CHECK(code(text + "[time]\nT = 1\n") == Errc::ConfigParse);
}
