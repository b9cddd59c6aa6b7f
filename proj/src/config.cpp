#include "mkv/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "call_syntax.hpp"
#include "mkv/error.hpp"
#include "mkv/measure_io.hpp"

namespace mkv {

namespace {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& msg) { throw Error(Errc::ConfigParse, msg); }

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(s);
  while (std::getline(ss, cell, sep)) out.push_back(detail::trim(cell));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  bool present() const { return tree_ != nullptr; }
  const std::string& name() const { return name_; }

  void allow(const std::set<std::string>& keys) const {
    if (!tree_) return;
    for (const auto& [key, child] : *tree_) {
      if (!keys.count(key)) fail("[" + name_ + "]: unknown key '" + key + "'");
      if (!child.empty()) fail("[" + name_ + "]: nested value under '" + key + "'");
    }
  }

  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }

  std::optional<std::string> raw(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return detail::trim(tree_->get<std::string>(key));
  }

  std::string text(const std::string& key) const {
    auto v = raw(key);
    if (!v) fail("[" + name_ + "]: missing key '" + key + "'");
    return *v;
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
  }

  double number(const std::string& key) const { return to_number(key, text(key)); }
  double number(const std::string& key, double fallback) const {
    auto v = raw(key);
    return v ? to_number(key, *v) : fallback;
  }

  std::uint64_t count(const std::string& key) const { return to_count(key, text(key)); }
  std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
    auto v = raw(key);
    return v ? to_count(key, *v) : fallback;
  }

  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& cell : split_list(text(key), ',')) out.push_back(to_number(key, cell));
    return out;
  }

  void forbid(const std::string& key, const std::string& why) const {
    if (has(key)) fail("[" + name_ + "]: '" + key + "' " + why);
  }

 private:
  double to_number(const std::string& key, const std::string& s) const {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size() || !std::isfinite(v)) {
      fail("[" + name_ + "]: '" + key + "' is not a finite number: '" + s + "'");
    }
    return v;
  }

  std::uint64_t to_count(const std::string& key, const std::string& s) const {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size() || s[0] == '-' || s[0] == '+') {
      fail("[" + name_ + "]: '" + key + "' is not a non-negative integer: '" + s + "'");
    }
    return v;
  }

  std::string name_;
  const pt::ptree* tree_;
};

class Document {
 public:
  Document(const std::string& text, const std::set<std::string>& sections) {
    std::istringstream is(text);
    try {
      pt::read_ini(is, root_);
    } catch (const pt::ini_parser_error& e) {
      fail(std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    for (const auto& [name, child] : root_) {
      if (child.empty()) fail("key '" + name + "' outside of any section");
      if (!sections.count(name)) fail("unknown section [" + name + "]");
    }
  }

  Section section(const std::string& name) const {
    const auto it = root_.find(name);
    return Section(name, it == root_.not_found() ? nullptr : &it->second);
  }

  Section required(const std::string& name) const {
    auto s = section(name);
    if (!s.present()) fail("missing section [" + name + "]");
    return s;
  }

 private:
  pt::ptree root_;
};

CoefficientSpec parse_coefficients(const Section& sec) {
  sec.allow({"mode", "dim", "drift", "sigma", "drift_functional", "diffusion_functional", "alpha", "lambda"});
  const std::string mode = sec.text("mode", "kernel");
  const std::size_t dim = sec.count("dim", 1);
  if (dim == 0) fail("[" + sec.name() + "]: dim must be positive");
  const double lambda = sec.number("lambda", 1.0);
  std::optional<double> alpha;
  if (sec.has("alpha")) alpha = sec.number("alpha");

  if (mode == "kernel") {
    sec.forbid("drift_functional", "needs mode = general");
    sec.forbid("diffusion_functional", "needs mode = general");
    auto kernels = [&](const std::string& key, std::size_t n) {
      const auto cells = split_list(sec.text(key), ';');
      if (cells.size() != n) {
        fail("[" + sec.name() + "]: '" + key + "' needs " + std::to_string(n) + " kernel(s), got " +
             std::to_string(cells.size()));
      }
      std::vector<KernelFn> out;
      for (const auto& c : cells) out.push_back(KernelFn::parse(c));
      return out;
    };
    return kernel_spec(dim, kernels("drift", dim), kernels("sigma", dim * dim), alpha, lambda);
  }
  if (mode == "general") {
    sec.forbid("drift", "needs mode = kernel");
    sec.forbid("sigma", "needs mode = kernel");
    CoefficientSpec s;
    s.dim = dim;
    s.mode = CoefficientMode::general_form;
    s.drift_functional = FunctionalFn::parse(sec.text("drift_functional"));
    s.diffusion_functional = FunctionalFn::parse(sec.text("diffusion_functional"));
    s.alpha = alpha.value_or(1.0);
    s.lambda = lambda;
    s.check();
    return s;
  }
  fail("[" + sec.name() + "]: mode must be kernel or general, got '" + mode + "'");
}

std::vector<GridAxis> engine_axes(const Section& eng, std::size_t dim) {
  const GridAxis ax{eng.number("grid_min", -8.0), eng.number("grid_max", 8.0),
                    static_cast<std::size_t>(eng.count("grid_nodes", 401))};
  return std::vector<GridAxis>(dim, ax);
}

bool engine_sets_grid(const Section& eng) {
  return eng.has("grid_min") || eng.has("grid_max") || eng.has("grid_nodes");
}

Measure read_measure_file(const fs::path& p) {
  try {
    return read_measure_csv(p);
  } catch (const Error& e) {
    if (e.code() == Errc::ParseError) fail(std::string("initial law file: ") + e.what());
    throw;
  }
}

// `axes` places a Gaussian initial law; it is only called when needed.
template <class AxesFn>
Measure parse_initial(const Section& sec, std::size_t dim, const fs::path& base, AxesFn&& axes) {
  sec.allow({"kind", "point", "mean", "variance", "path"});
  const std::string kind = sec.text("kind");
  const std::set<std::string> used = kind == "dirac"      ? std::set<std::string>{"kind", "point"}
                                     : kind == "gaussian" ? std::set<std::string>{"kind", "mean", "variance"}
                                     : kind == "file"     ? std::set<std::string>{"kind", "path"}
                                                          : std::set<std::string>{};
  if (used.empty()) fail("[initial]: kind must be dirac, gaussian or file, got '" + kind + "'");
  sec.allow(used);

  Measure m = EmpiricalMeasure::dirac(std::vector<double>{0.0});
  if (kind == "dirac") {
    const auto p = sec.numbers("point");
    if (p.size() != dim) fail("[initial]: point needs " + std::to_string(dim) + " coordinate(s)");
    m = EmpiricalMeasure::dirac(p);
  } else if (kind == "gaussian") {
    auto mean = sec.numbers("mean");
    if (mean.size() == 1) mean.assign(dim, mean[0]);
    if (mean.size() != dim) fail("[initial]: mean needs 1 or " + std::to_string(dim) + " value(s)");
    const double var = sec.number("variance");
    if (!(var > 0.0)) fail("[initial]: variance must be positive");
    m = GridDensity::from_function(axes(), [mean, var](std::span<const double> x) {
      double e = 0.0;
      for (std::size_t a = 0; a < x.size(); ++a) e += (x[a] - mean[a]) * (x[a] - mean[a]);
      return std::exp(-0.5 * e / var);
    });
  } else {
    fs::path p = sec.text("path");
    if (p.is_relative()) p = base / p;
    m = read_measure_file(p);
  }
  if (dim_of(m) != dim) {
    throw Error(Errc::DimensionMismatch, "initial law has dimension " + std::to_string(dim_of(m)) +
                                             ", coefficients have " + std::to_string(dim));
  }
  return m;
}

// Scenario parts shared by run and contraction. `initial` sets the law.
Scenario base_scenario(const Document& doc, const fs::path& base, const CoefficientSpec& spec,
                       bool contraction) {
  Scenario sc;
  sc.spec = spec;
  sc.alpha = spec.alpha;
  const auto eng = doc.section("engine");
  if (contraction) {
    eng.allow({"kind", "grid_min", "grid_max", "grid_nodes"});
    if (eng.text("kind", "density") != "density") fail("[engine]: contraction studies need kind = density");
    sc.engine = EngineKind::density;
  } else {
    if (!eng.present()) fail("missing section [engine]");
    eng.allow({"kind", "particles", "seed", "grid_min", "grid_max", "grid_nodes"});
    const std::string kind = eng.text("kind");
    if (kind == "density") {
      sc.engine = EngineKind::density;
      eng.forbid("particles", "needs kind = particle");
    } else if (kind == "particle") {
      sc.engine = EngineKind::particle;
      sc.particles = eng.count("particles", 10000);
      if (sc.particles == 0) fail("[engine]: particles must be positive");
    } else {
      fail("[engine]: kind must be density or particle, got '" + kind + "'");
    }
    sc.seed = eng.count("seed", 0);
  }

  const auto init = doc.required("initial");
  const bool is_file = init.text("kind", "") == "file";
  sc.initial = parse_initial(init, spec.dim, base, [&] { return engine_axes(eng, spec.dim); });
  if (is_file && kind_of(sc.initial) == MeasureKind::grid && engine_sets_grid(eng)) {
    fail("[engine]: grid keys conflict with the grid of the initial law file");
  }
  if (sc.engine == EngineKind::density && kind_of(sc.initial) != MeasureKind::grid) {
    fail("[initial]: the density engine needs a gaussian or a grid file initial law");
  }
  return sc;
}

}  // namespace

std::string read_config_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::ConfigParse, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  const Document doc(text, {"coefficients", "initial", "time", "engine", "solver"});
  RunConfig cfg;
  const auto spec = parse_coefficients(doc.required("coefficients"));
  cfg.scenario = base_scenario(doc, base_dir, spec, false);

  const auto time = doc.required("time");
  time.allow({"T", "steps"});
  const double horizon = time.number("T");
  const auto steps = time.count("steps");
  if (!(horizon > 0.0) || steps == 0) fail("[time]: T and steps must be positive");
  cfg.scenario.grid = TimeGrid(horizon, steps);

  const auto solver = doc.section("solver");
  solver.allow({"tol", "max_iter", "T_sub"});
  cfg.solver.tol = solver.number("tol", 1e-6);
  cfg.solver.max_iter = solver.count("max_iter", 30);
  if (!(cfg.solver.tol > 0.0) || cfg.solver.max_iter == 0) fail("[solver]: tol and max_iter must be positive");
  if (solver.has("T_sub")) {
    cfg.solver.t_sub = solver.number("T_sub");
    if (!(*cfg.solver.t_sub > 0.0) || *cfg.solver.t_sub > horizon) fail("[solver]: T_sub must lie in (0, T]");
  }

  cfg.scenario.check();
  cfg.validation = validate_spec(spec, 1000);
  return cfg;
}

InversionConfig parse_inversion_config(const std::string& text, const fs::path& base_dir) {
  const Document doc(text, {"mu", "nu", "initial", "inversion"});
  InversionConfig cfg;
  cfg.spec_a = parse_coefficients(doc.required("mu"));
  cfg.spec_b = parse_coefficients(doc.required("nu"));
  if (cfg.spec_a.dim != 1 || cfg.spec_b.dim != 1) fail("verify-inversion supports dim = 1");

  const auto init = doc.required("initial");
  if (init.text("kind") == "gaussian") fail("[initial]: verify-inversion needs a dirac or file initial law");
  cfg.mu0 = to_empirical(parse_initial(init, 1, base_dir, [] { return std::vector<GridAxis>{}; }));

  const auto inv = doc.required("inversion");
  inv.allow({"s", "f", "nodes", "time_nodes", "half_width", "threshold"});
  cfg.s = inv.number("s");
  cfg.f = TestFunction::parse(inv.text("f"));
  cfg.options.nodes = inv.count("nodes", cfg.options.nodes);
  cfg.options.time_nodes = inv.count("time_nodes", cfg.options.time_nodes);
  cfg.options.half_width = inv.number("half_width", 0.0);
  cfg.threshold = inv.number("threshold", 5e-3);
  if (!(cfg.s > 0.0)) fail("[inversion]: s must be positive");
  if (cfg.threshold < 0.0) fail("[inversion]: threshold must be non-negative");
  if (cfg.options.half_width < 0.0) fail("[inversion]: half_width must be non-negative");

  validate_spec(cfg.spec_a, 1000);
  validate_spec(cfg.spec_b, 1000);
  return cfg;
}

ContractionConfig parse_contraction_config(const std::string& text, const fs::path& base_dir) {
  const Document doc(text, {"coefficients", "initial", "engine", "contraction"});
  ContractionConfig cfg;
  const auto spec = parse_coefficients(doc.required("coefficients"));
  cfg.tmpl = base_scenario(doc, base_dir, spec, true);

  const auto sec = doc.required("contraction");
  sec.allow({"horizons", "alphas", "dt", "pair_seed"});
  cfg.horizons = sec.numbers("horizons");
  cfg.alphas = sec.numbers("alphas");
  for (double t : cfg.horizons) {
    if (!(t > 0.0)) fail("[contraction]: horizons must be positive");
  }
  for (double a : cfg.alphas) {
    if (!(a > 0.0 && a <= 1.0)) fail("[contraction]: alphas must lie in (0, 1]");
  }
  const double dt = sec.number("dt");
  if (!(dt > 0.0)) fail("[contraction]: dt must be positive");
  cfg.tmpl.grid = TimeGrid(dt, 1);
  cfg.pair_seed = sec.count("pair_seed", 7);

  cfg.tmpl.check();
  cfg.validation = validate_spec(spec, 1000);
  return cfg;
}

}  // namespace mkv
