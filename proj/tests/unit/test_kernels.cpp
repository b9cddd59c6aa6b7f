#include <doctest.h>

#include <cmath>
#include <random>

#include "mkv/error.hpp"
#include "mkv/kernels.hpp"
#include "oracles/gauss_oracles.hpp"

using namespace mkv;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Numerical;
}

MeasureFlow dirac_flow(double horizon) {
  return MeasureFlow::constant({0.0, horizon}, Measure(EmpiricalMeasure::dirac(std::vector<double>{0.0})));
}

double gauss(double y, double m, double var) {
  return std::exp(-0.5 * (y - m) * (y - m) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

const GridAxis kAxis{-8.0, 8.0, 401};

// OU drift -x through the Euler step matrices
CoefficientSpec ou_spec() {
  return kernel_spec(1, {KernelFn::parse("linear(cx=-1)")}, {KernelFn::constant(1.0)});
}

}  // namespace

TEST_CASE("test function registry") {
  auto f = TestFunction::parse("holder_power(exponent=0.5, radius=1)");
  CHECK(f(0.25) == doctest::Approx(0.5));
  CHECK(f(-9.0) == 1.0);
  CHECK(f.breakpoints.size() == 3);
  CHECK(TestFunction::parse(f.to_string()).params == f.params);
  CHECK(TestFunction::parse("quadratic(a=2, center=1)")(3.0) == doctest::Approx(8.0));
  CHECK(TestFunction::parse("gaussian_bump(width=2)")(2.0) == doctest::Approx(std::exp(-0.5)));
  CHECK(code_of([] { TestFunction::parse("cubic"); }) == Errc::InvalidArgument);
  CHECK(code_of([] { TestFunction::parse("linear(b=1)"); }) == Errc::InvalidArgument);
  CHECK(code_of([] { TestFunction::parse("holder_power(radius=0)"); }) == Errc::InvalidArgument);
  CHECK(code_of([] { TestFunction::parse("linear(slope=)"); }) == Errc::ConfigParse);
}

TEST_CASE("field interpolation and Gaussian expectations") {
  std::vector<double> v(kAxis.nodes);
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double x = kAxis.node(k);
    v[k] = x * x * x - x;
  }
  FieldOnGrid g(kAxis, v);
  CHECK(g.interpolate(0.123) == doctest::Approx(0.123 * 0.123 * 0.123 - 0.123).epsilon(1e-12));
  // E (m + sZ)^3 - (m + sZ) = m^3 + 3 m s^2 - m
  const double m = 0.7;
  for (double var : {1e-4, 0.01, 0.5}) {
    CHECK(gaussian_expectation(g, m, var) ==
          doctest::Approx(m * m * m + 3.0 * m * var - m).epsilon(1e-9));
  }
  auto f = TestFunction::parse("holder_power(exponent=0.5, radius=1)");
  const auto fs = FieldOnGrid::sample(kAxis, f);
  const double want = oracle::gauss_integral(f.fn, 0.3, 0.8, f.breakpoints);
  CHECK(gaussian_expectation(fs, 0.3, 0.64) == doctest::Approx(want).epsilon(1e-10));
  CHECK(code_of([] { FieldOnGrid(kAxis, std::vector<double>(3)); }) == Errc::GridMismatch);
}

TEST_CASE("push_forward examples") {
  const auto flow = dirac_flow(1.0);
  const auto d0 = EmpiricalMeasure::dirac(std::vector<double>{0.0});
  TransitionKernel heat(constant_spec({0.0}, {1.0}), flow, kAxis, TimeGrid(1.0, 20));
  for (double s : {0.25, 1.0}) {
    const auto rho = push_forward(heat, d0, s);
    double err = 0.0;
    for (std::size_t k = 0; k < kAxis.nodes; ++k) {
      err = std::max(err, std::abs(rho.values()[k] - gauss(kAxis.node(k), 0.0, s)));
    }
    CHECK(err <= 1e-3);
  }
  TransitionKernel drift(constant_spec({0.4}, {1.0}), flow, kAxis, TimeGrid(1.0, 20));
  const auto rd = push_forward(drift, d0, 0.5);
  double err = 0.0;
  for (std::size_t k = 0; k < kAxis.nodes; ++k) {
    err = std::max(err, std::abs(rd.values()[k] - gauss(kAxis.node(k), 0.2, 0.5)));
  }
  CHECK(err <= 1e-3);

  // gridded N(0, 1) start
  const GridAxis wide{-10.0, 10.0, 401};
  TransitionKernel heat2(constant_spec({0.0}, {1.0}), flow, wide, TimeGrid(1.0, 20));
  std::vector<double> rho0(wide.nodes);
  for (std::size_t k = 0; k < wide.nodes; ++k) rho0[k] = gauss(wide.node(k), 0.0, 1.0);
  const auto r1 = heat2.apply_forward(rho0, 0.0, 0.6);
  err = 0.0;
  for (std::size_t k = 0; k < wide.nodes; ++k) {
    err = std::max(err, std::abs(r1[k] - gauss(wide.node(k), 0.0, 1.6)));
  }
  CHECK(err <= 1e-3);

  CHECK(code_of([&] { push_forward(heat, EmpiricalMeasure::dirac(std::vector<double>{7.5}), 1.0); }) ==
        Errc::OutOfDomain);
  CHECK(code_of([&] { push_forward(heat, d0, 1.5); }) == Errc::OutOfDomain);
}

TEST_CASE("Euler path push_forward and OU variance") {
  // The Euler chain X' = (1 - dt) X + sqrt(dt) Z has variance sum (1 - dt)^{2j} dt.
  const std::size_t steps = 50;
  const double dt = 1.0 / steps;
  TransitionKernel k(ou_spec(), dirac_flow(1.0), kAxis, TimeGrid(1.0, steps));
  CHECK_FALSE(k.exact_gaussian());
  const auto rho = push_forward(k, EmpiricalMeasure::dirac(std::vector<double>{1.0}), 1.0);
  double mean = 0.0;
  double second = 0.0;
  for (std::size_t i = 0; i < kAxis.nodes; ++i) {
    const double w = kAxis.weight(i) * rho.values()[i];
    mean += w * kAxis.node(i);
    second += w * kAxis.node(i) * kAxis.node(i);
  }
  double var = 0.0;
  for (std::size_t j = 0; j < steps; ++j) var += std::pow(1.0 - dt, 2.0 * j) * dt;
  CHECK(mean == doctest::Approx(std::pow(1.0 - dt, steps)).epsilon(1e-9));
  CHECK(second - mean * mean == doctest::Approx(var).epsilon(1e-8));
}

TEST_CASE("pull_back examples") {
  const auto flow = dirac_flow(1.0);
  TransitionKernel heat(constant_spec({0.0}, {1.0}), flow, kAxis, TimeGrid(1.0, 20));
  TransitionKernel ou(ou_spec(), flow, kAxis, TimeGrid(1.0, 20));
  for (const TransitionKernel* k : {&heat, &ou}) {
    auto one = pull_back(*k, FieldOnGrid::sample(kAxis, TestFunction::parse("constant(value=1)")), 0.2, 1.0);
    for (std::size_t i = one.lo(); i <= one.hi(); ++i) CHECK(one[i] == doctest::Approx(1.0).epsilon(1e-8));
    // grid-valued input gets an unreliable band
    auto onegrid = pull_back(*k, FieldOnGrid(kAxis, std::vector<double>(kAxis.nodes, 1.0)), 0.2, 1.0);
    CHECK(onegrid.lo() > 0);
    for (std::size_t i = onegrid.lo(); i <= onegrid.hi(); ++i) {
      CHECK(onegrid[i] == doctest::Approx(1.0).epsilon(1e-8));
    }
  }
  const double t = 0.3;
  const double s = 0.9;
  auto lin = pull_back(heat, FieldOnGrid::sample(kAxis, TestFunction::parse("linear")), t, s);
  auto sq = pull_back(heat, FieldOnGrid::sample(kAxis, TestFunction::parse("quadratic")), t, s);
  double e1 = 0.0;
  double e2 = 0.0;
  for (std::size_t i = lin.lo(); i <= lin.hi(); ++i) {
    const double x = kAxis.node(i);
    e1 = std::max(e1, std::abs(lin[i] - x));
    e2 = std::max(e2, std::abs(sq[i] - (x * x + (s - t))));
  }
  CHECK(e1 <= 1e-4);
  CHECK(e2 <= 1e-3);

  // Euler OU: E[X_s | X_t = x] = x (1 - dt)^n exactly for the discrete chain
  auto olin = pull_back(ou, FieldOnGrid::sample(kAxis, TestFunction::parse("linear")), 0.2, 1.0);
  CHECK(olin.hi() > olin.lo());
  double e3 = 0.0;
  for (std::size_t i = olin.lo(); i <= olin.hi(); ++i) {
    e3 = std::max(e3, std::abs(olin[i] - kAxis.node(i) * std::pow(1.0 - 0.05, 16)));
  }
  CHECK(e3 <= 1e-9);

  CHECK(code_of([&] { pull_back(heat, lin, 0.8, 0.5); }) == Errc::ReversedTimes);
  CHECK(code_of([&] { pull_back(ou, lin, 0.21, 0.5); }) == Errc::GridMismatch);
  CHECK(code_of([&] { pull_back(heat, lin, 0.5, 2.0); }) == Errc::OutOfDomain);
  const GridAxis other{-4.0, 4.0, 101};
  CHECK(code_of([&] { pull_back(heat, FieldOnGrid(other, std::vector<double>(101, 1.0)), 0.2, 0.5); }) ==
        Errc::GridMismatch);
}

TEST_CASE("kernel positivity, unit mass and Chapman-Kolmogorov") {
  const auto flow = dirac_flow(1.0);
  TransitionKernel ou(ou_spec(), flow, kAxis, TimeGrid(1.0, 20));
  CHECK(std::abs(ou.min_interior_row_mass() - 1.0) <= 1e-8);
  for (std::size_t node : {100, 200, 260}) {
    for (auto [t, s] : {std::pair{0.0, 0.05}, std::pair{0.0, 0.5}, std::pair{0.25, 1.0}}) {
      const auto p = ou.density_from(node, t, s);
      double mass = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(p[i] >= 0.0);
        mass += kAxis.weight(i) * p[i];
      }
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
    }
  }

  // constant coefficients: P_{t,u} P_{u,s} f = P_{t,s} f
  TransitionKernel k(constant_spec({0.2}, {1.3}), flow, kAxis, TimeGrid(1.0, 20));
  const auto f = FieldOnGrid::sample(kAxis, TestFunction::parse("gaussian_bump(width=0.7, center=0.5)"));
  const auto direct = pull_back(k, f, 0.1, 0.9);
  const auto inner = pull_back(k, f, 0.45, 0.9);
  const auto outer = pull_back(k, FieldOnGrid(kAxis, inner.values()), 0.1, 0.45);
  double err = 0.0;
  for (std::size_t i = outer.lo(); i <= outer.hi(); ++i) err = std::max(err, std::abs(outer[i] - direct[i]));
  CHECK(outer.hi() > outer.lo());
  CHECK(err <= 1e-6);

  // densities compose the same way
  const auto p02 = k.density_from(200, 0.1, 0.9);
  const auto p01 = k.density_from(200, 0.1, 0.45);
  const auto p12 = k.apply_forward(p01, 0.45, 0.9);
  err = 0.0;
  for (std::size_t i = 0; i < p02.size(); ++i) err = std::max(err, std::abs(p02[i] - p12[i]));
  CHECK(err <= 1e-6);
}

TEST_CASE("pull_back_derivative examples") {
  const auto flow = dirac_flow(1.0);
  TransitionKernel k(constant_spec({0.0}, {0.8}), flow, kAxis, TimeGrid(1.0, 10));
  const auto d_lin = pull_back_derivative(k, FieldOnGrid::sample(kAxis, TestFunction::parse("linear(slope=2)")),
                                          0.2, 0.9, 2);
  TransitionKernel heat(constant_spec({0.0}, {1.0}), flow, kAxis, TimeGrid(1.0, 10));
  const auto d_sq = pull_back_derivative(heat, FieldOnGrid::sample(kAxis, TestFunction::parse("quadratic")),
                                         0.2, 0.9, 2);
  const auto d1_sq = pull_back_derivative(heat, FieldOnGrid::sample(kAxis, TestFunction::parse("quadratic")),
                                          0.2, 0.9, 1);
  for (std::size_t i = d_lin.lo(); i <= d_lin.hi(); ++i) {
    CHECK(std::abs(d_lin[i]) <= 1e-3);
    CHECK(std::abs(d_sq[i] - 2.0) <= 1e-2);
    CHECK(d1_sq[i] == doctest::Approx(2.0 * kAxis.node(i)).epsilon(1e-6));
  }
  CHECK(code_of([&] { pull_back_derivative(heat, d_sq, 0.2, 0.9, 3); }) == Errc::InvalidArgument);
  CHECK(code_of([&] { pull_back_derivative(heat, d_sq, 0.2, 0.9, 2, 0, 1); }) == Errc::DimensionMismatch);
}

TEST_CASE("second-derivative sup follows the heat-kernel oracle") {
  // Oracle: sup_x |d^2/dx^2 E f(x + sqrt(tau) Z)| by direct quadrature on a
  // fine x-scan, fitted in log-log over tau = 0.02 .. 0.64.
  const GridAxis ax{-8.0, 8.0, 1601};
  TransitionKernel heat(constant_spec({0.0}, {1.0}), dirac_flow(1.0), ax, TimeGrid(1.0, 10));
  const std::vector<double> taus{0.02, 0.04, 0.08, 0.16, 0.32, 0.64};
  for (const char* expr : {"holder_power(exponent=0.5, radius=1)", "holder_power(exponent=1, radius=1)"}) {
    const auto f = TestFunction::parse(expr);
    std::vector<double> lib, ref;
    for (double tau : taus) {
      lib.push_back(pull_back_derivative(heat, FieldOnGrid::sample(ax, f), 1.0 - tau, 1.0, 2).sup_norm());
      double best = 0.0;
      for (double x = -2.0; x <= 2.0; x += 0.01) {
        best = std::max(best, std::abs(oracle::gauss_second_derivative(f.fn, x, std::sqrt(tau), f.breakpoints)));
      }
      ref.push_back(best);
      CHECK(lib.back() == doctest::Approx(best).epsilon(2e-2));
    }
    CHECK(oracle::loglog_slope(taus, lib) == doctest::Approx(oracle::loglog_slope(taus, ref)).epsilon(1e-2));
  }
}

TEST_CASE("generator_apply_diff examples") {
  const auto flow = dirac_flow(1.0);
  const auto lin = FieldOnGrid::sample(kAxis, TestFunction::parse("linear"));
  const auto sq = FieldOnGrid::sample(kAxis, TestFunction::parse("quadratic"));
  const auto a = ou_spec();
  const auto same = generator_apply_diff(a, a, flow, flow, sq, 0.5);
  CHECK(same.sup_norm() == 0.0);
  const auto drift = generator_apply_diff(constant_spec({0.0}, {1.0}), constant_spec({0.3}, {1.0}), flow, flow,
                                          lin, 0.5);
  const auto diff = generator_apply_diff(constant_spec({0.1}, {std::sqrt(1.2)}), constant_spec({0.1}, {1.0}),
                                         flow, flow, sq, 0.5);
  for (std::size_t i = drift.lo(); i <= drift.hi(); ++i) {
    CHECK(drift[i] == doctest::Approx(-0.3).epsilon(1e-9));
    CHECK(diff[i] == doctest::Approx(0.2).epsilon(1e-6));
  }
  const auto short_flow = MeasureFlow(std::vector<double>{0.0, 0.2, 0.4},
                                      std::vector<Measure>(3, Measure(EmpiricalMeasure::dirac(std::vector<double>{0.0}))));
  CHECK(code_of([&] { generator_apply_diff(a, a, short_flow, flow, sq, 0.5); }) == Errc::GridMismatch);
}

TEST_CASE("verify_inversion trivial cases") {
  const auto flow = dirac_flow(1.0);
  const auto d0 = EmpiricalMeasure::dirac(std::vector<double>{0.0});
  const auto f = TestFunction::parse("holder_power(exponent=0.5, radius=1)");
  const auto a = constant_spec({0.2}, {1.1});
  InversionOptions opt;
  opt.time_nodes = 16;
  const auto same = verify_inversion(a, a, flow, flow, d0, f, 1.0, opt);
  CHECK(std::abs(same.lhs) <= 1e-12);
  CHECK(std::abs(same.rhs) <= 1e-12);
  CHECK(same.abs_gap <= 1e-12);
  const auto one = verify_inversion(a, constant_spec({-0.1}, {0.9}), flow, flow, d0,
                                    TestFunction::parse("constant(value=1)"), 1.0, opt);
  CHECK(std::abs(one.lhs) <= 1e-12);
  CHECK(std::abs(one.rhs) <= 1e-12);
  CHECK(one.abs_gap == doctest::Approx(std::abs(one.lhs - one.rhs)));
}

TEST_CASE("verify_inversion drift-pair benchmark") {
  const auto flow = dirac_flow(1.0);
  const auto d0 = EmpiricalMeasure::dirac(std::vector<double>{0.0});
  const auto f = TestFunction::parse("holder_power(exponent=0.5, radius=1)");
  const auto rep = verify_inversion(constant_spec({0.0}, {1.0}), constant_spec({0.3}, {1.0}), flow, flow, d0, f,
                                    1.0);
  const double want = oracle::gauss_integral(f.fn, 0.0, 1.0, f.breakpoints) -
                      oracle::gauss_integral(f.fn, 0.3, 1.0, f.breakpoints);
  CHECK(want == doctest::Approx(-0.00957726321396157).epsilon(1e-9));
  CHECK(rep.lhs == doctest::Approx(want).epsilon(1e-8));
  CHECK(rep.rel_gap <= 1e-3);
  CHECK(rep.exact_gaussian);
  CHECK(rep.nodes == 401);
  CHECK(rep.domain_max == doctest::Approx(8.3));
}

TEST_CASE("verify_inversion with diffusion and drift differences") {
  const auto flow = dirac_flow(1.0);
  const auto mu0 = make_empirical({{-0.4}, {0.5}}, std::vector<double>{1, 2});
  const auto f = TestFunction::parse("holder_power(exponent=0.5, radius=1, center=0.1)");
  const auto rep = verify_inversion(constant_spec({0.25}, {1.3}), constant_spec({-0.1}, {0.8}), flow, flow, mu0, f,
                                    0.7);
  double want = 0.0;
  for (std::size_t j = 0; j < mu0.size(); ++j) {
    const double x = mu0.point(j)[0];
    want += mu0.weight(j) * (oracle::gauss_integral(f.fn, x + 0.25 * 0.7, std::sqrt(1.69 * 0.7), f.breakpoints) -
                             oracle::gauss_integral(f.fn, x - 0.1 * 0.7, std::sqrt(0.64 * 0.7), f.breakpoints));
  }
  CHECK(rep.lhs == doctest::Approx(want).epsilon(1e-8));
  CHECK(rep.rel_gap <= 5e-3);
}

TEST_CASE("verify_inversion for x-dependent coefficients") {
  // OU against Brownian motion with a smooth test function; Euler kernels.
  const auto flow = dirac_flow(1.0);
  const auto d0 = EmpiricalMeasure::dirac(std::vector<double>{0.0});
  const auto rep = verify_inversion(ou_spec(), constant_spec({0.0}, {1.0}), flow, flow, d0,
                                    TestFunction::parse("gaussian_bump(width=1)"), 1.0);
  CHECK_FALSE(rep.exact_gaussian);
  // exact law: OU variance (1 - e^{-2}) / 2 against variance 1
  const double want = 1.0 / std::sqrt(1.0 + 0.5 * (1.0 - std::exp(-2.0))) - 1.0 / std::sqrt(2.0);
  CHECK(rep.lhs == doctest::Approx(want).epsilon(5e-2));
  CHECK(rep.rel_gap <= 5e-2);
}
