#pragma once

// Plain composite-Simpson oracles for Gaussian integrals of test functions
// with power singularities. Independent of the library's quadrature.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// Simpson over [a, b] after y = a + (b - a) v^2 on the left half and the
// mirrored map on the right half, which smooths |y - a|^p type endpoints.
inline double simpson_graded(const std::function<double(double)>& g, double a, double b, int panels = 2000) {
  const double mid = 0.5 * (a + b);
  auto half = [&](double from, double to) {
    const double len = to - from;
    auto h = [&](double v) { return g(from + len * v * v) * 2.0 * len * v; };
    const double dv = 1.0 / panels;
    double s = h(0.0) + h(1.0);
    for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * h(i * dv);
    return s * dv / 3.0;
  };
  return half(a, mid) - half(b, mid);
}

// int g(y) N(y; m, sd^2) dy over m +- 14 sd, split at `cuts`.
inline double gauss_integral(const std::function<double(double)>& g, double m, double sd,
                             std::vector<double> cuts = {}) {
  const double a = m - 14.0 * sd;
  const double b = m + 14.0 * sd;
  std::vector<double> pts{a};
  std::sort(cuts.begin(), cuts.end());
  for (double c : cuts) {
    if (c > a && c < b) pts.push_back(c);
  }
  pts.push_back(b);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    total += simpson_graded([&](double y) { return g(y) * normal_pdf((y - m) / sd) / sd; }, pts[i],
                            pts[i + 1]);
  }
  return total;
}

// d^2/dx^2 of E g(x + sd Z) = int g(y) phi''((y - x)/sd) / sd^3 dy.
inline double gauss_second_derivative(const std::function<double(double)>& g, double x, double sd,
                                      std::vector<double> cuts = {}) {
  auto w = [&](double y) {
    const double z = (y - x) / sd;
    return (z * z - 1.0);
  };
  return gauss_integral([&](double y) { return g(y) * w(y); }, x, sd, cuts) / (sd * sd);
}

// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace oracle
