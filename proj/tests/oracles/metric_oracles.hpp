#pragma once

// Brute-force reference values for the discrete metrics. Nothing here shares
// code with the library solvers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <vector>

namespace oracle {

using Point = std::vector<double>;

inline double holder_dist(const Point& x, const Point& y, double alpha) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
  return std::pow(std::sqrt(s), alpha);
}

/// Measure with integer masses summing to `total()`.
struct CountMeasure {
  std::vector<Point> points;
  std::vector<int> counts;
  int total() const {
    int t = 0;
    for (int c : counts) t += c;
    return t;
  }
};

/// Minimum of sum cost(i,j) n_ij over all integer couplings of two count
/// vectors with equal totals, by exhaustive row-by-row enumeration with
/// memoization on the remaining column demand.
inline double min_integer_coupling(const std::vector<int>& supply, const std::vector<int>& demand,
                                   const std::function<double(std::size_t, std::size_t)>& cost) {
  const std::size_t m = supply.size();
  const std::size_t n = demand.size();
  std::vector<std::map<std::vector<int>, double>> memo(m + 1);
  std::function<double(std::size_t, std::vector<int>&)> rec = [&](std::size_t i,
                                                                  std::vector<int>& left) {
    if (i == m) return 0.0;
    auto hit = memo[i].find(left);
    if (hit != memo[i].end()) return hit->second;
    double best = std::numeric_limits<double>::infinity();
    // Distribute supply[i] over the columns.
    std::function<void(std::size_t, int, double)> spread = [&](std::size_t j, int rest,
                                                              double acc) {
      if (j == n) {
        if (rest == 0) best = std::min(best, acc + rec(i + 1, left));
        return;
      }
      const int hi = std::min(rest, left[j]);
      for (int q = 0; q <= hi; ++q) {
        left[j] -= q;
        spread(j + 1, rest - q, acc + q * cost(i, j));
        left[j] += q;
      }
    };
    spread(0, supply[i], 0.0);
    memo[i][left] = best;
    return best;
  };
  std::vector<int> left = demand;
  return rec(0, left);
}

/// Hoelder-cost transport between two count measures with equal totals.
inline double w_alpha(const CountMeasure& mu, const CountMeasure& nu, double alpha) {
  const auto cost = [&](std::size_t i, std::size_t j) {
    return holder_dist(mu.points[i], nu.points[j], alpha);
  };
  return min_integer_coupling(mu.counts, nu.counts, cost) / mu.total();
}

/// Bounded-Hoelder distance through its budget form: for a split (a, 1-a)
/// the value is a transport with cost min((1-a) d, 2a), concave in a, and the
/// maximum over a is located by golden-section search.
inline double bl_alpha_budget(const CountMeasure& mu, const CountMeasure& nu, double alpha) {
  const auto value = [&](double a) {
    const auto cost = [&](std::size_t i, std::size_t j) {
      return std::min((1.0 - a) * holder_dist(mu.points[i], nu.points[j], alpha), 2.0 * a);
    };
    return min_integer_coupling(mu.counts, nu.counts, cost) / mu.total();
  };
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0;
  double hi = 1.0;
  double x1 = hi - g * (hi - lo);
  double x2 = lo + g * (hi - lo);
  double f1 = value(x1);
  double f2 = value(x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = value(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = value(x1);
    }
  }
  return std::max(f1, f2);
}

/// Solves the square system A x = b by partial-pivot elimination; false if
/// singular.
inline bool solve_square(std::vector<double> a, std::vector<double> b, std::vector<double>& x) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r * n + c]) > std::abs(a[p * n + c])) p = r;
    }
    if (std::abs(a[p * n + c]) < 1e-12) return false;
    if (p != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[p * n + k], a[c * n + k]);
      std::swap(b[p], b[c]);
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r * n + c] / a[c * n + c];
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      b[r] -= f * b[c];
    }
  }
  x.resize(n);
  for (std::size_t r = 0; r < n; ++r) x[r] = b[r] / a[r * n + r];
  return true;
}

/// Bounded-Hoelder distance by enumerating every vertex of the polytope
///   |f_i| <= a,  |f_i - f_j| <= b d_ij,  a + b <= 1,  a, b >= 0
/// on the distinct support points with signed masses g. Practical for up to
/// four distinct points.
inline double bl_alpha_vertices(const std::vector<Point>& pts, const std::vector<double>& g,
                                double alpha) {
  const std::size_t n = pts.size();
  const std::size_t nv = n + 2;
  const std::size_t ia = n;
  const std::size_t ib = n + 1;
  std::vector<std::vector<double>> rows;
  std::vector<double> rhs;
  auto row = [&]() { return std::vector<double>(nv, 0.0); };
  for (std::size_t i = 0; i < n; ++i) {
    auto r1 = row();
    r1[i] = 1;
    r1[ia] = -1;
    rows.push_back(r1);
    rhs.push_back(0);
    auto r2 = row();
    r2[i] = -1;
    r2[ia] = -1;
    rows.push_back(r2);
    rhs.push_back(0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto r = row();
      r[i] = 1;
      r[j] = -1;
      r[ib] = -holder_dist(pts[i], pts[j], alpha);
      rows.push_back(r);
      rhs.push_back(0);
    }
  }
  auto rs = row();
  rs[ia] = 1;
  rs[ib] = 1;
  rows.push_back(rs);
  rhs.push_back(1);
  auto ra = row();
  ra[ia] = -1;
  rows.push_back(ra);
  rhs.push_back(0);
  auto rb = row();
  rb[ib] = -1;
  rows.push_back(rb);
  rhs.push_back(0);

  const std::size_t m = rows.size();
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(nv);
  std::function<void(std::size_t, std::size_t)> choose = [&](std::size_t k, std::size_t from) {
    if (k == nv) {
      std::vector<double> a(nv * nv);
      std::vector<double> b(nv);
      for (std::size_t r = 0; r < nv; ++r) {
        for (std::size_t c = 0; c < nv; ++c) a[r * nv + c] = rows[pick[r]][c];
        b[r] = rhs[pick[r]];
      }
      std::vector<double> x;
      if (!solve_square(a, b, x)) return;
      for (std::size_t r = 0; r < m; ++r) {
        double lhs = 0.0;
        for (std::size_t c = 0; c < nv; ++c) lhs += rows[r][c] * x[c];
        if (lhs > rhs[r] + 1e-9) return;
      }
      double obj = 0.0;
      for (std::size_t i = 0; i < n; ++i) obj += g[i] * x[i];
      best = std::max(best, obj);
      return;
    }
    for (std::size_t r = from; r + (nv - k) <= m; ++r) {
      pick[k] = r;
      choose(k + 1, r + 1);
    }
  };
  choose(0, 0);
  return best;
}

/// Two-point value by a dense search over (f0, f1): the smallest admissible
/// norm of a pair is max(|f0|,|f1|) + |f0 - f1| / r, so the ratio below is
/// the best value attained by that direction.
inline double two_point_grid(double r, int resolution) {
  double best = 0.0;
  for (int p = 0; p <= resolution; ++p) {
    for (int q = 0; q <= resolution; ++q) {
      const double f0 = -1.0 + 2.0 * p / resolution;
      const double f1 = -1.0 + 2.0 * q / resolution;
      const double norm = std::max(std::abs(f0), std::abs(f1)) + std::abs(f0 - f1) / r;
      if (norm <= 0.0) continue;
      best = std::max(best, (f0 - f1) / norm);
    }
  }
  return best;
}

}  // namespace oracle
