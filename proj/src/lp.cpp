#include "mkv/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "mkv/error.hpp"

namespace mkv::lp {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kReducedTol = 1e-12;
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

}  // namespace

DenseLpResult maximize_packing(std::span<const double> c, std::span<const double> a,
                               std::span<const double> b) {
  const std::size_t n = c.size();
  const std::size_t m = b.size();
  if (a.size() != n * m) {
    throw Error(Errc::InvalidArgument, "constraint matrix has wrong size");
  }
  for (double bi : b) {
    if (!(bi >= 0.0)) throw Error(Errc::InvalidArgument, "packing LP needs b >= 0");
  }

  // Tableau rows 0..m-1 are constraints, row m the objective; columns are
  // x (n), slacks (m), rhs.
  const std::size_t width = n + m + 1;
  std::vector<double> tab((m + 1) * width, 0.0);
  auto at = [&](std::size_t r, std::size_t col) -> double& { return tab[r * width + col]; };
  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) at(r, j) = a[r * n + j];
    at(r, n + r) = 1.0;
    at(r, width - 1) = b[r];
    basis[r] = n + r;
  }
  for (std::size_t j = 0; j < n; ++j) at(m, j) = -c[j];

  DenseLpResult result;
  const std::size_t max_pivots = 50 * (n + m) * (n + m) + 1000;
  while (true) {
    std::size_t enter = kNone;
    for (std::size_t j = 0; j + 1 < width; ++j) {
      if (at(m, j) < -kReducedTol) {
        enter = j;
        break;
      }
    }
    if (enter == kNone) break;

    std::size_t leave = kNone;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < m; ++r) {
      const double piv = at(r, enter);
      if (piv <= kPivotTol) continue;
      const double ratio = at(r, width - 1) / piv;
      if (leave == kNone || ratio < best_ratio - 1e-14) {
        best_ratio = ratio;
        leave = r;
      } else if (ratio <= best_ratio + 1e-14 && basis[r] < basis[leave]) {
        best_ratio = std::min(best_ratio, ratio);
        leave = r;
      }
    }
    if (leave == kNone) throw Error(Errc::Numerical, "packing LP is unbounded");

    const double piv = at(leave, enter);
    for (std::size_t j = 0; j < width; ++j) at(leave, j) /= piv;
    for (std::size_t r = 0; r <= m; ++r) {
      if (r == leave) continue;
      const double factor = at(r, enter);
      if (factor == 0.0) continue;
      double* row = &tab[r * width];
      const double* prow = &tab[leave * width];
      for (std::size_t j = 0; j < width; ++j) row[j] -= factor * prow[j];
    }
    basis[leave] = enter;
    if (++result.pivots > max_pivots) {
      throw Error(Errc::Numerical, "packing LP pivot limit reached");
    }
  }

  // Recover the basic solution from the original data; the tableau carries
  // round-off from every pivot.
  Eigen::MatrixXd bmat = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                               static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < m; ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    if (basis[k] < n) {
      for (std::size_t r = 0; r < m; ++r) bmat(static_cast<Eigen::Index>(r), col) = a[r * n + basis[k]];
    } else {
      bmat(static_cast<Eigen::Index>(basis[k] - n), col) = 1.0;
    }
  }
  const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(m));
  const Eigen::VectorXd xb = bmat.partialPivLu().solve(rhs);
  result.x.assign(n, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    if (basis[k] < n) result.x[basis[k]] = std::max(0.0, xb(static_cast<Eigen::Index>(k)));
  }
  for (std::size_t r = 0; r < m; ++r) {
    double lhs = 0.0;
    for (std::size_t j = 0; j < n; ++j) lhs += a[r * n + j] * result.x[j];
    if (lhs > b[r] + 1e-7 * (1.0 + std::abs(b[r]))) {
      throw Error(Errc::Numerical, "packing LP lost feasibility to round-off");
    }
  }
  result.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) result.objective += c[j] * result.x[j];
  return result;
}

TransportSimplex::TransportSimplex(std::span<const double> supply,
                                   std::span<const double> demand)
    : supply_(supply.begin(), supply.end()), demand_(demand.begin(), demand.end()) {
  if (supply_.empty() || demand_.empty()) {
    throw Error(Errc::InvalidArgument, "transport problem needs supply and demand nodes");
  }
  for (double s : supply_) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw Error(Errc::InvalidArgument, "bad supply");
  }
  for (double d : demand_) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw Error(Errc::InvalidArgument, "bad demand");
  }
  const double total_s = std::accumulate(supply_.begin(), supply_.end(), 0.0);
  const double total_d = std::accumulate(demand_.begin(), demand_.end(), 0.0);
  if (total_s <= 0.0 || total_d <= 0.0) {
    throw Error(Errc::InvalidArgument, "transport problem has no mass");
  }
  for (double& d : demand_) d *= total_s / total_d;

  const std::size_t nodes = supply_.size() + demand_.size();
  adj_offset_.resize(nodes + 1);
  adj_cells_.resize(2 * (nodes - 1));
  potential_.resize(nodes);
  parent_.resize(nodes);
  parent_cell_.resize(nodes);
  depth_.resize(nodes);
  stack_.reserve(nodes);
  northwest_corner();
}

void TransportSimplex::northwest_corner() {
  const std::size_t m = supply_.size();
  const std::size_t n = demand_.size();
  std::vector<double> s = supply_;
  std::vector<double> d = demand_;
  cells_.clear();
  cells_.reserve(m + n - 1);
  std::size_t i = 0;
  std::size_t j = 0;
  while (true) {
    const double x = std::min(s[i], d[j]);
    cells_.push_back({i, j, x});
    s[i] -= x;
    d[j] -= x;
    if (i == m - 1 && j == n - 1) break;
    if (i == m - 1) {
      ++j;
    } else if (j == n - 1) {
      ++i;
    } else if (s[i] <= d[j]) {
      ++i;
    } else {
      ++j;
    }
  }
}

void TransportSimplex::build_tree(std::span<const double> cost) {
  const std::size_t m = supply_.size();
  const std::size_t n = demand_.size();
  const std::size_t nodes = m + n;

  std::fill(adj_offset_.begin(), adj_offset_.end(), 0);
  for (const auto& cell : cells_) {
    ++adj_offset_[cell.row + 1];
    ++adj_offset_[m + cell.col + 1];
  }
  for (std::size_t v = 0; v < nodes; ++v) adj_offset_[v + 1] += adj_offset_[v];
  std::vector<std::size_t>& fill = stack_;
  fill.assign(adj_offset_.begin(), adj_offset_.end() - 1);
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    adj_cells_[fill[cells_[k].row]++] = k;
    adj_cells_[fill[m + cells_[k].col]++] = k;
  }

  std::fill(parent_.begin(), parent_.end(), kNone);
  parent_[0] = 0;
  parent_cell_[0] = kNone;
  depth_[0] = 0;
  potential_[0] = 0.0;
  stack_.clear();
  stack_.push_back(0);
  std::size_t visited = 1;
  while (!stack_.empty()) {
    const std::size_t u = stack_.back();
    stack_.pop_back();
    for (std::size_t e = adj_offset_[u]; e < adj_offset_[u + 1]; ++e) {
      const std::size_t k = adj_cells_[e];
      const std::size_t row_node = cells_[k].row;
      const std::size_t col_node = m + cells_[k].col;
      const std::size_t w = (u == row_node) ? col_node : row_node;
      if (parent_[w] != kNone) continue;
      parent_[w] = u;
      parent_cell_[w] = k;
      depth_[w] = depth_[u] + 1;
      potential_[w] = cost[cells_[k].row * n + cells_[k].col] - potential_[u];
      stack_.push_back(w);
      ++visited;
    }
  }
  if (visited != nodes) throw Error(Errc::Numerical, "transport basis is not a spanning tree");
}

double TransportSimplex::solve(std::span<const double> cost) {
  const std::size_t m = supply_.size();
  const std::size_t n = demand_.size();
  const std::size_t total = m * n;
  if (cost.size() != total) throw Error(Errc::InvalidArgument, "cost matrix has wrong size");

  double scale = 1.0;
  for (double c : cost) {
    if (!std::isfinite(c)) throw Error(Errc::InvalidArgument, "non-finite transport cost");
    scale = std::max(scale, std::abs(c));
  }
  const double eps = kReducedTol * scale;
  const std::size_t block =
      std::min(total, std::max<std::size_t>(32, static_cast<std::size_t>(std::sqrt(double(total)))));
  const std::size_t max_pivots = 200 * (m + n) * (m + n) + 10000;

  std::vector<std::size_t> up_a;
  std::vector<std::size_t> up_b;
  std::vector<std::size_t> path;
  std::size_t degenerate_run = 0;
  bool bland = false;
  last_pivots_ = 0;
  if (price_cursor_ >= total) price_cursor_ = 0;

  while (true) {
    build_tree(cost);
    const double* u = potential_.data();
    const double* v = potential_.data() + m;

    std::size_t enter = kNone;
    if (bland) {
      for (std::size_t k = 0; k < total; ++k) {
        const std::size_t i = k / n;
        const std::size_t j = k % n;
        if (cost[k] - u[i] - v[j] < -eps) {
          enter = k;
          break;
        }
      }
    } else {
      double best = -eps;
      std::size_t seen = 0;
      std::size_t k = price_cursor_;
      for (std::size_t t = 0; t < total; ++t) {
        const std::size_t i = k / n;
        const std::size_t j = k - i * n;
        const double r = cost[k] - u[i] - v[j];
        if (r < best) {
          best = r;
          enter = k;
        }
        if (++k == total) k = 0;
        if (++seen == block) {
          if (enter != kNone) break;
          seen = 0;
        }
      }
      price_cursor_ = k;
    }
    if (enter == kNone) break;

    const std::size_t ei = enter / n;
    const std::size_t ej = enter % n;

    // Tree path from the entering column node to the entering row node.
    up_a.clear();
    up_b.clear();
    std::size_t a = m + ej;
    std::size_t b = ei;
    while (depth_[a] > depth_[b]) {
      up_a.push_back(parent_cell_[a]);
      a = parent_[a];
    }
    while (depth_[b] > depth_[a]) {
      up_b.push_back(parent_cell_[b]);
      b = parent_[b];
    }
    while (a != b) {
      up_a.push_back(parent_cell_[a]);
      a = parent_[a];
      up_b.push_back(parent_cell_[b]);
      b = parent_[b];
    }
    path.assign(up_a.begin(), up_a.end());
    path.insert(path.end(), up_b.rbegin(), up_b.rend());

    // Even positions lose flow, odd positions gain it.
    std::size_t leave_pos = kNone;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < path.size(); p += 2) {
      const auto& cell = cells_[path[p]];
      const double f = cell.flow;
      if (f < theta) {
        theta = f;
        leave_pos = p;
      } else if (bland && f == theta) {
        const auto& cur = cells_[path[leave_pos]];
        if (cell.row * n + cell.col < cur.row * n + cur.col) leave_pos = p;
      }
    }
    theta = std::max(theta, 0.0);
    for (std::size_t p = 0; p < path.size(); ++p) {
      auto& cell = cells_[path[p]];
      cell.flow = (p % 2 == 0) ? std::max(0.0, cell.flow - theta) : cell.flow + theta;
    }
    cells_[path[leave_pos]] = {ei, ej, theta};

    if (theta <= 0.0) {
      if (++degenerate_run > 2 * (m + n)) bland = true;
    } else {
      degenerate_run = 0;
      bland = false;
    }
    if (++last_pivots_ > max_pivots) {
      throw Error(Errc::Numerical, "transport simplex pivot limit reached");
    }
  }

  double objective = 0.0;
  for (const auto& cell : cells_) objective += cell.flow * cost[cell.row * n + cell.col];
  return objective;
}

}  // namespace mkv::lp
