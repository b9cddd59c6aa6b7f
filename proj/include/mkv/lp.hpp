#pragma once

#include <cstddef>
#include <span>
#include <vector>

/// Exact linear-programming kernels used by the measure metrics.
///
/// Two solvers live here. `maximize_packing` is a dense tableau simplex for
/// problems of the form  max c'x  s.t.  Ax <= b, x >= 0  with b >= 0, so the
/// slack basis is feasible and no phase one is needed. `TransportSimplex` is a
/// network (transportation) simplex on a complete bipartite graph that keeps
/// its spanning-tree basis between solves, so re-solving with new costs on the
/// same supplies is a warm start.
namespace mkv::lp {

struct DenseLpResult {
  double objective = 0.0;
  std::vector<double> x;
  std::size_t pivots = 0;
};

/// `a` is row-major with `b.size()` rows and `c.size()` columns.
/// Bland's rule is used throughout, so degenerate problems terminate.
DenseLpResult maximize_packing(std::span<const double> c, std::span<const double> a,
                               std::span<const double> b);

struct TransportCell {
  std::size_t row;
  std::size_t col;
  double flow;
};

class TransportSimplex {
 public:
  /// Supplies and demands must be nonnegative with (nearly) equal totals;
  /// demands are rescaled onto the supply total.
  TransportSimplex(std::span<const double> supply, std::span<const double> demand);

  /// Minimizes sum cost(i,j) * flow(i,j); `cost` is row-major rows x cols.
  /// Starts from the basis left by the previous call.
  double solve(std::span<const double> cost);

  std::size_t rows() const noexcept { return supply_.size(); }
  std::size_t cols() const noexcept { return demand_.size(); }

  /// Basic cells of the current (optimal after solve) tree; m + n - 1 entries,
  /// some possibly carrying zero flow.
  std::span<const TransportCell> basis() const noexcept { return cells_; }

  std::size_t last_pivots() const noexcept { return last_pivots_; }

 private:
  void northwest_corner();
  void build_tree(std::span<const double> cost);

  std::vector<double> supply_;
  std::vector<double> demand_;
  std::vector<TransportCell> cells_;

  // Tree scratch, indexed by node (rows first, then columns).
  std::vector<std::size_t> adj_offset_;
  std::vector<std::size_t> adj_cells_;
  std::vector<double> potential_;
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> parent_cell_;
  std::vector<std::size_t> depth_;
  std::vector<std::size_t> stack_;

  std::size_t price_cursor_ = 0;
  std::size_t last_pivots_ = 0;
};

}  // namespace mkv::lp
