#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "disptrack/baseline.hpp"

namespace disptrack {
namespace {

struct Solution {
  std::vector<int> row_to_col;
  double cost = 0.0;
};

// Shortest augmenting path with potentials on a square matrix.
Solution solve_square(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  Solution sol;
  sol.row_to_col.assign(static_cast<std::size_t>(n), -1);
  if (n == 0) return sol;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (int j = 1; j <= n; ++j) sol.row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  for (int i = 0; i < n; ++i) sol.cost += a(i, sol.row_to_col[static_cast<std::size_t>(i)]);
  return sol;
}

// Optimum of the rows after `first_row` over the columns not in `taken`.
Solution solve_rest(const Eigen::MatrixXd& a, int first_row, const std::vector<bool>& taken) {
  std::vector<int> cols;
  for (int j = 0; j < a.cols(); ++j) {
    if (!taken[static_cast<std::size_t>(j)]) cols.push_back(j);
  }
  const int m = static_cast<int>(cols.size());
  Eigen::MatrixXd sub(m, m);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) sub(r, c) = a(first_row + r, cols[static_cast<std::size_t>(c)]);
  }
  Solution s = solve_square(sub);
  for (int& c : s.row_to_col) c = cols[static_cast<std::size_t>(c)];
  return s;
}

}  // namespace

Assignment hungarian(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite() || (cost.size() > 0 && cost.minCoeff() < 0.0)) {
    throw std::invalid_argument("hungarian: entries must be finite and non-negative");
  }
  const auto rows = cost.rows();
  const auto cols = cost.cols();
  const auto n = std::max(rows, cols);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  a.topLeftCorner(rows, cols) = cost;

  Solution best = solve_square(a);
  const double optimum = best.cost;
  const double tol = 1e-9 * std::max(1.0, std::abs(optimum));

  // Fix rows in order to the smallest column that still admits an optimum.
  std::vector<int> current = best.row_to_col;
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  double fixed_cost = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < current[static_cast<std::size_t>(i)]; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      taken[static_cast<std::size_t>(j)] = true;
      const Solution rest = solve_rest(a, i + 1, taken);
      taken[static_cast<std::size_t>(j)] = false;
      if (fixed_cost + a(i, j) + rest.cost <= optimum + tol) {
        current[static_cast<std::size_t>(i)] = j;
        for (std::size_t r = 0; r < rest.row_to_col.size(); ++r) {
          current[static_cast<std::size_t>(i + 1) + r] = rest.row_to_col[r];
        }
        break;
      }
    }
    const int chosen = current[static_cast<std::size_t>(i)];
    taken[static_cast<std::size_t>(chosen)] = true;
    fixed_cost += a(i, chosen);
  }

  Assignment out;
  out.row_to_col.assign(static_cast<std::size_t>(rows), -1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int c = current[static_cast<std::size_t>(i)];
    if (c < cols) {
      out.row_to_col[static_cast<std::size_t>(i)] = c;
      out.total_cost += cost(i, c);
    }
  }
  return out;
}

}  // namespace disptrack
