#include "geoprobe/assignment.hpp"

#include <limits>

#include "geoprobe/errors.hpp"

namespace geoprobe {

Assignment solve_assignment(std::span<const double> cost, std::size_t rows,
                            std::size_t cols) {
  if (rows > cols) throw DomainError("assignment needs rows <= cols");
  if (cost.size() != rows * cols) throw DomainError("cost matrix has the wrong size");
  Assignment out;
  if (rows == 0) return out;

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a virtual start column.
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<std::size_t> match(cols + 1, 0), way(cols + 1, 0);
  auto at = [&](std::size_t r, std::size_t c) { return cost[(r - 1) * cols + (c - 1)]; };

  for (std::size_t r = 1; r <= rows; ++r) {
    match[0] = r;
    std::size_t col0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[col0] = 1;
      const std::size_t r0 = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= cols; ++c) {
        if (used[c]) continue;
        const double cur = at(r0, c) - u[r0] - v[c];
        if (cur < minv[c]) {
          minv[c] = cur;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= cols; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  out.row_to_col.assign(rows, 0);
  for (std::size_t c = 1; c <= cols; ++c) {
    if (match[c] != 0) out.row_to_col[match[c] - 1] = c - 1;
  }
  for (std::size_t r = 0; r < rows; ++r) out.cost += cost[r * cols + out.row_to_col[r]];
  return out;
}

}  // namespace geoprobe
