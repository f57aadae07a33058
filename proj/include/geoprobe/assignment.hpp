#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace geoprobe {

struct Assignment {
  // row_to_col[r] is the column assigned to row r.
  std::vector<std::size_t> row_to_col;
  double cost = 0.0;
};

// Minimum-cost assignment of every row to a distinct column (rows <= cols)
// by shortest augmenting paths with dual potentials, O(rows^2 * cols).
// `cost` is row-major with rows * cols entries.
Assignment solve_assignment(std::span<const double> cost, std::size_t rows,
                            std::size_t cols);

}  // namespace geoprobe
