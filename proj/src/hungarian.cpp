#include "mprf/hungarian.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace mprf::fusion {

std::vector<int> solve_max_assignment(const Eigen::Ref<const Eigen::MatrixXd>& similarity,
                                      double pad_value) {
  const auto rows = static_cast<int>(similarity.rows());
  const auto cols = static_cast<int>(similarity.cols());
  if (rows == 0 || cols == 0) return std::vector<int>(static_cast<std::size_t>(rows), -1);
  if (!similarity.allFinite()) throw std::invalid_argument("assignment: non-finite similarity");

  const int n = std::max(rows, cols);
  const auto cost = [&](int r, int c) {
    return (r < rows && c < cols) ? -similarity(r, c) : -pad_value;
  };

  // 1-based potentials; column 0 is the virtual start of each augmenting path.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match_of_col(n + 1, 0), way(n + 1, 0);
  std::vector<double> min_slack(n + 1);
  std::vector<char> used(n + 1);

  for (int r = 1; r <= n; ++r) {
    match_of_col[0] = r;
    int col0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const int row0 = match_of_col[col0];
      double delta = kInf;
      int col1 = 0;
      for (int c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double slack = cost(row0 - 1, c - 1) - u[row0] - v[c];
        if (slack < min_slack[c]) {
          min_slack[c] = slack;
          way[c] = col0;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          col1 = c;
        }
      }
      for (int c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match_of_col[c]] += delta;
          v[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col0 = col1;
    } while (match_of_col[col0] != 0);
    do {
      const int col1 = way[col0];
      match_of_col[col0] = match_of_col[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<int> assignment(static_cast<std::size_t>(rows), -1);
  for (int c = 1; c <= n; ++c) {
    const int r = match_of_col[c] - 1;
    if (r < rows && c - 1 < cols) assignment[static_cast<std::size_t>(r)] = c - 1;
  }
  return assignment;
}

}  // namespace mprf::fusion
