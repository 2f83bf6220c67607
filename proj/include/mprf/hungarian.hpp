#pragma once

#include <Eigen/Core>

#include <vector>

namespace mprf::fusion {

/// Maximum-total-similarity one-to-one assignment on a rectangular matrix.
///
/// The matrix is padded to square with `pad_value`; pairings that land in the
/// padding are reported as -1. Returns, for every row, the assigned column.
/// O(n³) shortest-augmenting-path with dual potentials.
std::vector<int> solve_max_assignment(const Eigen::Ref<const Eigen::MatrixXd>& similarity,
                                      double pad_value = -1.0);

}  // namespace mprf::fusion
