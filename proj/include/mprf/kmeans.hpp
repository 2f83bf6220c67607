#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace mprf::aggregation {

struct KMeansOptions {
  int max_iterations = 100;
  /// Stop once the relative inertia change drops below this.
  double relative_tolerance = 1e-4;
  std::uint64_t seed = 0;
};

struct KMeansResult {
  Eigen::MatrixXd centers;  // k × d
  std::vector<int> labels;  // one per sample row
  double inertia = 0.0;
  int iterations = 0;
};

/// Lloyd iterations from a k-means++ seeding. Deterministic for a given seed.
/// Throws std::invalid_argument if k < 1 or there are fewer rows than k.
KMeansResult kmeans(const Eigen::Ref<const Eigen::MatrixXd>& samples, int k,
                    const KMeansOptions& options = {});

/// Index of the nearest row of `centers` (Euclidean); ties go to the lowest index.
int nearest_center(const Eigen::Ref<const Eigen::MatrixXd>& centers,
                   const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace mprf::aggregation
