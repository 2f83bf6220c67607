#include "mprf/kmeans.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace mprf::aggregation {

namespace {

// Squared distance of every sample to its nearest center; fills labels.
double assign(const Eigen::Ref<const Eigen::MatrixXd>& samples,
              const Eigen::MatrixXd& centers, std::vector<int>& labels,
              Eigen::VectorXd& sq_dist) {
  const Eigen::VectorXd sample_sq = samples.rowwise().squaredNorm();
  const Eigen::VectorXd center_sq = centers.rowwise().squaredNorm();
  const Eigen::MatrixXd cross = samples * centers.transpose();
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = center_sq(c) - 2.0 * cross(i, c);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    sq_dist(i) = std::max(0.0, best_d + sample_sq(i));
    inertia += sq_dist(i);
  }
  return inertia;
}

Eigen::MatrixXd seed_plus_plus(const Eigen::Ref<const Eigen::MatrixXd>& samples, int k,
                               std::mt19937_64& rng) {
  const Eigen::Index n = samples.rows();
  Eigen::MatrixXd centers(k, samples.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = samples.row(pick(rng));
  Eigen::VectorXd d2 = (samples.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (chosen = 0; chosen < n - 1; ++chosen) {
        target -= d2(chosen);
        if (target < 0.0) break;
      }
    } else {
      chosen = pick(rng);
    }
    centers.row(c) = samples.row(chosen);
    d2 = d2.cwiseMin((samples.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(const Eigen::Ref<const Eigen::MatrixXd>& samples, int k,
                    const KMeansOptions& options) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be at least 1");
  if (samples.rows() < k) {
    throw std::invalid_argument("kmeans: need at least k samples (have " +
                                std::to_string(samples.rows()) + ", k = " +
                                std::to_string(k) + ")");
  }
  std::mt19937_64 rng(options.seed);
  KMeansResult result;
  result.centers = seed_plus_plus(samples, k, rng);
  result.labels.assign(static_cast<std::size_t>(samples.rows()), 0);
  Eigen::VectorXd sq_dist(samples.rows());

  double previous = assign(samples, result.centers, result.labels, sq_dist);
  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, samples.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      const int label = result.labels[static_cast<std::size_t>(i)];
      sums.row(label) += samples.row(i);
      ++counts[static_cast<std::size_t>(label)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        result.centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Empty cluster: move it onto the worst-served sample.
        Eigen::Index far = 0;
        sq_dist.maxCoeff(&far);
        result.centers.row(c) = samples.row(far);
        sq_dist(far) = 0.0;
      }
    }
    const double current = assign(samples, result.centers, result.labels, sq_dist);
    result.iterations = it + 1;
    result.inertia = current;
    const double change = std::abs(previous - current);
    if (current == 0.0 || change <= options.relative_tolerance * previous) break;
    previous = current;
  }
  if (result.iterations == 0) result.inertia = previous;
  return result;
}

int nearest_center(const Eigen::Ref<const Eigen::MatrixXd>& centers,
                   const Eigen::Ref<const Eigen::VectorXd>& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    const double d = (centers.row(c).transpose() - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace mprf::aggregation
