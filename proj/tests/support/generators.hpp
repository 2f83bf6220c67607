#pragma once

// Seeded random inputs for property tests.

#include "mprf/core.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <random>
#include <vector>

namespace mprf::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  std::mt19937_64& engine() { return rng_; }

  Eigen::VectorXd vector(int dim, double lo = -1.0, double hi = 1.0) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = uniform(lo, hi);
    return v;
  }

  Eigen::VectorXd unit(int dim) {
    Eigen::VectorXd v(dim);
    do {
      for (int i = 0; i < dim; ++i) v(i) = normal();
    } while (v.norm() < 1e-6);
    return v.normalized();
  }

  Eigen::MatrixXd matrix(int rows, int cols, double lo = -1.0, double hi = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = uniform(lo, hi);
    }
    return m;
  }

  Eigen::Matrix3d rotation() {
    Eigen::Quaterniond q(normal(), normal(), normal(), normal());
    q.normalize();
    return q.toRotationMatrix();
  }

  core::PoseSE3 pose(double max_translation = 10.0) {
    core::PoseSE3 p;
    p.rotation = rotation();
    p.translation = vector(3, -max_translation, max_translation);
    return p;
  }

  /// Planar pose: yaw only, z = 0.
  core::PoseSE3 planar_pose(double max_translation, double max_yaw_deg = 180.0) {
    core::PoseSE3 p;
    p.rotation = core::rot_z(uniform(-max_yaw_deg, max_yaw_deg));
    p.translation = {uniform(-max_translation, max_translation), uniform(-max_translation, max_translation), 0.0};
    return p;
  }

  std::vector<Eigen::Vector3d> points(int n, double extent = 5.0) {
    std::vector<Eigen::Vector3d> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.emplace_back(vector(3, -extent, extent));
    return out;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace mprf::testing
