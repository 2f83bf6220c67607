#pragma once

// Rigid 6-DoF estimation from 3D-3D correspondences.

#include "mprf/core.hpp"
#include "mprf/retrieval.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace mprf::pose {

using core::PoseSE3;
using PointList = std::vector<Eigen::Vector3d>;

/// Least-squares rigid transform with dst ≈ T·src (SVD of the cross
/// covariance, reflection-corrected). Returns nullopt when src is collinear or
/// coincident, or the inputs are mismatched or shorter than 3.
std::optional<PoseSE3> kabsch(std::span<const Eigen::Vector3d> src,
                              std::span<const Eigen::Vector3d> dst);

struct RansacConfig {
  double distance_threshold = 0.05;  // metres
  int sample_size = 3;
  int max_iterations = 100000;
  double confidence = 0.999;
  int min_inliers = 3;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct RegistrationResult {
  PoseSE3 transform;
  std::vector<int> inlier_indices;
  double inlier_rmse = 0.0;
  bool valid = false;
  int iterations_run = 0;
};

/// Hypothesise-and-verify on paired points src[i] ↔ dst[i].
///
/// The best hypothesis (most inliers, then lowest inlier RMSE) is refit on
/// its inliers; the adaptive bound ln(1-p)/ln(1-wⁿ) caps the iteration count.
/// Throws std::invalid_argument on fewer pairs than `sample_size`.
RegistrationResult ransac_register(std::span<const Eigen::Vector3d> src,
                                   std::span<const Eigen::Vector3d> dst,
                                   const RansacConfig& cfg);

struct IcpResult {
  PoseSE3 transform;
  /// Nothing in dst lay within max_corr_dist of the initially placed src.
  bool no_overlap = false;
  bool converged = false;
  int iterations = 0;
  /// Inlier RMSE of the initial guess followed by every accepted update.
  std::vector<double> rmse_history;
};

/// Point-to-point ICP. An update is accepted only if it does not raise the
/// inlier RMSE, so rmse_history is non-increasing.
IcpResult icp_refine(std::span<const Eigen::Vector3d> src_cloud,
                     std::span<const Eigen::Vector3d> dst_cloud, const PoseSE3& init,
                     double max_corr_dist, int max_iters = 30);

struct PoseErrors {
  double yaw_deg = 0.0;
  double dx_m = 0.0;
  double dy_m = 0.0;
};

/// Errors of `est` in the frame of `gt`: |yaw|, |x| and |y| of gt⁻¹·est.
PoseErrors pose_errors(const PoseSE3& est, const PoseSE3& gt);

enum class RerankMode : std::uint8_t { kPoseDistance, kInlierCount };

/// Drops candidates whose registration failed and orders the rest by
/// translation norm (or inlier count), ties by retrieval score.
/// `results[i]` belongs to `shortlist[i]`.
retrieval::Shortlist rerank_by_pose(const retrieval::Shortlist& shortlist,
                                    std::span<const RegistrationResult> results,
                                    RerankMode mode = RerankMode::kPoseDistance);

}  // namespace mprf::pose
