#pragma once

// Geometric and vector primitives shared by every stage of the pipeline.
//
// Conventions: frames are z-up, yaw is the rotation about z, angles are
// reported in degrees wrapped to (-180, 180].

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>

namespace mprf::core {

using FrameId = std::uint64_t;

/// Rigid transform. `rotation` is kept as a matrix; quaternions only appear at
/// file boundaries.
struct PoseSE3 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static PoseSE3 identity() { return {}; }
  static PoseSE3 from_quaternion(const Eigen::Quaterniond& q,
                                 const Eigen::Vector3d& t);

  [[nodiscard]] PoseSE3 inverse() const;
  [[nodiscard]] Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
  [[nodiscard]] Eigen::Matrix4d matrix() const;

  /// Orthonormality and det = +1, each checked per entry within `tol`.
  [[nodiscard]] bool is_valid(double tol = 1e-9) const;
};

/// this ∘ other
PoseSE3 operator*(const PoseSE3& lhs, const PoseSE3& rhs);

/// a⁻¹ ∘ b: the pose of b expressed in the frame of a.
PoseSE3 se3_relative(const PoseSE3& pose_a, const PoseSE3& pose_b);

/// Rotation of `degrees` about +z.
Eigen::Matrix3d rot_z(double degrees);

/// Wraps an angle to (-180, 180].
double wrap_degrees(double degrees);

/// atan2(R(1,0), R(0,0)) in degrees, wrapped.
double yaw_from_rotation(const Eigen::Matrix3d& rotation);

struct NormalizeResult {
  Eigen::VectorXd values;
  bool zero_norm = false;
};

/// Returns v/‖v‖. Inputs with norm below 1e-12 come back unchanged with
/// `zero_norm` set; the caller decides what to do with them.
NormalizeResult l2_normalize(const Eigen::Ref<const Eigen::VectorXd>& v);

/// Dot product clamped to [-1, 1]. Throws std::invalid_argument on a
/// dimension mismatch.
double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b);

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  PoseSE3 cam_from_lidar;

  /// Throws std::invalid_argument when focal lengths or principal point are
  /// out of range.
  void validate() const;
};

enum class ProjectionStatus : std::uint8_t { kValid, kBehindCamera, kOutOfBounds };

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  ProjectionStatus status = ProjectionStatus::kValid;

  [[nodiscard]] bool valid() const { return status == ProjectionStatus::kValid; }
};

/// Pinhole projection of a camera-frame point. Depth is the camera z.
Projection project_to_image(const Eigen::Vector3d& point_cam,
                            const CameraIntrinsics& intr);

/// Inverse of project_to_image at a known depth.
Eigen::Vector3d unproject(double u, double v, double depth,
                          const CameraIntrinsics& intr);

}  // namespace mprf::core
