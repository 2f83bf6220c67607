#include "mprf/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mprf::core {

namespace {
constexpr double kDegPerRad = 180.0 / std::numbers::pi;
constexpr double kZeroNorm = 1e-12;
constexpr double kMinDepth = 1e-6;
}  // namespace

PoseSE3 PoseSE3::from_quaternion(const Eigen::Quaterniond& q,
                                 const Eigen::Vector3d& t) {
  PoseSE3 pose;
  pose.rotation = q.normalized().toRotationMatrix();
  pose.translation = t;
  return pose;
}

PoseSE3 PoseSE3::inverse() const {
  PoseSE3 inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

Eigen::Matrix4d PoseSE3::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool PoseSE3::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if (((gram - Eigen::Matrix3d::Identity()).array().abs() > tol).any()) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

PoseSE3 operator*(const PoseSE3& lhs, const PoseSE3& rhs) {
  PoseSE3 out;
  out.rotation = lhs.rotation * rhs.rotation;
  out.translation = lhs.rotation * rhs.translation + lhs.translation;
  return out;
}

PoseSE3 se3_relative(const PoseSE3& pose_a, const PoseSE3& pose_b) {
  return pose_a.inverse() * pose_b;
}

Eigen::Matrix3d rot_z(double degrees) {
  return Eigen::AngleAxisd(degrees / kDegPerRad, Eigen::Vector3d::UnitZ())
      .toRotationMatrix();
}

double wrap_degrees(double degrees) {
  double r = std::fmod(degrees, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r;
}

double yaw_from_rotation(const Eigen::Matrix3d& rotation) {
  return wrap_degrees(std::atan2(rotation(1, 0), rotation(0, 0)) * kDegPerRad);
}

NormalizeResult l2_normalize(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double norm = v.norm();
  if (!(norm >= kZeroNorm)) return {v, true};
  return {v / norm, false};
}

double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  return std::clamp(a.dot(b), -1.0, 1.0);
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("camera intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("camera intrinsics: image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw std::invalid_argument("camera intrinsics: principal point outside image");
  }
  if (!cam_from_lidar.is_valid(1e-6)) {
    throw std::invalid_argument("camera intrinsics: cam_from_lidar is not a rigid transform");
  }
}

Projection project_to_image(const Eigen::Vector3d& point_cam,
                            const CameraIntrinsics& intr) {
  Projection proj;
  proj.depth = point_cam.z();
  if (!(point_cam.z() > kMinDepth)) {
    proj.status = ProjectionStatus::kBehindCamera;
    return proj;
  }
  proj.u = intr.fx * point_cam.x() / point_cam.z() + intr.cx;
  proj.v = intr.fy * point_cam.y() / point_cam.z() + intr.cy;
  if (!(proj.u >= 0.0 && proj.u < intr.width && proj.v >= 0.0 && proj.v < intr.height)) {
    proj.status = ProjectionStatus::kOutOfBounds;
  }
  return proj;
}

Eigen::Vector3d unproject(double u, double v, double depth,
                          const CameraIntrinsics& intr) {
  return {(u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth};
}

}  // namespace mprf::core
