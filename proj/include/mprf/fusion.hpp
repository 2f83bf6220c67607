#pragma once

// Visual/LiDAR fusion: lift image patches to 3D with LiDAR depth, attach a
// LiDAR descriptor to each, and match fused descriptors one-to-one.

#include "mprf/core.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mprf::fusion {

struct LidarScan {
  Eigen::MatrixX3d points;      // M × 3, metres, LiDAR frame
  Eigen::MatrixXd descriptors;  // M × d_lidar

  /// Throws std::invalid_argument on an empty scan, non-finite coordinates or
  /// a point/descriptor count mismatch.
  void validate() const;
};

/// Patch layout of the backbone input image; row-major patch indices.
struct PatchGrid {
  int rows = 16;
  int cols = 16;

  [[nodiscard]] int size() const { return rows * cols; }
};

struct FusedPointSet {
  std::vector<Eigen::Vector3d> points;  // camera frame
  /// Q × (d_vis + d_lidar); each block is independently unit-norm.
  Eigen::MatrixXd descriptors;
  std::vector<int> patch_ids;
  int visual_dim = 0;

  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] bool empty() const { return points.empty(); }
};

/// concat(normalize(visual), normalize(lidar)); nullopt when either block has
/// zero norm and the point must be dropped.
std::optional<Eigen::VectorXd> fuse_descriptors(const Eigen::Ref<const Eigen::VectorXd>& visual,
                                                const Eigen::Ref<const Eigen::VectorXd>& lidar);

/// Lifts each patch that receives at least one projected LiDAR point.
///
/// Depth per patch is the median projected depth inside its footprint; the 3D
/// location is the patch-centre ray at that depth; the LiDAR descriptor comes
/// from the projected point nearest the patch centre. An empty result means no
/// scan point landed in the image (or every candidate was dropped).
///
/// Throws std::invalid_argument if patch_feats does not have grid.size() rows.
FusedPointSet lift_patches(const Eigen::Ref<const Eigen::MatrixXd>& patch_feats,
                           const LidarScan& scan, const core::CameraIntrinsics& intr,
                           const PatchGrid& grid = {});

enum class ThresholdStage : std::uint8_t {
  kAfterAssignment,   // solve the assignment, then drop weak pairs
  kBeforeAssignment,  // mask weak similarities first, then solve
};

struct Correspondence {
  int query_idx = 0;
  int candidate_idx = 0;
  double similarity = 0.0;
};

struct CorrespondenceSet {
  std::vector<Correspondence> pairs;

  [[nodiscard]] std::size_t size() const { return pairs.size(); }
};

/// Cosine similarity of every fused pair (rows of a against rows of b).
Eigen::MatrixXd fused_similarity(const FusedPointSet& a, const FusedPointSet& b);

/// One-to-one matches that maximise total similarity, keeping those at or
/// above `threshold`. Throws std::invalid_argument when either set is empty.
CorrespondenceSet match_correspondences(const FusedPointSet& a, const FusedPointSet& b,
                                        double threshold = 0.90,
                                        ThresholdStage stage = ThresholdStage::kAfterAssignment);

/// Same as above on a precomputed similarity matrix.
CorrespondenceSet match_similarity(const Eigen::Ref<const Eigen::MatrixXd>& similarity,
                                   double threshold = 0.90,
                                   ThresholdStage stage = ThresholdStage::kAfterAssignment);

// Scan file: MPRF magic, tag, u32 M, u32 d_lidar, f32[M×3], f32[M×d_lidar].
void write_lidar_scan(std::ostream& out, const LidarScan& scan);
LidarScan read_lidar_scan(std::istream& in);
void save_lidar_scan(const std::string& path, const LidarScan& scan);
LidarScan load_lidar_scan(const std::string& path);

// Patch-embedding file: MPRF magic, tag, u32 layers, u32 P, u32 d_in,
// f32[layers×P×d_in].
using PatchLayers = std::vector<Eigen::MatrixXd>;
void write_patch_embeddings(std::ostream& out, const PatchLayers& layers);
PatchLayers read_patch_embeddings(std::istream& in);
void save_patch_embeddings(const std::string& path, const PatchLayers& layers);
PatchLayers load_patch_embeddings(const std::string& path);

}  // namespace mprf::fusion
