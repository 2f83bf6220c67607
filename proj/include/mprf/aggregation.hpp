#pragma once

// Global descriptor aggregation: patch-to-cluster scoring, optimal-transport
// assignment with a dustbin column, and VLAD-style accumulation. Also the
// multi-layer refinement descriptor used by the second retrieval stage.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>

namespace mprf::aggregation {

/// Cluster prototypes plus the linear feature reduction applied before
/// accumulation. Immutable once built.
struct ClusterBank {
  Eigen::MatrixXd centers;     // K × d_in
  Eigen::MatrixXd projection;  // d_in × d_proj
  double dustbin_score = 0.0;

  [[nodiscard]] int clusters() const { return static_cast<int>(centers.rows()); }
  [[nodiscard]] int input_dim() const { return static_cast<int>(centers.cols()); }
  [[nodiscard]] int projected_dim() const { return static_cast<int>(projection.cols()); }
  [[nodiscard]] int descriptor_dim() const { return clusters() * projected_dim(); }

  /// Shape and finiteness checks; throws std::invalid_argument.
  void validate() const;
};

/// Unsupervised stand-in for learned aggregation parameters: k-means++
/// centers and the top principal directions of `sample_features` (N × d_in).
///
/// Throws std::invalid_argument if N < K, d_proj > d_in, or every sample is
/// identical.
ClusterBank fit_cluster_bank(const Eigen::Ref<const Eigen::MatrixXd>& sample_features,
                             int clusters, int projected_dim, std::uint64_t seed);

void write_cluster_bank(std::ostream& out, const ClusterBank& bank);
ClusterBank read_cluster_bank(std::istream& in);
void save_cluster_bank(const std::string& path, const ClusterBank& bank);
ClusterBank load_cluster_bank(const std::string& path);

/// P × (K+1) scores: feature·center for the K real clusters, and the bank's
/// dustbin score in the last column.
Eigen::MatrixXd score_matrix(const Eigen::Ref<const Eigen::MatrixXd>& patch_feats,
                             const ClusterBank& bank);

/// Soft patch-to-cluster assignment. Row p holds patch p's mass over the K
/// real clusters and the dustbin (last column); every row sums to 1.
struct AssignmentMatrix {
  Eigen::MatrixXd weights;
};

struct SinkhornOptions {
  int iterations = 3;
  double temperature = 1.0;
};

/// Log-domain Sinkhorn on exp(S / temperature). Row marginals are 1 and column
/// marginals P/(K+1); each iteration normalises columns then rows.
///
/// Throws std::invalid_argument on non-finite scores, an empty matrix,
/// iterations < 1 or temperature <= 0.
AssignmentMatrix sinkhorn_assign(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                                 const SinkhornOptions& options = {});

struct GlobalDescriptor {
  Eigen::VectorXd values;
  /// Set when every real-cluster aggregate vanished (all mass in the dustbin).
  bool zero = false;
};

GlobalDescriptor aggregate_global(const Eigen::Ref<const Eigen::MatrixXd>& patch_feats,
                                  const AssignmentMatrix& assignment,
                                  const ClusterBank& bank);

/// score_matrix → sinkhorn_assign → aggregate_global.
GlobalDescriptor compute_global_descriptor(
    const Eigen::Ref<const Eigen::MatrixXd>& patch_feats, const ClusterBank& bank,
    const SinkhornOptions& options = {});

struct RefinementDescriptor {
  Eigen::VectorXd values;
  bool zero = false;
};

/// Three P × d_in layers; the descriptor is the patch mean of the per-patch
/// concatenation, l2-normalised.
using LayerStack = std::array<Eigen::MatrixXd, 3>;

RefinementDescriptor refine_descriptor(const LayerStack& layers);

}  // namespace mprf::aggregation
