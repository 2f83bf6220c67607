#include "mprf/fusion.hpp"

#include "mprf/binary_io.hpp"
#include "mprf/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace mprf::fusion {

namespace {

constexpr double kPadSimilarity = -1.0;

double median(std::vector<double> values) {
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

struct PatchHit {
  double depth;
  double pixel_dist_sq;
  Eigen::Index point;
};

}  // namespace

void LidarScan::validate() const {
  if (points.rows() < 1) throw std::invalid_argument("lidar scan: no points");
  if (!points.allFinite()) throw std::invalid_argument("lidar scan: non-finite coordinates");
  if (descriptors.rows() != points.rows()) {
    throw std::invalid_argument("lidar scan: descriptor count does not match point count");
  }
}

std::optional<Eigen::VectorXd> fuse_descriptors(const Eigen::Ref<const Eigen::VectorXd>& visual,
                                                const Eigen::Ref<const Eigen::VectorXd>& lidar) {
  const auto v = core::l2_normalize(visual);
  const auto l = core::l2_normalize(lidar);
  if (v.zero_norm || l.zero_norm) return std::nullopt;
  Eigen::VectorXd fused(visual.size() + lidar.size());
  fused << v.values, l.values;
  return fused;
}

FusedPointSet lift_patches(const Eigen::Ref<const Eigen::MatrixXd>& patch_feats,
                           const LidarScan& scan, const core::CameraIntrinsics& intr,
                           const PatchGrid& grid) {
  if (grid.rows < 1 || grid.cols < 1) throw std::invalid_argument("lift_patches: empty patch grid");
  if (patch_feats.rows() != grid.size()) {
    throw std::invalid_argument("lift_patches: expected " + std::to_string(grid.size()) +
                                " patch features, got " + std::to_string(patch_feats.rows()));
  }
  scan.validate();

  const double patch_w = static_cast<double>(intr.width) / grid.cols;
  const double patch_h = static_cast<double>(intr.height) / grid.rows;
  const auto center_of = [&](int patch) {
    return Eigen::Vector2d((patch % grid.cols + 0.5) * patch_w, (patch / grid.cols + 0.5) * patch_h);
  };

  std::vector<std::vector<PatchHit>> hits(static_cast<std::size_t>(grid.size()));
  for (Eigen::Index i = 0; i < scan.points.rows(); ++i) {
    const Eigen::Vector3d p_cam = intr.cam_from_lidar.apply(scan.points.row(i).transpose());
    const auto proj = core::project_to_image(p_cam, intr);
    if (!proj.valid()) continue;
    const int col = std::min(grid.cols - 1, static_cast<int>(proj.u / patch_w));
    const int row = std::min(grid.rows - 1, static_cast<int>(proj.v / patch_h));
    const int patch = row * grid.cols + col;
    const double dist_sq = (Eigen::Vector2d(proj.u, proj.v) - center_of(patch)).squaredNorm();
    hits[static_cast<std::size_t>(patch)].push_back({proj.depth, dist_sq, i});
  }

  FusedPointSet out;
  out.visual_dim = static_cast<int>(patch_feats.cols());
  std::vector<Eigen::VectorXd> rows;
  for (int patch = 0; patch < grid.size(); ++patch) {
    const auto& in_patch = hits[static_cast<std::size_t>(patch)];
    if (in_patch.empty()) continue;
    std::vector<double> depths;
    depths.reserve(in_patch.size());
    for (const auto& h : in_patch) depths.push_back(h.depth);
    const auto nearest = std::min_element(in_patch.begin(), in_patch.end(),
                                          [](const PatchHit& a, const PatchHit& b) {
                                            return a.pixel_dist_sq < b.pixel_dist_sq;
                                          });
    auto fused = fuse_descriptors(patch_feats.row(patch).transpose(),
                                  scan.descriptors.row(nearest->point).transpose());
    if (!fused) continue;
    const Eigen::Vector2d c = center_of(patch);
    out.points.push_back(core::unproject(c.x(), c.y(), median(std::move(depths)), intr));
    out.patch_ids.push_back(patch);
    rows.push_back(std::move(*fused));
  }
  if (!rows.empty()) {
    out.descriptors.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.descriptors.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    }
  }
  return out;
}

Eigen::MatrixXd fused_similarity(const FusedPointSet& a, const FusedPointSet& b) {
  if (a.descriptors.cols() != b.descriptors.cols()) {
    throw std::invalid_argument("fused_similarity: descriptor dims differ");
  }
  const Eigen::MatrixXd na = a.descriptors.rowwise().normalized();
  const Eigen::MatrixXd nb = b.descriptors.rowwise().normalized();
  return (na * nb.transpose()).cwiseMax(-1.0).cwiseMin(1.0);
}

CorrespondenceSet match_similarity(const Eigen::Ref<const Eigen::MatrixXd>& similarity,
                                   double threshold, ThresholdStage stage) {
  if (similarity.rows() == 0 || similarity.cols() == 0) {
    throw std::invalid_argument("match_correspondences: empty point set");
  }
  std::vector<int> assignment;
  if (stage == ThresholdStage::kBeforeAssignment) {
    const Eigen::MatrixXd masked =
        (similarity.array() < threshold).select(kPadSimilarity, similarity);
    assignment = solve_max_assignment(masked, kPadSimilarity);
  } else {
    assignment = solve_max_assignment(similarity, kPadSimilarity);
  }
  CorrespondenceSet out;
  for (std::size_t r = 0; r < assignment.size(); ++r) {
    const int c = assignment[r];
    if (c < 0) continue;
    const double s = similarity(static_cast<Eigen::Index>(r), c);
    if (s >= threshold) out.pairs.push_back({static_cast<int>(r), c, s});
  }
  return out;
}

CorrespondenceSet match_correspondences(const FusedPointSet& a, const FusedPointSet& b,
                                        double threshold, ThresholdStage stage) {
  if (a.empty() || b.empty()) throw std::invalid_argument("match_correspondences: empty point set");
  return match_similarity(fused_similarity(a, b), threshold, stage);
}

void write_lidar_scan(std::ostream& out, const LidarScan& scan) {
  scan.validate();
  io::BinaryWriter w(out);
  w.header(io::RecordType::kLidarScan);
  w.u32(static_cast<std::uint32_t>(scan.points.rows()));
  w.u32(static_cast<std::uint32_t>(scan.descriptors.cols()));
  w.f32_matrix(scan.points);
  w.f32_matrix(scan.descriptors);
}

LidarScan read_lidar_scan(std::istream& in) {
  io::BinaryReader r(in);
  r.expect_header(io::RecordType::kLidarScan);
  const auto m = r.u32();
  const auto d = r.u32();
  LidarScan scan;
  scan.points = r.f32_matrix(m, 3);
  scan.descriptors = r.f32_matrix(m, d);
  try {
    scan.validate();
  } catch (const std::invalid_argument& e) {
    throw io::FormatError(e.what());
  }
  return scan;
}

void save_lidar_scan(const std::string& path, const LidarScan& scan) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_lidar_scan(out, scan);
}

LidarScan load_lidar_scan(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_lidar_scan(in);
}

void write_patch_embeddings(std::ostream& out, const PatchLayers& layers) {
  if (layers.empty()) throw std::invalid_argument("patch embeddings: no layers");
  for (const auto& l : layers) {
    if (l.rows() != layers.front().rows() || l.cols() != layers.front().cols()) {
      throw std::invalid_argument("patch embeddings: layers differ in shape");
    }
  }
  io::BinaryWriter w(out);
  w.header(io::RecordType::kPatchEmbedding);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  w.u32(static_cast<std::uint32_t>(layers.front().rows()));
  w.u32(static_cast<std::uint32_t>(layers.front().cols()));
  for (const auto& l : layers) w.f32_matrix(l);
}

PatchLayers read_patch_embeddings(std::istream& in) {
  io::BinaryReader r(in);
  r.expect_header(io::RecordType::kPatchEmbedding);
  const auto n_layers = r.u32();
  const auto patches = r.u32();
  const auto dim = r.u32();
  if (n_layers == 0 || n_layers > 64) throw io::FormatError("patch embeddings: bad layer count");
  PatchLayers layers;
  for (std::uint32_t l = 0; l < n_layers; ++l) layers.push_back(r.f32_matrix(patches, dim));
  return layers;
}

void save_patch_embeddings(const std::string& path, const PatchLayers& layers) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_patch_embeddings(out, layers);
}

PatchLayers load_patch_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_patch_embeddings(in);
}

}  // namespace mprf::fusion
