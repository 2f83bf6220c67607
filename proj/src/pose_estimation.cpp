#include "mprf/pose_estimation.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace mprf::pose {

namespace {

constexpr double kCollinearRatio = 1e-9;
constexpr double kCoincident = 1e-12;

struct InlierSet {
  std::vector<int> indices;
  double rmse = 0.0;
};

InlierSet collect_inliers(const PoseSE3& t, std::span<const Eigen::Vector3d> src,
                          std::span<const Eigen::Vector3d> dst, double threshold) {
  InlierSet out;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double r = (t.apply(src[i]) - dst[i]).norm();
    if (r <= threshold) {
      out.indices.push_back(static_cast<int>(i));
      sum_sq += r * r;
    }
  }
  if (!out.indices.empty()) out.rmse = std::sqrt(sum_sq / static_cast<double>(out.indices.size()));
  return out;
}

bool better(const InlierSet& a, const InlierSet& b) {
  if (a.indices.size() != b.indices.size()) return a.indices.size() > b.indices.size();
  return a.rmse < b.rmse;
}

int adaptive_bound(std::size_t inliers, std::size_t total, const RansacConfig& cfg) {
  const double w = static_cast<double>(inliers) / static_cast<double>(total);
  if (w >= 1.0) return 1;
  const double all_inlier = std::pow(w, cfg.sample_size);
  if (all_inlier <= 0.0) return cfg.max_iterations;
  const double n = std::log(1.0 - cfg.confidence) / std::log1p(-all_inlier);
  if (!std::isfinite(n) || n >= cfg.max_iterations) return cfg.max_iterations;
  return std::max(1, static_cast<int>(std::ceil(n)));
}

// Uniform hash grid over dst with cell side = search radius.
class RadiusGrid {
 public:
  RadiusGrid(std::span<const Eigen::Vector3d> points, double radius)
      : points_(points), radius_(radius) {
    for (std::size_t i = 0; i < points.size(); ++i) cells_[key(cell_of(points[i]))].push_back(i);
  }

  /// Nearest point within the radius, or -1.
  [[nodiscard]] std::ptrdiff_t nearest(const Eigen::Vector3d& q, double& dist) const {
    const Eigen::Vector3i c = cell_of(q);
    std::ptrdiff_t best = -1;
    double best_sq = radius_ * radius_;
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const auto it = cells_.find(key(c + Eigen::Vector3i(dx, dy, dz)));
          if (it == cells_.end()) continue;
          for (const std::size_t i : it->second) {
            const double d = (points_[i] - q).squaredNorm();
            if (d < best_sq || (d == best_sq && (best < 0 || static_cast<std::ptrdiff_t>(i) < best))) {
              best_sq = d;
              best = static_cast<std::ptrdiff_t>(i);
            }
          }
        }
      }
    }
    dist = std::sqrt(best_sq);
    return best;
  }

 private:
  [[nodiscard]] Eigen::Vector3i cell_of(const Eigen::Vector3d& p) const {
    return (p / radius_).array().floor().cast<int>();
  }
  static std::int64_t key(const Eigen::Vector3i& c) {
    const auto h = [](int v) { return static_cast<std::int64_t>(v) & 0x1FFFFF; };
    return (h(c.x()) << 42) | (h(c.y()) << 21) | h(c.z());
  }

  std::span<const Eigen::Vector3d> points_;
  double radius_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

struct Pairing {
  PointList src;
  PointList dst;
  double rmse = 0.0;
};

Pairing pair_up(const PoseSE3& t, std::span<const Eigen::Vector3d> src, const RadiusGrid& grid,
                std::span<const Eigen::Vector3d> dst) {
  Pairing p;
  double sum_sq = 0.0;
  for (const auto& s : src) {
    double d = 0.0;
    const auto j = grid.nearest(t.apply(s), d);
    if (j < 0) continue;
    p.src.push_back(s);
    p.dst.push_back(dst[static_cast<std::size_t>(j)]);
    sum_sq += d * d;
  }
  if (!p.src.empty()) p.rmse = std::sqrt(sum_sq / static_cast<double>(p.src.size()));
  return p;
}

}  // namespace

std::optional<PoseSE3> kabsch(std::span<const Eigen::Vector3d> src,
                              std::span<const Eigen::Vector3d> dst) {
  if (src.size() != dst.size() || src.size() < 3) return std::nullopt;
  const double n = static_cast<double>(src.size());
  Eigen::Vector3d src_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d dst_mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= n;
  dst_mean /= n;

  Eigen::Matrix3d src_scatter = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Eigen::Vector3d a = src[i] - src_mean;
    src_scatter += a * a.transpose();
    cross += a * (dst[i] - dst_mean).transpose();
  }

  // Collinear sources leave a rotation about their common line unresolved.
  const Eigen::Vector3d spread =
      Eigen::JacobiSVD<Eigen::Matrix3d>(src_scatter).singularValues();
  if (spread(0) < kCoincident || spread(1) < kCollinearRatio * spread(0)) return std::nullopt;

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  PoseSE3 t;
  t.rotation = v * d * u.transpose();
  t.translation = dst_mean - t.rotation * src_mean;
  return t;
}

void RansacConfig::validate() const {
  if (sample_size < 3) throw std::invalid_argument("ransac: sample_size must be >= 3");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("ransac: confidence must lie in (0, 1)");
  }
  if (!(distance_threshold > 0.0)) throw std::invalid_argument("ransac: distance_threshold must be > 0");
  if (max_iterations < 1) throw std::invalid_argument("ransac: max_iterations must be >= 1");
  if (min_inliers < 1) throw std::invalid_argument("ransac: min_inliers must be >= 1");
}

RegistrationResult ransac_register(std::span<const Eigen::Vector3d> src,
                                   std::span<const Eigen::Vector3d> dst,
                                   const RansacConfig& cfg) {
  cfg.validate();
  if (src.size() != dst.size()) throw std::invalid_argument("ransac: src/dst size mismatch");
  if (src.size() < static_cast<std::size_t>(cfg.sample_size)) {
    throw std::invalid_argument("ransac: too few correspondences (" + std::to_string(src.size()) +
                                " < " + std::to_string(cfg.sample_size) + ")");
  }

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, src.size() - 1);
  std::vector<std::size_t> sample;
  PointList sample_src(static_cast<std::size_t>(cfg.sample_size));
  PointList sample_dst(static_cast<std::size_t>(cfg.sample_size));

  RegistrationResult result;
  InlierSet best;
  bool have_best = false;
  int bound = cfg.max_iterations;
  int it = 0;
  for (; it < bound; ++it) {
    sample.clear();
    while (sample.size() < static_cast<std::size_t>(cfg.sample_size)) {
      const std::size_t idx = pick(rng);
      if (std::find(sample.begin(), sample.end(), idx) == sample.end()) sample.push_back(idx);
    }
    for (std::size_t s = 0; s < sample.size(); ++s) {
      sample_src[s] = src[sample[s]];
      sample_dst[s] = dst[sample[s]];
    }
    const auto hypothesis = kabsch(sample_src, sample_dst);
    if (!hypothesis) continue;
    auto inliers = collect_inliers(*hypothesis, src, dst, cfg.distance_threshold);
    if (!have_best || better(inliers, best)) {
      best = std::move(inliers);
      result.transform = *hypothesis;
      have_best = true;
      bound = std::min(bound, adaptive_bound(best.indices.size(), src.size(), cfg));
    }
  }
  result.iterations_run = it;

  if (!have_best || best.indices.size() < static_cast<std::size_t>(cfg.min_inliers)) {
    result.valid = false;
    if (have_best) {
      result.inlier_indices = std::move(best.indices);
      result.inlier_rmse = best.rmse;
    }
    return result;
  }

  PointList in_src, in_dst;
  for (const int i : best.indices) {
    in_src.push_back(src[static_cast<std::size_t>(i)]);
    in_dst.push_back(dst[static_cast<std::size_t>(i)]);
  }
  // Keep the refit only if it holds on to at least as many inliers.
  if (const auto refit = kabsch(in_src, in_dst)) {
    auto refit_inliers = collect_inliers(*refit, src, dst, cfg.distance_threshold);
    if (refit_inliers.indices.size() >= best.indices.size()) {
      best = std::move(refit_inliers);
      result.transform = *refit;
    }
  }
  result.inlier_indices = std::move(best.indices);
  result.inlier_rmse = best.rmse;
  result.valid = true;
  return result;
}

IcpResult icp_refine(std::span<const Eigen::Vector3d> src_cloud,
                     std::span<const Eigen::Vector3d> dst_cloud, const PoseSE3& init,
                     double max_corr_dist, int max_iters) {
  if (src_cloud.empty() || dst_cloud.empty()) throw std::invalid_argument("icp: empty cloud");
  if (!(max_corr_dist > 0.0)) throw std::invalid_argument("icp: max_corr_dist must be > 0");
  if (!init.is_valid(1e-6)) throw std::invalid_argument("icp: init is not a rigid transform");

  const RadiusGrid grid(dst_cloud, max_corr_dist);
  IcpResult result;
  result.transform = init;
  Pairing pairs = pair_up(init, src_cloud, grid, dst_cloud);
  if (pairs.src.empty()) {
    result.no_overlap = true;
    return result;
  }
  result.rmse_history.push_back(pairs.rmse);

  for (int iter = 1; iter <= max_iters; ++iter) {
    const auto update = kabsch(pairs.src, pairs.dst);
    if (!update) break;
    Pairing next = pair_up(*update, src_cloud, grid, dst_cloud);
    if (next.src.empty() || next.rmse > pairs.rmse) break;
    const double change = (update->matrix() - result.transform.matrix()).norm();
    result.transform = *update;
    result.iterations = iter;
    result.rmse_history.push_back(next.rmse);
    pairs = std::move(next);
    if (change < 1e-6) {
      result.converged = true;
      break;
    }
  }
  return result;
}

PoseErrors pose_errors(const PoseSE3& est, const PoseSE3& gt) {
  const PoseSE3 delta = core::se3_relative(gt, est);
  return {std::abs(core::yaw_from_rotation(delta.rotation)), std::abs(delta.translation.x()),
          std::abs(delta.translation.y())};
}

retrieval::Shortlist rerank_by_pose(const retrieval::Shortlist& shortlist,
                                    std::span<const RegistrationResult> results,
                                    RerankMode mode) {
  if (results.size() != shortlist.size()) {
    throw std::invalid_argument("rerank_by_pose: one registration result per candidate required");
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < shortlist.size(); ++i) {
    if (results[i].valid) keep.push_back(i);
  }
  const auto distance = [&](std::size_t i) { return results[i].transform.translation.norm(); };
  std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
    if (mode == RerankMode::kInlierCount) {
      const auto na = results[a].inlier_indices.size();
      const auto nb = results[b].inlier_indices.size();
      if (na != nb) return na > nb;
    } else if (distance(a) != distance(b)) {
      return distance(a) < distance(b);
    }
    if (shortlist[a].score != shortlist[b].score) return shortlist[a].score > shortlist[b].score;
    return shortlist[a].frame_id < shortlist[b].frame_id;
  });
  retrieval::Shortlist out;
  out.reserve(keep.size());
  for (const std::size_t i : keep) out.push_back(shortlist[i]);
  return out;
}

}  // namespace mprf::pose
