#include "mprf/aggregation.hpp"

#include "mprf/binary_io.hpp"
#include "mprf/core.hpp"
#include "mprf/kmeans.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mprf::aggregation {

namespace {

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

void require_shape(const Eigen::Ref<const Eigen::MatrixXd>& feats, const ClusterBank& bank,
                   const char* what) {
  if (feats.cols() != bank.input_dim()) {
    throw std::invalid_argument(std::string(what) + ": feature dim " +
                                std::to_string(feats.cols()) + " does not match bank dim " +
                                std::to_string(bank.input_dim()));
  }
}

}  // namespace

void ClusterBank::validate() const {
  if (centers.rows() < 1 || centers.cols() < 1) {
    throw std::invalid_argument("cluster bank: no centers");
  }
  if (projection.rows() != centers.cols() || projection.cols() < 1) {
    throw std::invalid_argument("cluster bank: projection shape does not match centers");
  }
  if (!centers.allFinite() || !projection.allFinite() || !std::isfinite(dustbin_score)) {
    throw std::invalid_argument("cluster bank: non-finite parameters");
  }
}

ClusterBank fit_cluster_bank(const Eigen::Ref<const Eigen::MatrixXd>& sample_features,
                             int clusters, int projected_dim, std::uint64_t seed) {
  const Eigen::Index n = sample_features.rows();
  const Eigen::Index d_in = sample_features.cols();
  if (clusters < 1 || n < clusters) {
    throw std::invalid_argument("fit_cluster_bank: need at least K samples");
  }
  if (projected_dim < 1 || projected_dim > d_in) {
    throw std::invalid_argument("fit_cluster_bank: projected dim must be in [1, d_in]");
  }
  if (!sample_features.allFinite()) {
    throw std::invalid_argument("fit_cluster_bank: non-finite features");
  }
  const Eigen::RowVectorXd mean = sample_features.colwise().mean();
  const Eigen::MatrixXd centered = sample_features.rowwise() - mean;
  if (centered.cwiseAbs().maxCoeff() == 0.0) {
    throw std::invalid_argument("fit_cluster_bank: degenerate sample (all features identical)");
  }

  ClusterBank bank;
  KMeansOptions km;
  km.seed = seed;
  bank.centers = kmeans(sample_features, clusters, km).centers;

  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("fit_cluster_bank: eigen decomposition failed");
  }
  // Eigenvalues come back ascending; take the largest and fix each sign so
  // the dominant component is positive.
  bank.projection.resize(d_in, projected_dim);
  for (int j = 0; j < projected_dim; ++j) {
    Eigen::VectorXd axis = eig.eigenvectors().col(d_in - 1 - j);
    Eigen::Index dominant = 0;
    axis.cwiseAbs().maxCoeff(&dominant);
    if (axis(dominant) < 0.0) axis = -axis;
    bank.projection.col(j) = axis;
  }
  bank.dustbin_score = 0.0;
  return bank;
}

void write_cluster_bank(std::ostream& out, const ClusterBank& bank) {
  bank.validate();
  io::BinaryWriter w(out);
  w.header(io::RecordType::kClusterBank);
  w.u32(static_cast<std::uint32_t>(bank.clusters()));
  w.u32(static_cast<std::uint32_t>(bank.input_dim()));
  w.u32(static_cast<std::uint32_t>(bank.projected_dim()));
  w.f32(static_cast<float>(bank.dustbin_score));
  w.f32_matrix(bank.centers);
  w.f32_matrix(bank.projection);
}

ClusterBank read_cluster_bank(std::istream& in) {
  io::BinaryReader r(in);
  r.expect_header(io::RecordType::kClusterBank);
  const auto k = r.u32();
  const auto d_in = r.u32();
  const auto d_proj = r.u32();
  ClusterBank bank;
  bank.dustbin_score = r.f32();
  bank.centers = r.f32_matrix(k, d_in);
  bank.projection = r.f32_matrix(d_in, d_proj);
  try {
    bank.validate();
  } catch (const std::invalid_argument& e) {
    throw io::FormatError(e.what());
  }
  return bank;
}

void save_cluster_bank(const std::string& path, const ClusterBank& bank) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_cluster_bank(out, bank);
}

ClusterBank load_cluster_bank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_cluster_bank(in);
}

Eigen::MatrixXd score_matrix(const Eigen::Ref<const Eigen::MatrixXd>& patch_feats,
                             const ClusterBank& bank) {
  require_shape(patch_feats, bank, "score_matrix");
  const int k = bank.clusters();
  Eigen::MatrixXd scores(patch_feats.rows(), k + 1);
  scores.leftCols(k) = patch_feats * bank.centers.transpose();
  scores.col(k).setConstant(bank.dustbin_score);
  return scores;
}

AssignmentMatrix sinkhorn_assign(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                                 const SinkhornOptions& options) {
  if (scores.rows() < 1 || scores.cols() < 2) {
    throw std::invalid_argument("sinkhorn_assign: need at least one patch and one cluster");
  }
  if (options.iterations < 1) {
    throw std::invalid_argument("sinkhorn_assign: iterations must be >= 1");
  }
  if (!(options.temperature > 0.0)) {
    throw std::invalid_argument("sinkhorn_assign: temperature must be positive");
  }
  if (!scores.allFinite()) {
    throw std::invalid_argument("sinkhorn_assign: non-finite scores");
  }
  const Eigen::Index rows = scores.rows();
  const Eigen::Index cols = scores.cols();
  const double log_col_mass = std::log(static_cast<double>(rows) / static_cast<double>(cols));

  Eigen::MatrixXd log_p = scores / options.temperature;
  for (int it = 0; it < options.iterations; ++it) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      log_p.col(c).array() += log_col_mass - log_sum_exp(log_p.col(c));
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      log_p.row(r).array() -= log_sum_exp(log_p.row(r).transpose());
    }
  }
  return {log_p.array().exp().matrix()};
}

GlobalDescriptor aggregate_global(const Eigen::Ref<const Eigen::MatrixXd>& patch_feats,
                                  const AssignmentMatrix& assignment,
                                  const ClusterBank& bank) {
  require_shape(patch_feats, bank, "aggregate_global");
  const int k = bank.clusters();
  if (assignment.weights.rows() != patch_feats.rows() || assignment.weights.cols() != k + 1) {
    throw std::invalid_argument("aggregate_global: assignment shape does not match features");
  }
  const int d_proj = bank.projected_dim();
  const Eigen::MatrixXd projected = patch_feats * bank.projection;  // P × d_proj
  // Row k of (Aᵀ·G) is Σ_p A[p,k]·g_p; the dustbin row is never formed.
  const Eigen::MatrixXd clusters =
      assignment.weights.leftCols(k).transpose() * projected;  // K × d_proj

  GlobalDescriptor desc;
  desc.values.resize(static_cast<Eigen::Index>(k) * d_proj);
  for (int c = 0; c < k; ++c) {
    const auto intra = core::l2_normalize(clusters.row(c).transpose());
    // Zero-norm clusters stay zero rather than becoming NaN.
    desc.values.segment(static_cast<Eigen::Index>(c) * d_proj, d_proj) =
        intra.zero_norm ? Eigen::VectorXd::Zero(d_proj) : intra.values;
  }
  auto global = core::l2_normalize(desc.values);
  desc.values = std::move(global.values);
  desc.zero = global.zero_norm;
  return desc;
}

GlobalDescriptor compute_global_descriptor(
    const Eigen::Ref<const Eigen::MatrixXd>& patch_feats, const ClusterBank& bank,
    const SinkhornOptions& options) {
  const auto assignment = sinkhorn_assign(score_matrix(patch_feats, bank), options);
  return aggregate_global(patch_feats, assignment, bank);
}

RefinementDescriptor refine_descriptor(const LayerStack& layers) {
  const Eigen::Index patches = layers[0].rows();
  const Eigen::Index dim = layers[0].cols();
  for (const auto& layer : layers) {
    if (layer.rows() != patches || layer.cols() != dim) {
      throw std::invalid_argument("refine_descriptor: layers differ in shape");
    }
  }
  if (patches == 0) throw std::invalid_argument("refine_descriptor: no patches");

  Eigen::VectorXd concat(3 * dim);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    concat.segment(static_cast<Eigen::Index>(l) * dim, dim) =
        layers[l].colwise().mean().transpose();
  }
  auto unit = core::l2_normalize(concat);
  return {std::move(unit.values), unit.zero_norm};
}

}  // namespace mprf::aggregation
