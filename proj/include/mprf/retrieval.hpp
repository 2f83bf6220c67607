#pragma once

// Cosine-similarity index over global descriptors and the two-stage
// (global shortlist, refinement re-rank) retrieval built on top of it.

#include "mprf/aggregation.hpp"
#include "mprf/core.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace mprf::retrieval {

using core::FrameId;

struct ScoredFrame {
  FrameId frame_id = 0;
  double score = 0.0;

  friend bool operator==(const ScoredFrame&, const ScoredFrame&) = default;
};

/// Descending by score; equal scores are ordered by ascending frame id.
using Shortlist = std::vector<ScoredFrame>;

/// Returns true for frames that must not be returned (e.g. temporal
/// neighbours of the query). An empty function excludes nothing.
using ExcludeFn = std::function<bool(FrameId)>;

enum class IndexMode : std::uint8_t { kExact, kInvertedFile };

struct IvfParams {
  /// Coarse lists; 0 picks round(sqrt(N)) at training time.
  int n_lists = 0;
  int n_probe = 4;
};

class DescriptorIndex {
 public:
  explicit DescriptorIndex(IndexMode mode = IndexMode::kExact, IvfParams ivf = {});

  /// Throws std::invalid_argument on a duplicate id, a zero-flagged or
  /// non-unit descriptor, or a dimension mismatch; std::logic_error once frozen.
  void add(FrameId frame_id, const aggregation::GlobalDescriptor& desc);
  void add(FrameId frame_id, const Eigen::Ref<const Eigen::VectorXd>& unit_values);

  /// Builds the coarse quantizer for inverted-file mode. No-op in exact mode.
  void train_lists(std::uint64_t seed = 0);

  /// After freezing the index is read-only and safe to query concurrently.
  void freeze() { frozen_ = true; }
  [[nodiscard]] bool frozen() const { return frozen_; }

  /// Top-k by cosine similarity among non-excluded entries. Throws
  /// std::runtime_error on an empty index and std::logic_error when an
  /// inverted-file index has not been trained.
  [[nodiscard]] Shortlist search_topk(const Eigen::Ref<const Eigen::VectorXd>& query, int k,
                                      const ExcludeFn& exclude = {}) const;

  [[nodiscard]] std::size_t size() const { return ids_.size(); }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] IndexMode mode() const { return mode_; }
  [[nodiscard]] const IvfParams& ivf_params() const { return ivf_; }
  [[nodiscard]] bool contains(FrameId id) const { return row_of_.contains(id); }
  [[nodiscard]] const std::vector<FrameId>& ids() const { return ids_; }
  [[nodiscard]] Eigen::Map<const Eigen::VectorXd> descriptor(std::size_t row) const;

  void set_n_probe(int n_probe) { ivf_.n_probe = n_probe; }

 private:
  [[nodiscard]] double score_row(std::size_t row,
                                 const Eigen::Ref<const Eigen::VectorXd>& query) const;
  [[nodiscard]] std::vector<std::size_t> probe_rows(
      const Eigen::Ref<const Eigen::VectorXd>& query) const;

  IndexMode mode_;
  IvfParams ivf_;
  int dim_ = 0;
  bool frozen_ = false;
  std::vector<FrameId> ids_;
  std::vector<double> values_;  // row-major, one descriptor per row
  std::unordered_map<FrameId, std::size_t> row_of_;
  Eigen::MatrixXd coarse_centers_;
  std::vector<std::vector<std::size_t>> lists_;
};

/// Refinement descriptors keyed by frame id.
class RefinementStore {
 public:
  void add(FrameId frame_id, const aggregation::RefinementDescriptor& desc);
  [[nodiscard]] const aggregation::RefinementDescriptor* find(FrameId frame_id) const;
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] const std::vector<FrameId>& ids() const { return order_; }

 private:
  std::unordered_map<FrameId, aggregation::RefinementDescriptor> entries_;
  std::vector<FrameId> order_;
};

/// Stage 1 takes the global top-n1; stage 2 re-scores those by refinement
/// cosine similarity and keeps the best n2.
///
/// Throws std::invalid_argument if n2 > n1 or n2 < 1, and std::runtime_error
/// when a shortlisted frame has no refinement descriptor.
Shortlist two_stage_retrieve(const aggregation::GlobalDescriptor& query_global,
                             const aggregation::RefinementDescriptor& query_refine,
                             const DescriptorIndex& index, const RefinementStore& store,
                             int n1, int n2, const ExcludeFn& exclude = {});

// Persistence: MPRF magic, record tag, u64 count, then per entry
// u64 frame_id, u32 dim, f32[dim].
void write_index(std::ostream& out, const DescriptorIndex& index);
DescriptorIndex read_index(std::istream& in, IndexMode mode = IndexMode::kExact,
                           IvfParams ivf = {});
void write_refinement_store(std::ostream& out, const RefinementStore& store);
RefinementStore read_refinement_store(std::istream& in);

void save_index(const std::string& path, const DescriptorIndex& index);
DescriptorIndex load_index(const std::string& path, IndexMode mode = IndexMode::kExact,
                           IvfParams ivf = {});
void save_refinement_store(const std::string& path, const RefinementStore& store);
RefinementStore load_refinement_store(const std::string& path);

}  // namespace mprf::retrieval
