#include "mprf/retrieval.hpp"

#include "mprf/binary_io.hpp"
#include "mprf/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace mprf::retrieval {

namespace {

constexpr double kUnitTolerance = 1e-6;

bool ranks_before(const ScoredFrame& a, const ScoredFrame& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.frame_id < b.frame_id;
}

void keep_top(Shortlist& list, int k) {
  const auto n = std::min<std::size_t>(list.size(), static_cast<std::size_t>(k));
  std::partial_sort(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(n), list.end(),
                    ranks_before);
  list.resize(n);
}

void write_records(std::ostream& out, io::RecordType type, const std::vector<FrameId>& ids,
                   const std::function<Eigen::VectorXd(std::size_t)>& values_of) {
  io::BinaryWriter w(out);
  w.header(type);
  w.u64(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Eigen::VectorXd v = values_of(i);
    w.u64(ids[i]);
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.f32_matrix(v.transpose());
  }
}

template <typename Fn>
void read_records(std::istream& in, io::RecordType type, Fn&& on_record) {
  io::BinaryReader r(in);
  r.expect_header(type);
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const FrameId id = r.u64();
    const auto dim = r.u32();
    Eigen::VectorXd v = r.f32_matrix(1, dim).transpose();
    // f32 storage loses the exact unit norm; restore it.
    auto unit = core::l2_normalize(v);
    on_record(id, std::move(unit.values), unit.zero_norm);
  }
}

}  // namespace

DescriptorIndex::DescriptorIndex(IndexMode mode, IvfParams ivf) : mode_(mode), ivf_(ivf) {}

void DescriptorIndex::add(FrameId frame_id, const aggregation::GlobalDescriptor& desc) {
  if (desc.zero) {
    throw std::invalid_argument("index_add: descriptor for frame " + std::to_string(frame_id) +
                                " is flagged zero");
  }
  add(frame_id, desc.values);
}

void DescriptorIndex::add(FrameId frame_id, const Eigen::Ref<const Eigen::VectorXd>& unit_values) {
  if (frozen_) throw std::logic_error("index_add: index is frozen");
  if (row_of_.contains(frame_id)) {
    throw std::invalid_argument("index_add: duplicate frame id " + std::to_string(frame_id));
  }
  if (unit_values.size() == 0) throw std::invalid_argument("index_add: empty descriptor");
  if (dim_ != 0 && unit_values.size() != dim_) {
    throw std::invalid_argument("index_add: dimension mismatch");
  }
  if (!unit_values.allFinite() || std::abs(unit_values.norm() - 1.0) > kUnitTolerance) {
    throw std::invalid_argument("index_add: descriptor is not unit norm");
  }
  dim_ = static_cast<int>(unit_values.size());
  const std::size_t row = ids_.size();
  ids_.push_back(frame_id);
  values_.insert(values_.end(), unit_values.data(), unit_values.data() + unit_values.size());
  row_of_.emplace(frame_id, row);
  if (mode_ == IndexMode::kInvertedFile && !lists_.empty()) {
    lists_[static_cast<std::size_t>(aggregation::nearest_center(coarse_centers_, unit_values))]
        .push_back(row);
  }
}

Eigen::Map<const Eigen::VectorXd> DescriptorIndex::descriptor(std::size_t row) const {
  return {values_.data() + row * static_cast<std::size_t>(dim_), dim_};
}

double DescriptorIndex::score_row(std::size_t row,
                                  const Eigen::Ref<const Eigen::VectorXd>& query) const {
  return std::clamp(descriptor(row).dot(query), -1.0, 1.0);
}

void DescriptorIndex::train_lists(std::uint64_t seed) {
  if (mode_ != IndexMode::kInvertedFile) return;
  if (frozen_) throw std::logic_error("train_lists: index is frozen");
  if (ids_.empty()) throw std::runtime_error("train_lists: empty index");
  int n_lists = ivf_.n_lists;
  if (n_lists <= 0) {
    n_lists = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(ids_.size())))));
  }
  n_lists = std::min<int>(n_lists, static_cast<int>(ids_.size()));
  ivf_.n_lists = n_lists;

  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      data(values_.data(), static_cast<Eigen::Index>(ids_.size()), dim_);
  aggregation::KMeansOptions options;
  options.seed = seed;
  auto km = aggregation::kmeans(data, n_lists, options);
  coarse_centers_ = std::move(km.centers);
  lists_.assign(static_cast<std::size_t>(n_lists), {});
  for (std::size_t row = 0; row < ids_.size(); ++row) {
    lists_[static_cast<std::size_t>(km.labels[row])].push_back(row);
  }
}

std::vector<std::size_t> DescriptorIndex::probe_rows(
    const Eigen::Ref<const Eigen::VectorXd>& query) const {
  const auto n_lists = static_cast<Eigen::Index>(lists_.size());
  std::vector<std::pair<double, Eigen::Index>> by_distance;
  by_distance.reserve(lists_.size());
  for (Eigen::Index c = 0; c < n_lists; ++c) {
    by_distance.emplace_back((coarse_centers_.row(c).transpose() - query).squaredNorm(), c);
  }
  const auto probes = std::clamp<Eigen::Index>(ivf_.n_probe, 1, n_lists);
  std::partial_sort(by_distance.begin(), by_distance.begin() + probes, by_distance.end());
  std::vector<std::size_t> rows;
  for (Eigen::Index i = 0; i < probes; ++i) {
    const auto& list = lists_[static_cast<std::size_t>(by_distance[static_cast<std::size_t>(i)].second)];
    rows.insert(rows.end(), list.begin(), list.end());
  }
  return rows;
}

Shortlist DescriptorIndex::search_topk(const Eigen::Ref<const Eigen::VectorXd>& query, int k,
                                       const ExcludeFn& exclude) const {
  if (k < 1) throw std::invalid_argument("search_topk: k must be >= 1");
  if (ids_.empty()) throw std::runtime_error("search_topk: empty index");
  if (query.size() != dim_) throw std::invalid_argument("search_topk: dimension mismatch");

  Shortlist hits;
  const auto consider = [&](std::size_t row) {
    const FrameId id = ids_[row];
    if (exclude && exclude(id)) return;
    hits.push_back({id, score_row(row, query)});
  };
  if (mode_ == IndexMode::kExact) {
    hits.reserve(ids_.size());
    for (std::size_t row = 0; row < ids_.size(); ++row) consider(row);
  } else {
    if (lists_.empty()) throw std::logic_error("search_topk: inverted-file index is not trained");
    for (const std::size_t row : probe_rows(query)) consider(row);
  }
  keep_top(hits, k);
  return hits;
}

void RefinementStore::add(FrameId frame_id, const aggregation::RefinementDescriptor& desc) {
  if (desc.zero) {
    throw std::invalid_argument("refinement store: descriptor for frame " +
                                std::to_string(frame_id) + " is flagged zero");
  }
  if (!entries_.emplace(frame_id, desc).second) {
    throw std::invalid_argument("refinement store: duplicate frame id " + std::to_string(frame_id));
  }
  order_.push_back(frame_id);
}

const aggregation::RefinementDescriptor* RefinementStore::find(FrameId frame_id) const {
  const auto it = entries_.find(frame_id);
  return it == entries_.end() ? nullptr : &it->second;
}

Shortlist two_stage_retrieve(const aggregation::GlobalDescriptor& query_global,
                             const aggregation::RefinementDescriptor& query_refine,
                             const DescriptorIndex& index, const RefinementStore& store,
                             int n1, int n2, const ExcludeFn& exclude) {
  if (n2 < 1 || n2 > n1) throw std::invalid_argument("two_stage_retrieve: need 1 <= n2 <= n1");
  Shortlist stage1 = index.search_topk(query_global.values, n1, exclude);
  for (auto& candidate : stage1) {
    const auto* refine = store.find(candidate.frame_id);
    if (refine == nullptr) {
      throw std::runtime_error("two_stage_retrieve: no refinement descriptor for frame " +
                               std::to_string(candidate.frame_id));
    }
    candidate.score = core::cosine_similarity(query_refine.values, refine->values);
  }
  keep_top(stage1, n2);
  return stage1;
}

void write_index(std::ostream& out, const DescriptorIndex& index) {
  write_records(out, io::RecordType::kGlobalIndex, index.ids(),
                [&](std::size_t row) { return Eigen::VectorXd(index.descriptor(row)); });
}

DescriptorIndex read_index(std::istream& in, IndexMode mode, IvfParams ivf) {
  DescriptorIndex index(mode, ivf);
  read_records(in, io::RecordType::kGlobalIndex,
               [&](FrameId id, Eigen::VectorXd v, bool zero) {
                 if (zero) throw io::FormatError("index file holds a zero descriptor");
                 try {
                   index.add(id, v);
                 } catch (const std::invalid_argument& e) {
                   throw io::FormatError(e.what());
                 }
               });
  return index;
}

void write_refinement_store(std::ostream& out, const RefinementStore& store) {
  write_records(out, io::RecordType::kRefinementStore, store.ids(),
                [&](std::size_t i) { return store.find(store.ids()[i])->values; });
}

RefinementStore read_refinement_store(std::istream& in) {
  RefinementStore store;
  read_records(in, io::RecordType::kRefinementStore,
               [&](FrameId id, Eigen::VectorXd v, bool zero) {
                 try {
                   store.add(id, {std::move(v), zero});
                 } catch (const std::invalid_argument& e) {
                   throw io::FormatError(e.what());
                 }
               });
  return store;
}

void save_index(const std::string& path, const DescriptorIndex& index) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_index(out, index);
}

DescriptorIndex load_index(const std::string& path, IndexMode mode, IvfParams ivf) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_index(in, mode, ivf);
}

void save_refinement_store(const std::string& path, const RefinementStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_refinement_store(out, store);
}

RefinementStore load_refinement_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_refinement_store(in);
}

}  // namespace mprf::retrieval
