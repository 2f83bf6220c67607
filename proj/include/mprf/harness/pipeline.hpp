#pragma once

// End-to-end loop closure over a manifest: descriptors for every frame,
// two-stage retrieval against past frames, fused matching, robust
// registration, reranking and (when poses are available) evaluation.

#include "mprf/aggregation.hpp"
#include "mprf/fusion.hpp"
#include "mprf/harness/config.hpp"
#include "mprf/harness/manifest.hpp"
#include "mprf/harness/metrics.hpp"
#include "mprf/harness/report.hpp"
#include "mprf/retrieval.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mprf::harness {

/// Calls fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). The first exception thrown by fn is rethrown after all
/// workers have stopped.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Loads the configured bank, or fits one on final-layer patch features
/// drawn from the manifest.
aggregation::ClusterBank prepare_cluster_bank(const Manifest& manifest, const PipelineConfig& cfg);

struct FrameDescriptors {
  aggregation::GlobalDescriptor global;
  aggregation::RefinementDescriptor refine;
};

/// Global and refinement descriptors from one frame's patch layers. Needs at
/// least three layers; the last one drives the global descriptor.
FrameDescriptors describe_frame(const fusion::PatchLayers& layers,
                                const aggregation::ClusterBank& bank, const PipelineConfig& cfg);

/// Patch features that feed the visual half of fused descriptors.
Eigen::MatrixXd visual_features(const fusion::PatchLayers& layers, VisualSource source);

struct IndexedCollection {
  aggregation::ClusterBank bank;
  retrieval::DescriptorIndex index;
  retrieval::RefinementStore store;
  std::vector<FrameStamp> frames;  // indexed frames, temporal order
  std::size_t skipped = 0;         // frames dropped on I/O or zero descriptors
};

IndexedCollection build_index(const Manifest& manifest, const PipelineConfig& cfg);

struct PipelineResult {
  std::vector<FrameStamp> frames;
  std::vector<QueryRetrieval> retrievals;  // one per processed frame
  std::vector<LoopClosure> closures;       // query order, best first
  StageTimings timings;
  ExclusionRule exclusion;
  std::optional<EvalReport> report;
  std::size_t skipped = 0;
};

PipelineResult run_pipeline(const Manifest& manifest, const PipelineConfig& cfg);

/// Writes loop_closures.csv, retrievals.csv, frames.csv, timings.csv,
/// exclusion.csv and config.toml, plus report.md and metrics.csv when the
/// result carries an evaluation. Creates `dir` if needed.
void write_outputs(const PipelineResult& result, const PipelineConfig& cfg, const std::string& dir);

}  // namespace mprf::harness
