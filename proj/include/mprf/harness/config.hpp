#pragma once

// Pipeline configuration: a TOML-style file of `key = value` lines grouped
// under `[section]` headers. Every key has a default; unknown keys are errors.

#include "mprf/fusion.hpp"
#include "mprf/harness/overlap.hpp"
#include "mprf/harness/triplets.hpp"
#include "mprf/pose_estimation.hpp"
#include "mprf/retrieval.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace mprf::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which patch embedding feeds the visual half of the fused descriptor.
enum class VisualSource : std::uint8_t { kLastLayer, kConcatLayers };

struct PipelineConfig {
  struct Aggregation {
    int clusters = 64;
    int projected_dim = 128;
    int sinkhorn_iterations = 3;
    double temperature = 1.0;
    /// Pre-trained bank; empty means fit one from the manifest's patches.
    std::string cluster_bank_file;
    std::uint64_t fit_seed = 0;
    int fit_sample_limit = 200000;
  } aggregation;

  struct Retrieval {
    retrieval::IndexMode mode = retrieval::IndexMode::kExact;
    int n_lists = 0;
    int n_probe = 4;
    int n1 = 20;
    int n2 = 10;
    double exclusion_window_s = 30.0;
    bool past_only = true;
  } retrieval;

  struct Fusion {
    fusion::PatchGrid grid;
    double match_threshold = 0.90;
    fusion::ThresholdStage threshold_stage = fusion::ThresholdStage::kAfterAssignment;
    VisualSource visual_source = VisualSource::kLastLayer;
  } fusion;

  struct Pose {
    pose::RansacConfig ransac;
    bool icp = false;
    double icp_max_corr_dist = 0.1;
    int icp_max_iters = 30;
    pose::RerankMode rerank = pose::RerankMode::kPoseDistance;
    int closures_per_query = 1;
  } pose;

  OverlapParams overlap;
  TripletSpec triplets;

  struct Eval {
    std::string model_name = "MPRF";
    double gt_max_dt_s = 0.05;
  } eval;

  struct Run {
    int threads = 0;  // 0 = hardware concurrency
  } run;

  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// Throws ConfigError with the offending line on any parse or range error.
PipelineConfig parse_config(std::istream& in, const std::string& origin = "<config>");

/// Empty path yields the defaults.
PipelineConfig load_config(const std::string& path);

/// Every key with its current value, in the same syntax parse_config reads.
std::string render_config(const PipelineConfig& cfg);

}  // namespace mprf::harness
