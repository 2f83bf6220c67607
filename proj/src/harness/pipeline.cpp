#include "mprf/harness/pipeline.hpp"

#include "mprf/pose_estimation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>
#include <unordered_map>

namespace mprf::harness {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

fusion::PatchLayers load_layers(const FrameEntry& f, const PipelineConfig& cfg) {
  auto layers = fusion::load_patch_embeddings(f.patch_file);
  if (layers.size() < 3) {
    throw std::runtime_error("frame " + std::to_string(f.id) + ": need at least 3 patch layers");
  }
  if (layers.back().rows() != cfg.fusion.grid.size()) {
    throw std::runtime_error("frame " + std::to_string(f.id) + ": patch count " +
                             std::to_string(layers.back().rows()) + " does not match the " +
                             std::to_string(cfg.fusion.grid.rows) + "x" +
                             std::to_string(cfg.fusion.grid.cols) + " grid");
  }
  return layers;
}

aggregation::SinkhornOptions sinkhorn_options(const PipelineConfig& cfg) {
  return {cfg.aggregation.sinkhorn_iterations, cfg.aggregation.temperature};
}

struct FrameState {
  FrameEntry entry;
  FrameDescriptors desc;
  pose::PointList points;  // fused points, LiDAR frame
  Eigen::MatrixXd fused;   // fused descriptors, one row per point
  pose::PointList scan;    // raw scan, kept only for ICP
};

struct QueryOutcome {
  QueryRetrieval retrieval;
  std::vector<LoopClosure> closures;
  double retrieval_ms = 0.0;
  double matching_ms = 0.0;
  double registration_ms = 0.0;
};

}  // namespace

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1U, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            const std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

aggregation::ClusterBank prepare_cluster_bank(const Manifest& manifest, const PipelineConfig& cfg) {
  const auto& agg = cfg.aggregation;
  if (!agg.cluster_bank_file.empty()) {
    auto bank = aggregation::load_cluster_bank(agg.cluster_bank_file);
    if (bank.clusters() != agg.clusters || bank.projected_dim() != agg.projected_dim) {
      spdlog::warn("cluster bank {} is {}x{}, config asks for {}x{}; using the file",
                   agg.cluster_bank_file, bank.clusters(), bank.projected_dim(), agg.clusters,
                   agg.projected_dim);
    }
    return bank;
  }

  // Selection sampling over the stream of final-layer patch rows.
  const auto per_frame = static_cast<std::size_t>(cfg.fusion.grid.size());
  std::size_t remaining = manifest.frames.size() * per_frame;
  std::size_t wanted = std::min<std::size_t>(remaining, static_cast<std::size_t>(agg.fit_sample_limit));
  std::mt19937_64 rng(agg.fit_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Eigen::VectorXd> rows;
  rows.reserve(wanted);
  for (const auto& f : manifest.frames) {
    fusion::PatchLayers layers;
    try {
      layers = load_layers(f, cfg);
    } catch (const std::exception& e) {
      spdlog::warn("skipping frame {} while fitting the cluster bank: {}", f.id, e.what());
      remaining -= std::min(remaining, per_frame);
      continue;
    }
    const auto& last = layers.back();
    for (Eigen::Index r = 0; r < last.rows(); ++r, --remaining) {
      if (wanted > 0 && unit(rng) * static_cast<double>(remaining) < static_cast<double>(wanted)) {
        rows.push_back(last.row(r).transpose());
        --wanted;
      }
    }
  }
  if (rows.empty()) throw std::runtime_error("no patch features available to fit a cluster bank");
  Eigen::MatrixXd samples(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) samples.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  spdlog::info("fitting {} clusters / {} dims on {} patch features", agg.clusters, agg.projected_dim,
               samples.rows());
  return aggregation::fit_cluster_bank(samples, agg.clusters, agg.projected_dim, agg.fit_seed);
}

Eigen::MatrixXd visual_features(const fusion::PatchLayers& layers, VisualSource source) {
  if (layers.empty()) throw std::invalid_argument("visual_features: no layers");
  if (source == VisualSource::kLastLayer || layers.size() < 3) return layers.back();
  const auto n = layers.size();
  const auto& a = layers[n - 3];
  const auto& b = layers[n - 2];
  const auto& c = layers[n - 1];
  Eigen::MatrixXd out(c.rows(), a.cols() + b.cols() + c.cols());
  out << a, b, c;
  return out;
}

FrameDescriptors describe_frame(const fusion::PatchLayers& layers,
                                const aggregation::ClusterBank& bank, const PipelineConfig& cfg) {
  if (layers.size() < 3) throw std::invalid_argument("describe_frame: need at least 3 layers");
  const auto n = layers.size();
  FrameDescriptors out;
  out.global = aggregation::compute_global_descriptor(layers.back(), bank, sinkhorn_options(cfg));
  out.refine = aggregation::refine_descriptor({layers[n - 3], layers[n - 2], layers[n - 1]});
  return out;
}

IndexedCollection build_index(const Manifest& manifest, const PipelineConfig& cfg) {
  IndexedCollection out{prepare_cluster_bank(manifest, cfg),
                        retrieval::DescriptorIndex(cfg.retrieval.mode,
                                                   {cfg.retrieval.n_lists, cfg.retrieval.n_probe}),
                        {}, {}, 0};
  for (const auto& f : manifest.frames) {
    try {
      const auto d = describe_frame(load_layers(f, cfg), out.bank, cfg);
      if (d.global.zero || d.refine.zero) {
        spdlog::warn("frame {}: zero descriptor, not indexed", f.id);
        ++out.skipped;
        continue;
      }
      out.index.add(f.id, d.global);
      out.store.add(f.id, d.refine);
      out.frames.push_back({f.id, f.timestamp_s});
    } catch (const std::exception& e) {
      spdlog::warn("frame {} skipped: {}", f.id, e.what());
      ++out.skipped;
    }
  }
  if (out.index.size() == 0) throw std::runtime_error("no frame could be indexed");
  out.index.train_lists(cfg.aggregation.fit_seed);
  out.index.freeze();
  return out;
}

PipelineResult run_pipeline(const Manifest& manifest, const PipelineConfig& cfg) {
  cfg.validate();
  PipelineResult result;
  result.exclusion = {cfg.retrieval.exclusion_window_s, cfg.retrieval.past_only};
  if (manifest.frames.empty()) return result;
  const auto bank = prepare_cluster_bank(manifest, cfg);
  const core::PoseSE3 lidar_from_cam = manifest.calibration.cam_from_lidar.inverse();

  std::vector<std::optional<FrameState>> slots(manifest.frames.size());
  parallel_for(manifest.frames.size(), cfg.run.threads, [&](std::size_t i) {
    const auto& f = manifest.frames[i];
    try {
      const auto layers = load_layers(f, cfg);
      FrameState s;
      s.entry = f;
      s.desc = describe_frame(layers, bank, cfg);
      if (s.desc.global.zero || s.desc.refine.zero) {
        spdlog::warn("frame {}: zero descriptor, skipped", f.id);
        return;
      }
      const auto scan = fusion::load_lidar_scan(f.scan_file);
      const auto fused = fusion::lift_patches(visual_features(layers, cfg.fusion.visual_source), scan,
                                              manifest.calibration, cfg.fusion.grid);
      s.fused = fused.descriptors;
      s.points.reserve(fused.size());
      for (const auto& p : fused.points) s.points.push_back(lidar_from_cam.apply(p));
      if (cfg.pose.icp) {
        s.scan.reserve(static_cast<std::size_t>(scan.points.rows()));
        for (Eigen::Index r = 0; r < scan.points.rows(); ++r) s.scan.push_back(scan.points.row(r).transpose());
      }
      slots[i] = std::move(s);
    } catch (const std::exception& e) {
      spdlog::warn("frame {} skipped: {}", f.id, e.what());
    }
  });

  std::vector<FrameState> frames;
  for (auto& s : slots) {
    if (s) frames.push_back(std::move(*s));
    else ++result.skipped;
  }
  if (frames.empty()) {
    spdlog::warn("no usable frames in manifest");
    return result;
  }

  retrieval::DescriptorIndex index(cfg.retrieval.mode, {cfg.retrieval.n_lists, cfg.retrieval.n_probe});
  retrieval::RefinementStore store;
  std::unordered_map<FrameId, std::size_t> slot_of;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    index.add(frames[i].entry.id, frames[i].desc.global);
    store.add(frames[i].entry.id, frames[i].desc.refine);
    slot_of.emplace(frames[i].entry.id, i);
    result.frames.push_back({frames[i].entry.id, frames[i].entry.timestamp_s});
  }
  index.train_lists(cfg.aggregation.fit_seed);
  index.freeze();

  const int n1 = std::min<int>(cfg.retrieval.n1, static_cast<int>(frames.size()));
  const int n2 = std::min(cfg.retrieval.n2, n1);

  std::vector<QueryOutcome> outcomes(frames.size());
  parallel_for(frames.size(), cfg.run.threads, [&](std::size_t qi) {
    const auto& q = frames[qi];
    auto& out = outcomes[qi];
    out.retrieval.query = q.entry.id;
    out.retrieval.timestamp = q.entry.timestamp_s;

    auto t0 = Clock::now();
    const retrieval::ExcludeFn exclude = [&](FrameId c) {
      return c == q.entry.id ||
             result.exclusion.excludes(q.entry.timestamp_s, frames[slot_of.at(c)].entry.timestamp_s);
    };
    out.retrieval.shortlist =
        retrieval::two_stage_retrieve(q.desc.global, q.desc.refine, index, store, n1, n2, exclude);
    out.retrieval_ms = ms_since(t0);
    if (out.retrieval.shortlist.empty()) return;

    std::vector<pose::RegistrationResult> regs(out.retrieval.shortlist.size());
    for (std::size_t ci = 0; ci < out.retrieval.shortlist.size(); ++ci) {
      const auto& cand = frames[slot_of.at(out.retrieval.shortlist[ci].frame_id)];
      if (q.points.empty() || cand.points.empty()) continue;

      t0 = Clock::now();
      fusion::FusedPointSet a;
      a.descriptors = q.fused;
      a.points = q.points;
      fusion::FusedPointSet b;
      b.descriptors = cand.fused;
      b.points = cand.points;
      const auto matches = fusion::match_correspondences(a, b, cfg.fusion.match_threshold,
                                                         cfg.fusion.threshold_stage);
      out.matching_ms += ms_since(t0);
      if (matches.size() < static_cast<std::size_t>(cfg.pose.ransac.sample_size)) continue;

      t0 = Clock::now();
      pose::PointList src;
      pose::PointList dst;
      src.reserve(matches.size());
      dst.reserve(matches.size());
      for (const auto& m : matches.pairs) {
        src.push_back(q.points[static_cast<std::size_t>(m.query_idx)]);
        dst.push_back(cand.points[static_cast<std::size_t>(m.candidate_idx)]);
      }
      auto ransac = cfg.pose.ransac;
      ransac.rng_seed = splitmix(splitmix(ransac.rng_seed ^ q.entry.id) ^ cand.entry.id);
      auto reg = pose::ransac_register(src, dst, ransac);
      if (reg.valid && static_cast<int>(reg.inlier_indices.size()) < cfg.pose.ransac.min_inliers) {
        reg.valid = false;
      }
      if (reg.valid && cfg.pose.icp) {
        const auto icp = pose::icp_refine(q.scan, cand.scan, reg.transform, cfg.pose.icp_max_corr_dist,
                                          cfg.pose.icp_max_iters);
        if (!icp.no_overlap) reg.transform = icp.transform;
      }
      out.registration_ms += ms_since(t0);
      regs[ci] = std::move(reg);
    }

    const auto ranked = pose::rerank_by_pose(out.retrieval.shortlist, regs, cfg.pose.rerank);
    for (const auto& r : ranked) {
      if (out.closures.size() >= static_cast<std::size_t>(cfg.pose.closures_per_query)) break;
      const auto it = std::find_if(out.retrieval.shortlist.begin(), out.retrieval.shortlist.end(),
                                   [&](const retrieval::ScoredFrame& s) { return s.frame_id == r.frame_id; });
      const auto& reg = regs[static_cast<std::size_t>(it - out.retrieval.shortlist.begin())];
      const auto& cand = frames[slot_of.at(r.frame_id)];
      out.closures.push_back({q.entry.id, cand.entry.id, q.entry.timestamp_s, cand.entry.timestamp_s,
                              reg.transform, reg.inlier_indices.size(), reg.inlier_rmse, it->score});
    }
  });

  std::size_t timed = 0;
  for (auto& o : outcomes) {
    if (!o.retrieval.shortlist.empty()) {
      ++timed;
      result.timings.retrieval_ms += o.retrieval_ms;
      result.timings.matching_ms += o.matching_ms;
      result.timings.registration_ms += o.registration_ms;
    }
    for (auto& c : o.closures) result.closures.push_back(c);
    result.retrievals.push_back(std::move(o.retrieval));
  }
  if (timed > 0) {
    const auto n = static_cast<double>(timed);
    result.timings.retrieval_ms /= n;
    result.timings.matching_ms /= n;
    result.timings.registration_ms /= n;
  }
  result.timings.total_ms =
      result.timings.retrieval_ms + result.timings.matching_ms + result.timings.registration_ms;

  const bool posed = std::all_of(frames.begin(), frames.end(),
                                 [](const FrameState& s) { return s.entry.pose.has_value(); });
  if (posed) {
    std::vector<EvalFrame> eval_frames;
    for (const auto& s : frames) eval_frames.push_back({s.entry.id, s.entry.timestamp_s, *s.entry.pose});
    std::vector<EvalClosure> eval_closures;
    std::vector<FrameId> seen;
    for (const auto& c : result.closures) {
      if (std::find(seen.begin(), seen.end(), c.query) != seen.end()) continue;
      seen.push_back(c.query);
      eval_closures.push_back({c.query, c.candidate, c.transform});
    }
    result.report = evaluate(eval_frames, result.retrievals, eval_closures, cfg.overlap,
                             result.exclusion, result.timings);
  }
  return result;
}

void write_outputs(const PipelineResult& result, const PipelineConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto open = [&](const char* name) {
    std::ofstream out(fs::path(dir) / name);
    if (!out) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
    return out;
  };
  std::unordered_map<FrameId, double> stamp;
  for (const auto& f : result.frames) stamp.emplace(f.id, f.timestamp);

  auto closures = open("loop_closures.csv");
  write_loop_closures(closures, result.closures);
  auto retrievals = open("retrievals.csv");
  write_retrievals(retrievals, result.retrievals, [&](FrameId id) { return stamp.at(id); });
  auto frames = open("frames.csv");
  write_frames(frames, result.frames);
  auto timings = open("timings.csv");
  write_timings(timings, result.timings);
  auto exclusion = open("exclusion.csv");
  write_exclusion(exclusion, result.exclusion);
  auto config = open("config.toml");
  config << render_config(cfg);
  if (result.report) {
    auto md = open("report.md");
    md << render_markdown(*result.report, cfg.eval.model_name);
    auto csv = open("metrics.csv");
    csv << render_metrics_csv(*result.report);
  }
}

}  // namespace mprf::harness
