#include "mprf/harness/config.hpp"
#include "mprf/harness/manifest.hpp"
#include "mprf/harness/pipeline.hpp"
#include "mprf/harness/report.hpp"
#include "mprf/harness/synthetic.hpp"
#include "mprf/harness/triplets.hpp"
#include "mprf/trajectory.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <unordered_map>
#include <unordered_set>

namespace fs = std::filesystem;
using namespace mprf;
using namespace mprf::harness;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitEmpty = 3;

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return in;
}

int cmd_index(const std::string& manifest_path, const std::string& out, const std::string& config) {
  const auto cfg = load_config(config);
  const auto manifest = load_manifest(manifest_path);
  const auto built = build_index(manifest, cfg);
  retrieval::save_index(out, built.index);
  retrieval::save_refinement_store(out + ".refine", built.store);
  aggregation::save_cluster_bank(out + ".bank", built.bank);
  spdlog::info("indexed {} frames ({} skipped) into {}", built.index.size(), built.skipped, out);
  return 0;
}

int cmd_retrieve(const std::string& manifest_path, const std::string& index_path, int k,
                 const std::string& config) {
  auto cfg = load_config(config);
  const auto manifest = load_manifest(manifest_path);
  const auto index = retrieval::load_index(index_path, cfg.retrieval.mode,
                                           {cfg.retrieval.n_lists, cfg.retrieval.n_probe});
  auto trained = index;
  trained.train_lists(cfg.aggregation.fit_seed);
  trained.freeze();
  const auto store = retrieval::load_refinement_store(index_path + ".refine");
  const auto bank = aggregation::load_cluster_bank(index_path + ".bank");

  std::unordered_map<FrameId, double> stamp;
  for (const auto& f : manifest.frames) stamp.emplace(f.id, f.timestamp_s);
  const ExclusionRule rule{cfg.retrieval.exclusion_window_s, cfg.retrieval.past_only};
  const int n1 = std::max(cfg.retrieval.n1, k);

  std::cout << "query_id,rank,candidate_id,score\n";
  for (const auto& f : manifest.frames) {
    try {
      const auto d = describe_frame(fusion::load_patch_embeddings(f.patch_file), bank, cfg);
      if (d.global.zero || d.refine.zero) continue;
      const retrieval::ExcludeFn exclude = [&](FrameId c) {
        if (c == f.id) return true;
        const auto it = stamp.find(c);
        return it != stamp.end() && rule.excludes(f.timestamp_s, it->second);
      };
      const auto list = retrieval::two_stage_retrieve(d.global, d.refine, trained, store, n1, k, exclude);
      for (std::size_t r = 0; r < list.size(); ++r) {
        std::cout << f.id << ',' << r + 1 << ',' << list[r].frame_id << ','
                  << format_fixed(list[r].score, 9) << '\n';
      }
    } catch (const std::exception& e) {
      spdlog::warn("frame {} skipped: {}", f.id, e.what());
    }
  }
  return 0;
}

int cmd_closeloop(const std::string& manifest_path, const std::string& config, const std::string& out,
                  bool strict) {
  const auto cfg = load_config(config);
  const auto manifest = load_manifest(manifest_path);
  const auto result = run_pipeline(manifest, cfg);
  write_outputs(result, cfg, out);
  spdlog::info("{} queries, {} loop closures, {} frames skipped; outputs in {}", result.retrievals.size(),
               result.closures.size(), result.skipped, out);
  if (result.report) std::cout << render_markdown(*result.report, cfg.eval.model_name);
  if (strict && result.closures.empty()) return kExitEmpty;
  return 0;
}

int cmd_mine(const std::string& manifest_path, std::size_t count, std::uint64_t seed,
             const std::string& config) {
  const auto cfg = load_config(config);
  const auto manifest = load_manifest(manifest_path);
  if (!manifest.has_poses()) throw ManifestError("mine-triplets needs a pose for every frame");
  std::vector<FrameId> ids;
  std::vector<PoseSE3> poses;
  std::vector<double> stamps;
  for (const auto& f : manifest.frames) {
    ids.push_back(f.id);
    poses.push_back(*f.pose);
    stamps.push_back(f.timestamp_s);
  }
  const auto triplets = mine_triplets(ids, poses, stamps, cfg.overlap, cfg.triplets, count, seed);
  std::cout << "anchor,positive,negative\n";
  for (const auto& t : triplets) std::cout << t.anchor << ',' << t.positive << ',' << t.negative << '\n';
  return 0;
}

int cmd_eval(const std::string& dir, const std::string& gt_path, const std::string& config,
             std::optional<double> max_dt) {
  const auto cfg = load_config(config);
  const double dt = max_dt.value_or(cfg.eval.gt_max_dt_s);
  const fs::path root(dir);
  auto trajectory = core::read_trajectory_file(gt_path);
  std::sort(trajectory.begin(), trajectory.end(),
            [](const core::TimedPose& a, const core::TimedPose& b) { return a.timestamp < b.timestamp; });

  auto frames_in = open_in(root / "frames.csv");
  auto retrievals_in = open_in(root / "retrievals.csv");
  auto closures_in = open_in(root / "loop_closures.csv");
  auto timings_in = open_in(root / "timings.csv");
  auto exclusion_in = open_in(root / "exclusion.csv");

  std::vector<EvalFrame> frames;
  std::unordered_set<FrameId> posed;
  for (const auto& f : read_frames(frames_in)) {
    const auto hit = core::lookup_pose(trajectory, f.timestamp, dt);
    if (!hit) {
      spdlog::warn("frame {} at t={} has no ground-truth pose within {} s; dropped", f.id, f.timestamp, dt);
      continue;
    }
    frames.push_back({f.id, f.timestamp, hit->pose});
    posed.insert(f.id);
  }

  std::vector<QueryRetrieval> retrievals;
  for (auto& q : read_retrievals(retrievals_in)) {
    if (!posed.contains(q.query)) continue;
    std::erase_if(q.shortlist, [&](const retrieval::ScoredFrame& s) { return !posed.contains(s.frame_id); });
    retrievals.push_back(std::move(q));
  }
  std::vector<EvalClosure> closures;
  std::unordered_set<FrameId> closed;
  for (const auto& c : read_loop_closures(closures_in)) {
    if (!posed.contains(c.query) || !posed.contains(c.candidate) || !closed.insert(c.query).second) continue;
    closures.push_back({c.query, c.candidate, c.transform});
  }

  const auto report = evaluate(frames, retrievals, closures, cfg.overlap, read_exclusion(exclusion_in),
                               read_timings(timings_in));
  const auto md = render_markdown(report, cfg.eval.model_name);
  std::ofstream(root / "eval.md") << md;
  std::ofstream(root / "eval.csv") << render_metrics_csv(report);
  std::cout << md;
  return 0;
}

int cmd_synth(const std::string& dir, int frames, std::uint64_t seed) {
  SyntheticWorldSpec spec;
  spec.frames = frames;
  spec.seed = seed;
  const auto world = generate_synthetic_world(spec, dir);
  std::ofstream(fs::path(dir) / "config.toml") << render_config(synthetic_world_config());
  spdlog::info("wrote {} frames to {}", world.manifest.frames.size(), world.manifest_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal loop closure: retrieval, fused matching and registration"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string manifest;
  std::string config;
  std::string out;
  std::string index_path;
  std::string gt;
  int k = 10;
  bool strict = false;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::optional<double> max_dt;
  int synth_frames = 200;

  auto* index = app.add_subcommand("index", "Build the global index and refinement store");
  index->add_option("manifest", manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  index->add_option("-o,--output", out, "Index file; .refine and .bank are written alongside")->required();
  index->add_option("--config", config, "Pipeline config")->check(CLI::ExistingFile);

  auto* retrieve = app.add_subcommand("retrieve", "Two-stage retrieval for every manifest frame");
  retrieve->add_option("manifest", manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--index", index_path, "Index written by `mprf index`")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--k", k, "Candidates per query")->check(CLI::PositiveNumber);
  retrieve->add_option("--config", config, "Pipeline config")->check(CLI::ExistingFile);

  auto* closeloop = app.add_subcommand("closeloop", "Full loop-closure pipeline");
  closeloop->add_option("manifest", manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  closeloop->add_option("--config", config, "Pipeline config")->check(CLI::ExistingFile);
  closeloop->add_option("-o,--output", out, "Report directory")->required();
  closeloop->add_flag("--strict", strict, "Exit 3 when no loop closure is accepted");

  auto* mine = app.add_subcommand("mine-triplets", "Sample anchor/positive/negative triplets");
  mine->add_option("manifest", manifest, "Manifest JSON with poses")->required()->check(CLI::ExistingFile);
  mine->add_option("--count", count, "Triplets to draw")->check(CLI::PositiveNumber);
  mine->add_option("--seed", seed, "Sampling seed");
  mine->add_option("--config", config, "Pipeline config")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Score a closeloop report against a trajectory");
  eval->add_option("report_dir", out, "Directory written by `mprf closeloop`")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--gt", gt, "Trajectory: timestamp tx ty tz qx qy qz qw")->required()->check(CLI::ExistingFile);
  eval->add_option("--config", config, "Pipeline config")->check(CLI::ExistingFile);
  eval->add_option("--max-dt", max_dt, "Max timestamp gap for pose lookup (s)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic recording with ground truth");
  synth->add_option("dir", out, "Output directory")->required();
  synth->add_option("--frames", synth_frames, "Frame count")->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::default_logger()->clone("mprf"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*index) return cmd_index(manifest, out, config);
    if (*retrieve) return cmd_retrieve(manifest, index_path, k, config);
    if (*closeloop) return cmd_closeloop(manifest, config, out, strict);
    if (*mine) return cmd_mine(manifest, count, seed, config);
    if (*eval) return cmd_eval(out, gt, config, max_dt);
    if (*synth) return cmd_synth(out, synth_frames, seed == 0 ? SyntheticWorldSpec{}.seed : seed);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const ManifestError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
