#include "mprf/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace mprf::harness {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

// Drops a trailing `# comment` that sits outside quotes.
std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote != 0) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

template <typename Int>
Int to_int(const std::string& v) {
  Int out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct Field {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define MPRF_DOUBLE(KEY, MEMBER)                                                     \
  Field {                                                                            \
    KEY, [](PipelineConfig& c, const std::string& v) { c.MEMBER = to_double(v); },  \
        [](const PipelineConfig& c) { return fmt_double(c.MEMBER); }                 \
  }
#define MPRF_INT(KEY, MEMBER)                                                                  \
  Field {                                                                                      \
    KEY,                                                                                       \
        [](PipelineConfig& c, const std::string& v) { c.MEMBER = to_int<decltype(c.MEMBER)>(v); }, \
        [](const PipelineConfig& c) { return std::to_string(c.MEMBER); }                       \
  }
#define MPRF_BOOL(KEY, MEMBER)                                                       \
  Field {                                                                            \
    KEY, [](PipelineConfig& c, const std::string& v) { c.MEMBER = to_bool(v); },    \
        [](const PipelineConfig& c) { return std::string(c.MEMBER ? "true" : "false"); } \
  }
#define MPRF_STRING(KEY, MEMBER)                                                       \
  Field {                                                                              \
    KEY, [](PipelineConfig& c, const std::string& v) { c.MEMBER = v; },               \
        [](const PipelineConfig& c) { return "\"" + c.MEMBER + "\""; }                 \
  }

Field enum_field(std::string key,
                 std::function<void(PipelineConfig&, const std::string&)> set,
                 std::function<std::string(const PipelineConfig&)> get) {
  return {std::move(key), std::move(set), std::move(get)};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MPRF_INT("aggregation.clusters", aggregation.clusters),
      MPRF_INT("aggregation.projected_dim", aggregation.projected_dim),
      MPRF_INT("aggregation.sinkhorn_iterations", aggregation.sinkhorn_iterations),
      MPRF_DOUBLE("aggregation.temperature", aggregation.temperature),
      MPRF_STRING("aggregation.cluster_bank_file", aggregation.cluster_bank_file),
      MPRF_INT("aggregation.fit_seed", aggregation.fit_seed),
      MPRF_INT("aggregation.fit_sample_limit", aggregation.fit_sample_limit),

      enum_field(
          "retrieval.mode",
          [](PipelineConfig& c, const std::string& v) {
            if (v == "exact") c.retrieval.mode = retrieval::IndexMode::kExact;
            else if (v == "ivf") c.retrieval.mode = retrieval::IndexMode::kInvertedFile;
            else throw ConfigError("retrieval.mode must be exact or ivf");
          },
          [](const PipelineConfig& c) {
            return std::string(c.retrieval.mode == retrieval::IndexMode::kExact ? "\"exact\"" : "\"ivf\"");
          }),
      MPRF_INT("retrieval.n_lists", retrieval.n_lists),
      MPRF_INT("retrieval.n_probe", retrieval.n_probe),
      MPRF_INT("retrieval.n1", retrieval.n1),
      MPRF_INT("retrieval.n2", retrieval.n2),
      MPRF_DOUBLE("retrieval.exclusion_window_s", retrieval.exclusion_window_s),
      MPRF_BOOL("retrieval.past_only", retrieval.past_only),

      MPRF_INT("fusion.patch_rows", fusion.grid.rows),
      MPRF_INT("fusion.patch_cols", fusion.grid.cols),
      MPRF_DOUBLE("fusion.match_threshold", fusion.match_threshold),
      enum_field(
          "fusion.threshold_stage",
          [](PipelineConfig& c, const std::string& v) {
            if (v == "after") c.fusion.threshold_stage = fusion::ThresholdStage::kAfterAssignment;
            else if (v == "before") c.fusion.threshold_stage = fusion::ThresholdStage::kBeforeAssignment;
            else throw ConfigError("fusion.threshold_stage must be after or before");
          },
          [](const PipelineConfig& c) {
            return std::string(c.fusion.threshold_stage == fusion::ThresholdStage::kAfterAssignment
                                   ? "\"after\""
                                   : "\"before\"");
          }),
      enum_field(
          "fusion.visual_source",
          [](PipelineConfig& c, const std::string& v) {
            if (v == "last") c.fusion.visual_source = VisualSource::kLastLayer;
            else if (v == "concat") c.fusion.visual_source = VisualSource::kConcatLayers;
            else throw ConfigError("fusion.visual_source must be last or concat");
          },
          [](const PipelineConfig& c) {
            return std::string(c.fusion.visual_source == VisualSource::kLastLayer ? "\"last\"" : "\"concat\"");
          }),

      MPRF_DOUBLE("pose.distance_threshold", pose.ransac.distance_threshold),
      MPRF_INT("pose.sample_size", pose.ransac.sample_size),
      MPRF_INT("pose.max_iterations", pose.ransac.max_iterations),
      MPRF_DOUBLE("pose.confidence", pose.ransac.confidence),
      MPRF_INT("pose.min_inliers", pose.ransac.min_inliers),
      MPRF_INT("pose.seed", pose.ransac.rng_seed),
      MPRF_BOOL("pose.icp", pose.icp),
      MPRF_DOUBLE("pose.icp_max_corr_dist", pose.icp_max_corr_dist),
      MPRF_INT("pose.icp_max_iters", pose.icp_max_iters),
      enum_field(
          "pose.rerank",
          [](PipelineConfig& c, const std::string& v) {
            if (v == "pose_distance") c.pose.rerank = pose::RerankMode::kPoseDistance;
            else if (v == "inlier_count") c.pose.rerank = pose::RerankMode::kInlierCount;
            else throw ConfigError("pose.rerank must be pose_distance or inlier_count");
          },
          [](const PipelineConfig& c) {
            return std::string(c.pose.rerank == pose::RerankMode::kPoseDistance ? "\"pose_distance\""
                                                                                : "\"inlier_count\"");
          }),
      MPRF_INT("pose.closures_per_query", pose.closures_per_query),

      MPRF_DOUBLE("overlap.fov_h_deg", overlap.fov_h_deg),
      MPRF_DOUBLE("overlap.lat_max_m", overlap.lat_max_m),
      MPRF_DOUBLE("overlap.fwd_max_m", overlap.fwd_max_m),
      MPRF_DOUBLE("overlap.tau_o", overlap.tau_o),

      MPRF_DOUBLE("triplets.pos_overlap_min", triplets.pos_overlap_min),
      MPRF_DOUBLE("triplets.neg_overlap_max", triplets.neg_overlap_max),
      MPRF_DOUBLE("triplets.min_dt_ms", triplets.min_dt_ms),

      MPRF_STRING("eval.model_name", eval.model_name),
      MPRF_DOUBLE("eval.gt_max_dt_s", eval.gt_max_dt_s),

      MPRF_INT("run.threads", run.threads),
  };
  return table;
}

#undef MPRF_DOUBLE
#undef MPRF_INT
#undef MPRF_BOOL
#undef MPRF_STRING

}  // namespace

void PipelineConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (aggregation.clusters < 1) fail("aggregation.clusters must be >= 1");
  if (aggregation.projected_dim < 1) fail("aggregation.projected_dim must be >= 1");
  if (aggregation.sinkhorn_iterations < 1) fail("aggregation.sinkhorn_iterations must be >= 1");
  if (!(aggregation.temperature > 0.0)) fail("aggregation.temperature must be > 0");
  if (aggregation.fit_sample_limit < aggregation.clusters) fail("aggregation.fit_sample_limit must be >= clusters");
  if (retrieval.n1 < 1 || retrieval.n2 < 1 || retrieval.n2 > retrieval.n1) fail("need 1 <= retrieval.n2 <= retrieval.n1");
  if (retrieval.n_probe < 1) fail("retrieval.n_probe must be >= 1");
  if (retrieval.n_lists < 0) fail("retrieval.n_lists must be >= 0");
  if (!(retrieval.exclusion_window_s >= 0.0)) fail("retrieval.exclusion_window_s must be >= 0");
  if (fusion.grid.rows < 1 || fusion.grid.cols < 1) fail("fusion patch grid must be positive");
  if (!(fusion.match_threshold >= -1.0 && fusion.match_threshold <= 1.0)) fail("fusion.match_threshold must lie in [-1, 1]");
  if (!(pose.icp_max_corr_dist > 0.0)) fail("pose.icp_max_corr_dist must be > 0");
  if (pose.icp_max_iters < 1) fail("pose.icp_max_iters must be >= 1");
  if (pose.closures_per_query < 1) fail("pose.closures_per_query must be >= 1");
  if (!(eval.gt_max_dt_s >= 0.0)) fail("eval.gt_max_dt_s must be >= 0");
  if (run.threads < 0) fail("run.threads must be >= 0");
  try {
    pose.ransac.validate();
    overlap.validate();
    triplets.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

PipelineConfig parse_config(std::istream& in, const std::string& origin) {
  PipelineConfig cfg;
  std::string section;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = unquote(trim(std::string_view(line).substr(eq + 1)));
    if (!section.empty()) key = section + "." + key;
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      it->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_config(in, path);
}

std::string render_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace mprf::harness
