#include "maskfuse/config_json.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "maskfuse/error.hpp"

namespace maskfuse {

namespace {

void CheckKeys(const Json& obj, const char* where, std::initializer_list<const char*> allowed) {
  Require(obj.is_object(), ErrorCode::kConfig, std::string(where) + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    Require(ok.contains(key), ErrorCode::kConfig,
            std::string("unknown key '") + key + "' in " + where);
  }
}

template <typename T>
void Take(const Json& obj, const char* key, T& out, const char* where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    Fail(ErrorCode::kConfig, std::string(where) + "." + key + " has the wrong type");
  }
}

Json OptionalNumber(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json config_to_json(const PipelineConfig& cfg) {
  Json j;
  j["filter"] = {{"pred_iou", cfg.filter.pred_iou_thresh},
                 {"stability", cfg.filter.stability_thresh},
                 {"stability_offset", cfg.filter.stability_offset},
                 {"dedup_iou", OptionalNumber(cfg.filter.dedup_iou)}};
  j["tracker"] = {{"window", cfg.tracker.window_size},
                  {"match_iou", cfg.tracker.match_iou_thresh},
                  {"stitch", cfg.tracker.stitch}};
  j["refine"] = {{"vote_scope", std::string(to_string(cfg.refine.vote_scope))},
                 {"overlap", std::string(to_string(cfg.refine.overlap_order))},
                 {"min_vote", cfg.refine.min_vote_fraction}};
  j["eval"] = {{"vc", cfg.eval.vc_n}, {"boundary_radius", cfg.eval.boundary_radius}};
  return j;
}

PipelineConfig config_from_json(const Json& doc) {
  const Json& j = doc.is_object() && doc.contains("config") ? doc.at("config") : doc;
  CheckKeys(j, "config", {"filter", "tracker", "refine", "eval"});
  PipelineConfig cfg;
  if (j.contains("filter")) {
    const Json& f = j.at("filter");
    CheckKeys(f, "filter", {"pred_iou", "stability", "stability_offset", "dedup_iou"});
    Take(f, "pred_iou", cfg.filter.pred_iou_thresh, "filter");
    Take(f, "stability", cfg.filter.stability_thresh, "filter");
    Take(f, "stability_offset", cfg.filter.stability_offset, "filter");
    if (f.contains("dedup_iou") && !f.at("dedup_iou").is_null()) {
      double d = 0;
      Take(f, "dedup_iou", d, "filter");
      cfg.filter.dedup_iou = d;
    }
  }
  if (j.contains("tracker")) {
    const Json& t = j.at("tracker");
    CheckKeys(t, "tracker", {"window", "match_iou", "stitch"});
    Take(t, "window", cfg.tracker.window_size, "tracker");
    Take(t, "match_iou", cfg.tracker.match_iou_thresh, "tracker");
    Take(t, "stitch", cfg.tracker.stitch, "tracker");
  }
  if (j.contains("refine")) {
    const Json& r = j.at("refine");
    CheckKeys(r, "refine", {"vote_scope", "overlap", "min_vote"});
    std::string scope(to_string(cfg.refine.vote_scope));
    std::string overlap(to_string(cfg.refine.overlap_order));
    Take(r, "vote_scope", scope, "refine");
    Take(r, "overlap", overlap, "refine");
    cfg.refine.vote_scope = parse_vote_scope(scope);
    cfg.refine.overlap_order = parse_overlap_order(overlap);
    Take(r, "min_vote", cfg.refine.min_vote_fraction, "refine");
  }
  if (j.contains("eval")) {
    const Json& e = j.at("eval");
    CheckKeys(e, "eval", {"vc", "boundary_radius"});
    Take(e, "vc", cfg.eval.vc_n, "eval");
    Take(e, "boundary_radius", cfg.eval.boundary_radius, "eval");
  }
  cfg.Validate();
  return cfg;
}

Json report_to_json(const MetricsReport& report) {
  Json j;
  j["miou"] = report.miou;
  j["fwiou"] = report.fwiou;
  j["mbiou"] = OptionalNumber(report.mbiou);
  Json mvc = Json::object();
  for (const auto& [n, v] : report.mvc) mvc[std::to_string(n)] = v;
  j["mvc"] = mvc;
  Json per_class = Json::array();
  for (const auto& v : report.per_class_iou) per_class.push_back(OptionalNumber(v));
  j["per_class_iou"] = per_class;
  j["clip_count"] = report.clip_count;
  j["frame_count"] = report.frame_count;
  j["rejected_pixels"] = report.confusion.rejected();
  j["warnings"] = report.warnings;
  return j;
}

Json report_document(const MetricsReport& report, const PipelineConfig& cfg,
                     const std::filesystem::path& manifest) {
  Json j = report_to_json(report);
  j["config"] = config_to_json(cfg);
  j["manifest"] = manifest.string();
  return j;
}

Json pipeline_document(const PipelineResult& result, const PipelineConfig& cfg,
                       const std::filesystem::path& manifest) {
  Json j;
  j["before"] = report_to_json(result.before);
  j["after"] = report_to_json(result.after);
  Json delta;
  delta["miou"] = result.after.miou - result.before.miou;
  delta["fwiou"] = result.after.fwiou - result.before.fwiou;
  if (result.before.mbiou && result.after.mbiou) {
    delta["mbiou"] = *result.after.mbiou - *result.before.mbiou;
  } else {
    delta["mbiou"] = nullptr;
  }
  Json mvc = Json::object();
  for (const auto& [n, v] : result.after.mvc) {
    if (auto it = result.before.mvc.find(n); it != result.before.mvc.end()) {
      mvc[std::to_string(n)] = v - it->second;
    }
  }
  delta["mvc"] = mvc;
  j["delta"] = delta;
  j["skipped_clips"] = result.skipped_clips;
  j["config"] = config_to_json(cfg);
  j["manifest"] = manifest.string();
  return j;
}

std::string per_class_csv(const MetricsReport& report) {
  std::string out = "class,iou\n";
  for (std::size_t c = 0; c < report.per_class_iou.size(); ++c) {
    out += std::to_string(c);
    out += ',';
    if (const auto& v = report.per_class_iou[c]) {
      char buf[64];
      const auto res = std::to_chars(buf, buf + sizeof(buf), *v);
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  Require(in.good(), ErrorCode::kIo, path.string() + ": cannot open");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    Fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  Require(out.good(), ErrorCode::kIo, path.string() + ": cannot open for writing");
  out << text;
  Require(out.good(), ErrorCode::kIo, path.string() + ": write failed");
}

}  // namespace maskfuse
