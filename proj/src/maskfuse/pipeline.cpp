#include "maskfuse/pipeline.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <optional>
#include <thread>

#include "maskfuse/error.hpp"
#include "maskfuse/log.hpp"
#include "maskfuse/synth.hpp"

namespace maskfuse {

void PipelineConfig::Validate() const {
  filter.Validate();
  tracker.Validate();
  refine.Validate();
  eval.Validate();
}

namespace {

const fs::path& RequirePath(const std::optional<fs::path>& p, const ClipManifest& clip, int frame,
                            const char* what) {
  Require(p.has_value(), ErrorCode::kValidation,
          "clip " + clip.clip_id + " frame " + std::to_string(frame) + ": no " + what);
  Require(fs::exists(*p), ErrorCode::kIo, p->string() + ": file not found");
  return *p;
}

LabelMap ReadFrame(const fs::path& path, const ClipManifest& clip) {
  LabelMap map = read_labelmap(path, clip.ignore_label);
  Require(map.width == clip.width && map.height == clip.height, ErrorCode::kValidation,
          path.string() + ": " + std::to_string(map.width) + "x" + std::to_string(map.height) +
              " does not match clip " + std::to_string(clip.width) + "x" +
              std::to_string(clip.height));
  return map;
}

std::string FrameFile(int i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05d.%s", i, ext);
  return buf;
}

std::string FormatNumber(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

bool clip_complete(const ClipManifest& clip, const LoadRequest& what) {
  for (const FrameEntry& e : clip.frames) {
    if (what.gt && !e.gt_path) return false;
    if (what.pred && !e.pred_path) return false;
  }
  return !clip.frames.empty();
}

LoadedClip load_clip(const ClipManifest& clip, const LoadRequest& what) {
  LoadedClip out;
  for (const FrameEntry& e : clip.frames) {
    if (what.gt) out.gt.push_back(ReadFrame(RequirePath(e.gt_path, clip, e.frame_index, "gt_path"), clip));
    if (what.pred) {
      out.pred.push_back(ReadFrame(RequirePath(e.pred_path, clip, e.frame_index, "pred_path"), clip));
    }
  }
  if (what.masklets) {
    const int frame_count = clip.frames.empty() ? 0 : clip.frames.back().frame_index + 1;
    MaskletReadOptions opts{clip.width, clip.height, frame_count};
    std::vector<MaskletSet> all;
    for (const fs::path& p : clip.MaskletFiles()) {
      Require(fs::exists(p), ErrorCode::kIo, p.string() + ": file not found");
      for (MaskletSet& s : read_masklets(p, opts)) all.push_back(std::move(s));
    }
    std::vector<MaskletSet> dense = masklets_by_frame(std::move(all), frame_count);
    // Re-index to manifest order so masklets[i] pairs with frames[i].
    for (const FrameEntry& e : clip.frames) out.masklets.push_back(std::move(dense[e.frame_index]));
  }
  return out;
}

std::vector<MaskletSet> filter_clip(std::span<const MaskletSet> frames, const FilterConfig& cfg) {
  std::vector<MaskletSet> out;
  out.reserve(frames.size());
  for (const MaskletSet& s : frames) out.push_back(filter_masklets(s, cfg));
  return out;
}

std::vector<LabelMap> refine_loaded_clip(const LoadedClip& clip, const PipelineConfig& cfg) {
  const std::vector<MaskletSet> kept = filter_clip(clip.masklets, cfg.filter);
  std::vector<MaskletTrack> tracks;
  if (cfg.refine.vote_scope == VoteScope::kPerTrack) tracks = track_clip(kept, cfg.tracker);
  return refine_clip(clip.pred, kept, tracks, cfg.refine);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

int dataset_num_classes(const Dataset& ds) {
  Require(!ds.clips.empty(), ErrorCode::kValidation, "dataset has no clips");
  const int n = ds.clips.front().num_classes;
  for (const ClipManifest& c : ds.clips) {
    Require(c.num_classes == n, ErrorCode::kValidation, "clips disagree on num_classes");
  }
  return n;
}

PipelineResult run_pipeline(const Dataset& ds, const PipelineConfig& cfg, int jobs) {
  cfg.Validate();
  const int num_classes = dataset_num_classes(ds);
  const LoadRequest what{true, true, true};
  std::vector<std::optional<std::pair<ClipEvaluation, ClipEvaluation>>> evals(ds.clips.size());
  parallel_for(ds.clips.size(), jobs, [&](std::size_t i) {
    const ClipManifest& clip = ds.clips[i];
    if (!clip_complete(clip, {true, true, false})) return;
    const LoadedClip loaded = load_clip(clip, what);
    const std::vector<LabelMap> refined = refine_loaded_clip(loaded, cfg);
    evals[i].emplace(evaluate_clip(loaded.gt, loaded.pred, num_classes, cfg.eval),
                     evaluate_clip(loaded.gt, refined, num_classes, cfg.eval));
  });
  std::vector<ClipEvaluation> before, after;
  PipelineResult result;
  for (auto& e : evals) {
    if (!e) {
      ++result.skipped_clips;
      continue;
    }
    before.push_back(std::move(e->first));
    after.push_back(std::move(e->second));
  }
  Require(!before.empty(), ErrorCode::kValidation, "no complete clip to evaluate");
  result.before = summarize(before, num_classes, cfg.eval);
  result.after = summarize(after, num_classes, cfg.eval);
  if (result.skipped_clips > 0) {
    const std::string w = std::to_string(result.skipped_clips) + " partial clip(s) skipped";
    Log().warn("{}", w);
    result.before.warnings.push_back(w);
    result.after.warnings.push_back(w);
  }
  return result;
}

MetricsReport evaluate_dataset(const Dataset& ds, const EvalConfig& cfg, int jobs) {
  cfg.Validate();
  const int num_classes = dataset_num_classes(ds);
  std::vector<std::optional<ClipEvaluation>> evals(ds.clips.size());
  parallel_for(ds.clips.size(), jobs, [&](std::size_t i) {
    const ClipManifest& clip = ds.clips[i];
    if (!clip_complete(clip, {true, true, false})) return;
    const LoadedClip loaded = load_clip(clip, {true, true, false});
    evals[i] = evaluate_clip(loaded.gt, loaded.pred, num_classes, cfg);
  });
  std::vector<ClipEvaluation> done;
  std::size_t skipped = 0;
  for (auto& e : evals) {
    if (e) {
      done.push_back(std::move(*e));
    } else {
      ++skipped;
    }
  }
  Require(!done.empty(), ErrorCode::kValidation, "no complete clip to evaluate");
  MetricsReport report = summarize(done, num_classes, cfg);
  if (skipped > 0) {
    const std::string w = std::to_string(skipped) + " partial clip(s) skipped";
    Log().warn("{}", w);
    report.warnings.push_back(w);
  }
  return report;
}

std::string_view to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::kWindow: return "window";
    case SweepParameter::kPredIou: return "pred_iou";
    case SweepParameter::kStability: return "stability";
    case SweepParameter::kGridNote: return "grid_note";
  }
  return "unknown";
}

SweepParameter parse_sweep_parameter(std::string_view name) {
  if (name == "window") return SweepParameter::kWindow;
  if (name == "pred_iou") return SweepParameter::kPredIou;
  if (name == "stability") return SweepParameter::kStability;
  if (name == "grid_note") return SweepParameter::kGridNote;
  Fail(ErrorCode::kConfig, "unknown sweep parameter '" + std::string(name) + "'");
}

void SweepPlan::Validate() const {
  Require(!values.empty(), ErrorCode::kConfig, "sweep needs at least one value");
  if (parameter == SweepParameter::kWindow) {
    for (double v : values) {
      Require(v >= 1 && std::floor(v) == v, ErrorCode::kConfig, "window values must be integers >= 1");
    }
  }
}

std::vector<SweepRow> run_sweep(const Dataset& ds, const SweepPlan& plan, const PipelineConfig& base,
                                int jobs) {
  plan.Validate();
  std::vector<SweepRow> rows;
  for (double v : plan.values) {
    PipelineConfig cfg = base;
    switch (plan.parameter) {
      case SweepParameter::kWindow: cfg.tracker.window_size = static_cast<int>(v); break;
      case SweepParameter::kPredIou: cfg.filter.pred_iou_thresh = v; break;
      case SweepParameter::kStability: cfg.filter.stability_thresh = v; break;
      // Prompt grids act upstream of this tool; the value only labels the row.
      case SweepParameter::kGridNote: break;
    }
    rows.push_back({v, cfg, run_pipeline(ds, cfg, jobs).after});
  }
  return rows;
}

std::string sweep_csv(const SweepPlan& plan, std::span<const SweepRow> rows) {
  std::string out(to_string(plan.parameter));
  out += ",mIoU,FWIoU,mVC8,mVC16\n";
  for (const SweepRow& r : rows) {
    out += FormatNumber(r.value);
    out += ',' + FormatNumber(r.report.miou);
    out += ',' + FormatNumber(r.report.fwiou);
    for (int n : {8, 16}) {
      out += ',';
      if (auto it = r.report.mvc.find(n); it != r.report.mvc.end()) out += FormatNumber(it->second);
    }
    out += '\n';
  }
  return out;
}

Dataset filter_dataset(const Dataset& ds, const FilterConfig& cfg, const fs::path& out_dir,
                       int jobs) {
  cfg.Validate();
  Dataset out = ds;
  const fs::path root = fs::absolute(out_dir).lexically_normal();
  parallel_for(ds.clips.size(), jobs, [&](std::size_t i) {
    const ClipManifest& clip = ds.clips[i];
    const LoadedClip loaded = load_clip(clip, {false, false, true});
    const fs::path path = root / clip.clip_id / "masklets.jsonl";
    write_masklets(filter_clip(loaded.masklets, cfg), path);
    ClipManifest& dst = out.clips[i];
    dst.masklet_path = path;
    for (FrameEntry& e : dst.frames) e.masklet_path.reset();
  });
  write_manifest(out, root / "manifest.json");
  return out;
}

Dataset refine_dataset(const Dataset& ds, const PipelineConfig& cfg, const fs::path& out_dir,
                       int jobs) {
  cfg.Validate();
  Dataset out = ds;
  const fs::path root = fs::absolute(out_dir).lexically_normal();
  parallel_for(ds.clips.size(), jobs, [&](std::size_t i) {
    const ClipManifest& clip = ds.clips[i];
    const LoadedClip loaded = load_clip(clip, {false, true, true});
    const std::vector<LabelMap> refined = refine_loaded_clip(loaded, cfg);
    ClipManifest& dst = out.clips[i];
    for (std::size_t f = 0; f < refined.size(); ++f) {
      const fs::path path = root / clip.clip_id / "refined" / FrameFile(clip.frames[f].frame_index, "png");
      write_labelmap(refined[f], path);
      dst.frames[f].pred_path = path;
    }
  });
  write_manifest(out, root / "manifest.json");
  return out;
}

std::vector<LabeledVector> training_set(const Dataset& ds, const FilterConfig& cfg) {
  std::vector<LabeledVector> out;
  for (const ClipManifest& clip : ds.clips) {
    const LoadedClip loaded = load_clip(clip, {true, false, true});
    const std::vector<MaskletSet> kept = filter_clip(loaded.masklets, cfg);
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      if (kept[f].masklets.empty()) continue;
      const FeatureMap features = read_featuremap(
          RequirePath(clip.frames[f].feature_path, clip, clip.frames[f].frame_index, "feature_path"));
      for (LabeledVector& v : labeled_vectors(kept[f], features, loaded.gt[f])) {
        out.push_back(std::move(v));
      }
    }
  }
  return out;
}

Dataset classify_dataset(const Dataset& ds, const MlpModel& model, const ClassifyOptions& opts,
                         const fs::path& out_dir, int jobs) {
  model.Validate();
  Dataset out = ds;
  const fs::path root = fs::absolute(out_dir).lexically_normal();
  parallel_for(ds.clips.size(), jobs, [&](std::size_t i) {
    const ClipManifest& clip = ds.clips[i];
    Require(model.num_classes <= clip.num_classes, ErrorCode::kValidation,
            "model predicts more classes than clip " + clip.clip_id + " declares");
    const LoadedClip loaded = load_clip(clip, {false, opts.base_from_pred, true});
    const std::vector<MaskletSet> kept = filter_clip(loaded.masklets, opts.filter);
    ClipManifest& dst = out.clips[i];
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      std::vector<ClassId> classes;
      if (!kept[f].masklets.empty()) {
        const FeatureMap features = read_featuremap(
            RequirePath(clip.frames[f].feature_path, clip, clip.frames[f].frame_index, "feature_path"));
        for (const Masklet& m : kept[f].masklets) {
          classes.push_back(mlp_predict(model, pool_features(m.mask, features).values));
        }
      }
      const LabelMap composed =
          compose_segmentation(kept[f], classes, opts.base_from_pred ? &loaded.pred[f] : nullptr,
                               clip.width, clip.height, clip.ignore_label, opts.overlap_order);
      const fs::path path = root / clip.clip_id / "classified" / FrameFile(clip.frames[f].frame_index, "png");
      write_labelmap(composed, path);
      dst.frames[f].pred_path = path;
    }
  });
  write_manifest(out, root / "manifest.json");
  return out;
}

ValidationSummary validate_dataset(const Dataset& ds) {
  ValidationSummary summary;
  summary.clips = ds.clips.size();
  auto guard = [&](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      summary.errors.push_back(where + ": " + e.what());
    } catch (const std::exception& e) {
      summary.errors.push_back(where + ": " + e.what());
    }
  };
  for (const ClipManifest& clip : ds.clips) {
    guard("clip " + clip.clip_id, [&] { clip.Validate(); });
    summary.frames += clip.frames.size();
    for (const FrameEntry& e : clip.frames) {
      const std::string where = "clip " + clip.clip_id + " frame " + std::to_string(e.frame_index);
      for (const auto* p : {&e.gt_path, &e.pred_path}) {
        if (!*p) continue;
        guard(where, [&] {
          const LabelMap map = ReadFrame(RequirePath(*p, clip, e.frame_index, "label map"), clip);
          map.Validate(clip.num_classes);
        });
      }
      if (e.feature_path) {
        guard(where, [&] {
          const FeatureMap f = read_featuremap(RequirePath(e.feature_path, clip, e.frame_index, "features"));
          Require(clip.width % f.width == 0 && clip.height % f.height == 0, ErrorCode::kValidation,
                  "feature grid is not an integer stride of the frame");
        });
      }
    }
    guard("clip " + clip.clip_id + " masklets", [&] {
      const LoadedClip loaded = load_clip(clip, {false, false, true});
      for (const MaskletSet& s : loaded.masklets) summary.masklets += s.masklets.size();
    });
  }
  return summary;
}

}  // namespace maskfuse
