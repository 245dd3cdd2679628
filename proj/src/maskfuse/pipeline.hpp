#ifndef MASKFUSE_PIPELINE_HPP_
#define MASKFUSE_PIPELINE_HPP_

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "maskfuse/classifier.hpp"
#include "maskfuse/filtering.hpp"
#include "maskfuse/ingest.hpp"
#include "maskfuse/metrics.hpp"
#include "maskfuse/refiner.hpp"
#include "maskfuse/tracker.hpp"

namespace maskfuse {

struct PipelineConfig {
  FilterConfig filter;
  TrackerConfig tracker;
  RefineConfig refine;
  EvalConfig eval;

  void Validate() const;
  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

struct LoadedClip {
  std::vector<LabelMap> gt;
  std::vector<LabelMap> pred;
  std::vector<MaskletSet> masklets;  // one per frame
};

struct LoadRequest {
  bool gt = false;
  bool pred = false;
  bool masklets = false;
};

// Throws kIo with the offending path when a requested file is missing.
LoadedClip load_clip(const ClipManifest& clip, const LoadRequest& what);
// True when every frame has the requested files listed.
bool clip_complete(const ClipManifest& clip, const LoadRequest& what);

std::vector<MaskletSet> filter_clip(std::span<const MaskletSet> frames, const FilterConfig& cfg);

// Filter, track and refine one clip's predictions.
std::vector<LabelMap> refine_loaded_clip(const LoadedClip& clip, const PipelineConfig& cfg);

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception in
// index order is rethrown after all work finishes.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

int dataset_num_classes(const Dataset& ds);

struct PipelineResult {
  MetricsReport before;
  MetricsReport after;
  std::size_t skipped_clips = 0;
};

// Evaluates raw and refined predictions with identical settings. Clips with
// missing gt/pred entries are skipped and counted.
PipelineResult run_pipeline(const Dataset& ds, const PipelineConfig& cfg, int jobs = 1);

MetricsReport evaluate_dataset(const Dataset& ds, const EvalConfig& cfg, int jobs = 1);

enum class SweepParameter { kWindow, kPredIou, kStability, kGridNote };

std::string_view to_string(SweepParameter p);
SweepParameter parse_sweep_parameter(std::string_view name);

struct SweepPlan {
  SweepParameter parameter = SweepParameter::kWindow;
  std::vector<double> values;

  void Validate() const;
};

struct SweepRow {
  double value = 0.0;
  PipelineConfig config;
  MetricsReport report;  // refined predictions
};

std::vector<SweepRow> run_sweep(const Dataset& ds, const SweepPlan& plan, const PipelineConfig& base,
                                int jobs = 1);
// Columns: <parameter>,mIoU,FWIoU,mVC8,mVC16.
std::string sweep_csv(const SweepPlan& plan, std::span<const SweepRow> rows);

// Writes filtered masklet streams; returns the rewritten dataset.
Dataset filter_dataset(const Dataset& ds, const FilterConfig& cfg, const fs::path& out_dir,
                       int jobs = 1);
// Writes refined predictions as pred_path; returns the rewritten dataset.
Dataset refine_dataset(const Dataset& ds, const PipelineConfig& cfg, const fs::path& out_dir,
                       int jobs = 1);

// Pooled masklet features labeled by ground-truth majority.
std::vector<LabeledVector> training_set(const Dataset& ds, const FilterConfig& cfg);

struct ClassifyOptions {
  bool base_from_pred = false;
  OverlapOrder overlap_order = OverlapOrder::kAreaDesc;
  FilterConfig filter;
};

// Classifies every masklet and composes per-frame maps, written as pred_path.
Dataset classify_dataset(const Dataset& ds, const MlpModel& model, const ClassifyOptions& opts,
                         const fs::path& out_dir, int jobs = 1);

struct ValidationSummary {
  std::size_t clips = 0;
  std::size_t frames = 0;
  std::size_t masklets = 0;
  std::vector<std::string> errors;
};

// Reads every referenced file and checks it against the manifest.
ValidationSummary validate_dataset(const Dataset& ds);

}  // namespace maskfuse

#endif  // MASKFUSE_PIPELINE_HPP_
