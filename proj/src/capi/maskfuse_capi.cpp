#include "maskfuse/maskfuse.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <new>
#include <string>

#include "maskfuse/classifier.hpp"
#include "maskfuse/config_json.hpp"
#include "maskfuse/error.hpp"
#include "maskfuse/filtering.hpp"
#include "maskfuse/log.hpp"
#include "maskfuse/pipeline.hpp"
#include "maskfuse/refiner.hpp"
#include "maskfuse/synth.hpp"

namespace mf = maskfuse;

struct mf_mask {
  mf::BinaryMask mask;
};
struct mf_labelmap {
  mf::LabelMap map;
};
struct mf_dataset {
  mf::Dataset ds;
  std::string manifest;
};
struct mf_report {
  mf::Json doc;
  std::string csv;
};
struct mf_model {
  mf::MlpModel model;
};

namespace {

thread_local std::string g_last_error;

mf_status ToStatus(mf::ErrorCode code) { return static_cast<mf_status>(static_cast<int>(code)); }

template <typename Fn>
mf_status Guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MF_OK;
  } catch (const mf::Error& e) {
    g_last_error = e.what();
    return ToStatus(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MF_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return MF_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MF_ERR_INTERNAL;
  }
}

void NotNull(const void* p, const char* what) {
  mf::Require(p != nullptr, mf::ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

char* CopyString(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

mf::PipelineConfig ToCore(const mf_pipeline_config& c) {
  mf::PipelineConfig cfg;
  cfg.filter.pred_iou_thresh = c.pred_iou;
  cfg.filter.stability_thresh = c.stability;
  cfg.filter.stability_offset = c.stability_offset;
  if (c.dedup_iou >= 0) cfg.filter.dedup_iou = c.dedup_iou;
  cfg.tracker.window_size = c.window;
  cfg.tracker.match_iou_thresh = c.match_iou;
  cfg.tracker.stitch = c.stitch != 0;
  mf::Require(c.vote_scope == MF_VOTE_PER_FRAME || c.vote_scope == MF_VOTE_PER_TRACK,
              mf::ErrorCode::kConfig, "unknown vote scope");
  mf::Require(c.overlap == MF_OVERLAP_AREA_DESC || c.overlap == MF_OVERLAP_PRED_IOU_ASC,
              mf::ErrorCode::kConfig, "unknown overlap order");
  cfg.refine.vote_scope =
      c.vote_scope == MF_VOTE_PER_TRACK ? mf::VoteScope::kPerTrack : mf::VoteScope::kPerFrame;
  cfg.refine.overlap_order = c.overlap == MF_OVERLAP_PRED_IOU_ASC ? mf::OverlapOrder::kPredIouAsc
                                                                  : mf::OverlapOrder::kAreaDesc;
  cfg.refine.min_vote_fraction = c.min_vote;
  mf::Require(c.vc_count >= 0 && c.vc_count <= MF_MAX_VC, mf::ErrorCode::kConfig,
              "vc_count outside [0," + std::to_string(MF_MAX_VC) + "]");
  cfg.eval.vc_n.assign(c.vc_n, c.vc_n + c.vc_count);
  cfg.eval.boundary_radius = c.boundary_radius;
  cfg.Validate();
  return cfg;
}

mf_pipeline_config FromCore(const mf::PipelineConfig& cfg) {
  mf_pipeline_config c{};
  c.pred_iou = cfg.filter.pred_iou_thresh;
  c.stability = cfg.filter.stability_thresh;
  c.stability_offset = cfg.filter.stability_offset;
  c.dedup_iou = cfg.filter.dedup_iou.value_or(-1.0);
  c.window = cfg.tracker.window_size;
  c.match_iou = cfg.tracker.match_iou_thresh;
  c.stitch = cfg.tracker.stitch ? 1 : 0;
  c.vote_scope = cfg.refine.vote_scope == mf::VoteScope::kPerTrack ? MF_VOTE_PER_TRACK
                                                                   : MF_VOTE_PER_FRAME;
  c.overlap = cfg.refine.overlap_order == mf::OverlapOrder::kPredIouAsc ? MF_OVERLAP_PRED_IOU_ASC
                                                                        : MF_OVERLAP_AREA_DESC;
  c.min_vote = cfg.refine.min_vote_fraction;
  mf::Require(cfg.eval.vc_n.size() <= MF_MAX_VC, mf::ErrorCode::kConfig,
              "at most " + std::to_string(MF_MAX_VC) + " vc values");
  c.vc_count = static_cast<int>(cfg.eval.vc_n.size());
  for (int i = 0; i < c.vc_count; ++i) c.vc_n[i] = cfg.eval.vc_n[i];
  c.boundary_radius = cfg.eval.boundary_radius;
  return c;
}

mf_dataset* NewDataset(mf::Dataset ds, std::string manifest) {
  return new mf_dataset{std::move(ds), std::move(manifest)};
}

}  // namespace

extern "C" {

const char* mf_status_string(mf_status status) {
  if (status == MF_OK) return "ok";
  if (status < MF_ERR_INVALID_ARGUMENT || status > MF_ERR_INTERNAL) return "unknown";
  return mf::ErrorCodeName(static_cast<mf::ErrorCode>(status)).data();
}

const char* mf_last_error_message(void) { return g_last_error.c_str(); }

mf_status mf_set_log_level(const char* level) {
  return Guard([&] {
    NotNull(level, "level");
    mf::Require(mf::SetLogLevel(level), mf::ErrorCode::kInvalidArgument,
                std::string("unknown log level '") + level + "'");
  });
}

const char* mf_version(void) { return "0.1.0"; }

void mf_string_free(char* s) { std::free(s); }

mf_status mf_mask_encode(const uint8_t* dense, int width, int height, mf_mask** out) {
  return Guard([&] {
    NotNull(out, "out");
    const std::size_t n = width > 0 && height > 0 ? static_cast<std::size_t>(width) * height : 0;
    if (n > 0) NotNull(dense, "dense");
    *out = new mf_mask{mf::rle_encode({dense, n}, width, height)};
  });
}

mf_status mf_mask_from_counts(int width, int height, const uint32_t* counts, size_t n,
                              mf_mask** out) {
  return Guard([&] {
    NotNull(out, "out");
    if (n > 0) NotNull(counts, "counts");
    *out = new mf_mask{mf::BinaryMask::FromCounts(width, height, {counts, counts + n})};
  });
}

void mf_mask_free(mf_mask* mask) { delete mask; }
int mf_mask_width(const mf_mask* mask) { return mask ? mask->mask.width() : 0; }
int mf_mask_height(const mf_mask* mask) { return mask ? mask->mask.height() : 0; }
size_t mf_mask_area(const mf_mask* mask) { return mask ? mf::mask_area(mask->mask) : 0; }
size_t mf_mask_count_length(const mf_mask* mask) { return mask ? mask->mask.counts().size() : 0; }
const uint32_t* mf_mask_counts(const mf_mask* mask) {
  return mask ? mask->mask.counts().data() : nullptr;
}

mf_status mf_mask_decode(const mf_mask* mask, uint8_t* out, size_t out_len) {
  return Guard([&] {
    NotNull(mask, "mask");
    mf::Require(out_len == mask->mask.pixel_count(), mf::ErrorCode::kDimension,
                "output buffer holds " + std::to_string(out_len) + " bytes, mask has " +
                    std::to_string(mask->mask.pixel_count()) + " pixels");
    if (out_len > 0) NotNull(out, "out");
    const std::vector<std::uint8_t> dense = mf::rle_decode(mask->mask);
    std::memcpy(out, dense.data(), dense.size());
  });
}

mf_status mf_mask_iou(const mf_mask* a, const mf_mask* b, double* out) {
  return Guard([&] {
    NotNull(a, "a");
    NotNull(b, "b");
    NotNull(out, "out");
    *out = mf::mask_iou(a->mask, b->mask);
  });
}

mf_status mf_labelmap_create(int width, int height, uint16_t fill, uint16_t ignore_label,
                             mf_labelmap** out) {
  return Guard([&] {
    NotNull(out, "out");
    *out = new mf_labelmap{mf::LabelMap(width, height, fill, ignore_label)};
  });
}

mf_status mf_labelmap_read(const char* path, uint16_t ignore_label, mf_labelmap** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new mf_labelmap{mf::read_labelmap(path, ignore_label)};
  });
}

mf_status mf_labelmap_write(const mf_labelmap* map, const char* path) {
  return Guard([&] {
    NotNull(map, "map");
    NotNull(path, "path");
    mf::write_labelmap(map->map, path);
  });
}

void mf_labelmap_free(mf_labelmap* map) { delete map; }
int mf_labelmap_width(const mf_labelmap* map) { return map ? map->map.width : 0; }
int mf_labelmap_height(const mf_labelmap* map) { return map ? map->map.height : 0; }
uint16_t* mf_labelmap_data(mf_labelmap* map) { return map ? map->map.labels.data() : nullptr; }

mf_status mf_predominant_class(const mf_mask* mask, const mf_labelmap* map, uint16_t* class_id,
                               double* fraction) {
  return Guard([&] {
    NotNull(mask, "mask");
    NotNull(map, "map");
    NotNull(class_id, "class_id");
    NotNull(fraction, "fraction");
    const mf::Vote v = mf::predominant_class(mask->mask, map->map);
    *class_id = v.class_id;
    *fraction = v.fraction;
  });
}

mf_status mf_stability_score(const double* probs, int width, int height, double offset,
                             double* out) {
  return Guard([&] {
    NotNull(out, "out");
    mf::Require(width >= 0 && height >= 0, mf::ErrorCode::kInvalidArgument, "negative dimensions");
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (n > 0) NotNull(probs, "probs");
    mf::ProbMask p{width, height, std::vector<double>(probs, probs + n)};
    p.Validate();
    *out = mf::stability_score(p, offset);
  });
}

void mf_pipeline_config_default(mf_pipeline_config* cfg) {
  if (cfg) *cfg = FromCore(mf::PipelineConfig{});
}

mf_status mf_pipeline_config_from_json(const char* json, mf_pipeline_config* cfg) {
  return Guard([&] {
    NotNull(json, "json");
    NotNull(cfg, "cfg");
    mf::Json j;
    try {
      j = mf::Json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
      mf::Fail(mf::ErrorCode::kFormat, e.what());
    }
    *cfg = FromCore(mf::config_from_json(j));
  });
}

mf_status mf_pipeline_config_to_json(const mf_pipeline_config* cfg, char** out) {
  return Guard([&] {
    NotNull(cfg, "cfg");
    NotNull(out, "out");
    *out = CopyString(mf::config_to_json(ToCore(*cfg)).dump(2));
  });
}

void mf_synth_config_default(mf_synth_config* cfg) {
  if (!cfg) return;
  const mf::SynthConfig d;
  *cfg = mf_synth_config{};
  cfg->seed = d.seed;
  cfg->width = d.width;
  cfg->height = d.height;
  cfg->frames = d.frames;
  cfg->num_objects = d.num_objects;
  cfg->num_classes = d.num_classes;
  cfg->min_speed = d.min_speed;
  cfg->max_speed = d.max_speed;
  cfg->min_size = d.min_size;
  cfg->max_size = d.max_size;
  cfg->jitter_radius = 2;
  cfg->label_noise_rate = 0.0;
  cfg->class_swap_rate = 0.0;
  cfg->feature_dim = d.feature_dim;
  cfg->feature_separation = d.feature_separation;
  cfg->feature_stride = d.feature_stride;
  cfg->clips = 1;
  cfg->write_features = 1;
  cfg->perfect_scores = 0;
}

void mf_train_config_default(mf_train_config* cfg) {
  if (!cfg) return;
  const mf::TrainConfig d;
  cfg->learning_rate = d.learning_rate;
  cfg->epochs = d.epochs;
  cfg->batch_size = d.batch_size;
  cfg->seed = d.seed;
  cfg->d_hidden = d.d_hidden;
}

mf_status mf_dataset_open(const char* manifest_path, mf_dataset** out) {
  return Guard([&] {
    NotNull(manifest_path, "manifest_path");
    NotNull(out, "out");
    *out = NewDataset(mf::read_manifest(manifest_path), manifest_path);
  });
}

void mf_dataset_free(mf_dataset* ds) { delete ds; }
size_t mf_dataset_clip_count(const mf_dataset* ds) { return ds ? ds->ds.clips.size() : 0; }
const char* mf_dataset_manifest_path(const mf_dataset* ds) {
  return ds ? ds->manifest.c_str() : "";
}

mf_status mf_synth_write(const mf_synth_config* c, const char* out_dir, mf_dataset** out) {
  return Guard([&] {
    NotNull(c, "cfg");
    NotNull(out_dir, "out_dir");
    mf::SynthConfig cfg;
    cfg.seed = c->seed;
    cfg.width = c->width;
    cfg.height = c->height;
    cfg.frames = c->frames;
    cfg.num_objects = c->num_objects;
    cfg.num_classes = c->num_classes;
    cfg.min_speed = c->min_speed;
    cfg.max_speed = c->max_speed;
    cfg.min_size = c->min_size;
    cfg.max_size = c->max_size;
    cfg.perturb = {c->jitter_radius, c->label_noise_rate, c->class_swap_rate};
    cfg.feature_dim = c->feature_dim;
    cfg.feature_separation = c->feature_separation;
    cfg.feature_stride = c->feature_stride;
    mf::SynthWriteOptions opts;
    opts.clips = c->clips;
    opts.write_features = c->write_features != 0;
    if (c->perfect_scores) opts.scores = mf::ScoreModel::Perfect();
    mf::Dataset ds = mf::write_synth_dataset(cfg, opts, out_dir);
    if (out) *out = NewDataset(std::move(ds), (std::filesystem::path(out_dir) / "manifest.json").string());
  });
}

mf_status mf_filter_dataset(const mf_dataset* ds, const mf_pipeline_config* cfg,
                            const char* out_dir, int jobs, mf_dataset** out) {
  return Guard([&] {
    NotNull(ds, "ds");
    NotNull(cfg, "cfg");
    NotNull(out_dir, "out_dir");
    mf::Dataset res = mf::filter_dataset(ds->ds, ToCore(*cfg).filter, out_dir, jobs);
    if (out) *out = NewDataset(std::move(res), (std::filesystem::path(out_dir) / "manifest.json").string());
  });
}

mf_status mf_refine_dataset(const mf_dataset* ds, const mf_pipeline_config* cfg,
                            const char* out_dir, int jobs, mf_dataset** out) {
  return Guard([&] {
    NotNull(ds, "ds");
    NotNull(cfg, "cfg");
    NotNull(out_dir, "out_dir");
    mf::Dataset res = mf::refine_dataset(ds->ds, ToCore(*cfg), out_dir, jobs);
    if (out) *out = NewDataset(std::move(res), (std::filesystem::path(out_dir) / "manifest.json").string());
  });
}

void mf_report_free(mf_report* report) { delete report; }

mf_status mf_report_json(const mf_report* report, char** out) {
  return Guard([&] {
    NotNull(report, "report");
    NotNull(out, "out");
    *out = CopyString(report->doc.dump(2));
  });
}

mf_status mf_report_csv(const mf_report* report, char** out) {
  return Guard([&] {
    NotNull(report, "report");
    NotNull(out, "out");
    *out = CopyString(report->csv);
  });
}

mf_status mf_report_number(const mf_report* report, const char* pointer, double* out) {
  return Guard([&] {
    NotNull(report, "report");
    NotNull(pointer, "pointer");
    NotNull(out, "out");
    try {
      const mf::Json& v = report->doc.at(mf::Json::json_pointer(pointer));
      if (v.is_null()) {
        *out = std::numeric_limits<double>::quiet_NaN();
        return;
      }
      mf::Require(v.is_number(), mf::ErrorCode::kInvalidArgument,
                  std::string(pointer) + " is not a number");
      *out = v.get<double>();
    } catch (const nlohmann::json::exception& e) {
      mf::Fail(mf::ErrorCode::kInvalidArgument, std::string(pointer) + ": " + e.what());
    }
  });
}

mf_status mf_evaluate(const mf_dataset* ds, const mf_pipeline_config* cfg, int jobs,
                      mf_report** out) {
  return Guard([&] {
    NotNull(ds, "ds");
    NotNull(cfg, "cfg");
    NotNull(out, "out");
    const mf::PipelineConfig core = ToCore(*cfg);
    const mf::MetricsReport report = mf::evaluate_dataset(ds->ds, core.eval, jobs);
    *out = new mf_report{mf::report_document(report, core, ds->manifest),
                         mf::per_class_csv(report)};
  });
}

mf_status mf_run_pipeline(const mf_dataset* ds, const mf_pipeline_config* cfg, int jobs,
                          mf_report** out) {
  return Guard([&] {
    NotNull(ds, "ds");
    NotNull(cfg, "cfg");
    NotNull(out, "out");
    const mf::PipelineConfig core = ToCore(*cfg);
    const mf::PipelineResult res = mf::run_pipeline(ds->ds, core, jobs);
    *out = new mf_report{mf::pipeline_document(res, core, ds->manifest), ""};
  });
}

mf_status mf_run_sweep(const mf_dataset* ds, const mf_pipeline_config* base,
                       const char* parameter, const double* values, size_t n, int jobs,
                       char** csv_out) {
  return Guard([&] {
    NotNull(ds, "ds");
    NotNull(base, "base");
    NotNull(parameter, "parameter");
    NotNull(csv_out, "csv_out");
    if (n > 0) NotNull(values, "values");
    mf::SweepPlan plan{mf::parse_sweep_parameter(parameter), {values, values + n}};
    const std::vector<mf::SweepRow> rows = mf::run_sweep(ds->ds, plan, ToCore(*base), jobs);
    *csv_out = CopyString(mf::sweep_csv(plan, rows));
  });
}

mf_status mf_validate_dataset(const mf_dataset* ds, mf_report** out) {
  mf::ValidationSummary summary;
  const mf_status st = Guard([&] {
    NotNull(ds, "ds");
    NotNull(out, "out");
    summary = mf::validate_dataset(ds->ds);
    mf::Json doc;
    doc["clips"] = summary.clips;
    doc["frames"] = summary.frames;
    doc["masklets"] = summary.masklets;
    doc["errors"] = summary.errors;
    doc["manifest"] = ds->manifest;
    *out = new mf_report{std::move(doc), ""};
  });
  if (st != MF_OK) return st;
  if (!summary.errors.empty()) {
    g_last_error = std::to_string(summary.errors.size()) + " validation error(s); first: " +
                   summary.errors.front();
    return MF_ERR_VALIDATION;
  }
  return MF_OK;
}

mf_status mf_train(const mf_dataset* ds, const mf_pipeline_config* filter_cfg,
                   const mf_train_config* cfg, mf_model** out) {
  return Guard([&] {
    NotNull(ds, "ds");
    NotNull(filter_cfg, "filter_cfg");
    NotNull(cfg, "cfg");
    NotNull(out, "out");
    const std::vector<mf::LabeledVector> data = mf::training_set(ds->ds, ToCore(*filter_cfg).filter);
    mf::Require(!data.empty(), mf::ErrorCode::kValidation, "no masklet yields a training vector");
    mf::TrainConfig tc;
    tc.learning_rate = cfg->learning_rate;
    tc.epochs = cfg->epochs;
    tc.batch_size = cfg->batch_size;
    tc.seed = cfg->seed;
    tc.d_hidden = cfg->d_hidden;
    mf::TrainResult res = mf::mlp_train(data, mf::dataset_num_classes(ds->ds), tc);
    *out = new mf_model{std::move(res.model)};
  });
}

mf_status mf_model_load(const char* path, mf_model** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new mf_model{mf::load_model(path)};
  });
}

mf_status mf_model_save(const mf_model* model, const char* path) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(path, "path");
    mf::save_model(model->model, path);
  });
}

void mf_model_free(mf_model* model) { delete model; }
int mf_model_num_classes(const mf_model* model) { return model ? model->model.num_classes : 0; }
int mf_model_input_dim(const mf_model* model) { return model ? model->model.d_in : 0; }
double mf_model_final_loss(const mf_model* model) {
  if (!model || !model->model.final_loss) return std::numeric_limits<double>::quiet_NaN();
  return *model->model.final_loss;
}

mf_status mf_model_predict(const mf_model* model, const double* v, int dim, uint16_t* class_id) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(v, "v");
    NotNull(class_id, "class_id");
    mf::Require(dim >= 0, mf::ErrorCode::kInvalidArgument, "negative dim");
    *class_id = mf::mlp_predict(model->model, {v, static_cast<std::size_t>(dim)});
  });
}

mf_status mf_classify_dataset(const mf_dataset* ds, const mf_model* model,
                              const mf_pipeline_config* filter_cfg, int base_from_pred,
                              const char* out_dir, int jobs, mf_dataset** out) {
  return Guard([&] {
    NotNull(ds, "ds");
    NotNull(model, "model");
    NotNull(filter_cfg, "filter_cfg");
    NotNull(out_dir, "out_dir");
    const mf::PipelineConfig core = ToCore(*filter_cfg);
    mf::ClassifyOptions opts;
    opts.base_from_pred = base_from_pred != 0;
    opts.overlap_order = core.refine.overlap_order;
    opts.filter = core.filter;
    mf::Dataset res = mf::classify_dataset(ds->ds, model->model, opts, out_dir, jobs);
    if (out) *out = NewDataset(std::move(res), (std::filesystem::path(out_dir) / "manifest.json").string());
  });
}

}  // extern "C"
