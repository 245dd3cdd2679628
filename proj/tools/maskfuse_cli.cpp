// Command-line front end. Talks to the library only through the C API.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "maskfuse/maskfuse.h"

namespace {

using Json = nlohmann::ordered_json;

// Carries an mf_status out of a command body.
struct ApiFailure : std::runtime_error {
  mf_status status;
  ApiFailure(mf_status s, const std::string& msg) : std::runtime_error(msg), status(s) {}
};

void Check(mf_status st) {
  if (st != MF_OK) throw ApiFailure(st, mf_last_error_message());
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using DatasetPtr = std::unique_ptr<mf_dataset, Deleter<mf_dataset, mf_dataset_free>>;
using ReportPtr = std::unique_ptr<mf_report, Deleter<mf_report, mf_report_free>>;
using ModelPtr = std::unique_ptr<mf_model, Deleter<mf_model, mf_model_free>>;

std::string TakeString(char* s) {
  std::string out(s ? s : "");
  mf_string_free(s);
  return out;
}

void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ApiFailure(MF_ERR_IO, path + ": cannot open for writing");
  out << text;
  if (!out) throw ApiFailure(MF_ERR_IO, path + ": write failed");
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ApiFailure(MF_ERR_IO, path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Globals {
  std::string manifest;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::string config_path;
};

// Flags that override the resolved pipeline config when given.
struct ConfigFlags {
  std::optional<double> pred_iou, stability, stability_offset, dedup_iou;
  std::optional<int> window;
  std::optional<double> match_iou;
  bool stitch = false;
  std::optional<std::string> vote_scope, overlap;
  std::optional<double> min_vote;
  std::optional<std::vector<int>> vc;
  std::optional<int> boundary_radius;
};

enum FlagGroup : unsigned {
  kFilterFlags = 1,
  kTrackerFlags = 2,
  kRefineFlags = 4,
  kEvalFlags = 8,
  kScalarSweepable = 16,  // pred_iou / stability / window as scalars
};

void AddConfigFlags(CLI::App* sub, ConfigFlags& f, unsigned groups) {
  if (groups & kFilterFlags) {
    if (groups & kScalarSweepable) {
      sub->add_option("--pred-iou", f.pred_iou, "predicted IoU threshold")->check(CLI::Range(0.0, 1.0));
      sub->add_option("--stability", f.stability, "stability threshold")->check(CLI::Range(0.0, 1.0));
    }
    sub->add_option("--stability-offset", f.stability_offset, "logit-space stability offset");
    sub->add_option("--dedup-iou", f.dedup_iou, "duplicate suppression IoU")->check(CLI::Range(0.0, 1.0));
  }
  if (groups & kTrackerFlags) {
    if (groups & kScalarSweepable) sub->add_option("--window", f.window, "tracker window in frames");
    sub->add_option("--match-iou", f.match_iou, "track linking IoU")->check(CLI::Range(0.0, 1.0));
    sub->add_flag("--stitch", f.stitch, "stitch identities across windows");
  }
  if (groups & kRefineFlags) {
    sub->add_option("--vote-scope", f.vote_scope)->check(CLI::IsMember({"per_frame", "per_track"}));
    sub->add_option("--overlap", f.overlap)->check(CLI::IsMember({"area_desc", "pred_iou_asc"}));
    sub->add_option("--min-vote", f.min_vote)->check(CLI::Range(0.0, 1.0));
  }
  if (groups & kEvalFlags) {
    sub->add_option("--vc", f.vc, "consistency window lengths")->delimiter(',');
    sub->add_option("--boundary-radius", f.boundary_radius);
  }
}

mf_pipeline_config ResolveConfig(const Globals& g, const ConfigFlags& f) {
  mf_pipeline_config cfg;
  mf_pipeline_config_default(&cfg);
  if (!g.config_path.empty()) {
    Check(mf_pipeline_config_from_json(ReadFile(g.config_path).c_str(), &cfg));
  }
  if (f.pred_iou) cfg.pred_iou = *f.pred_iou;
  if (f.stability) cfg.stability = *f.stability;
  if (f.stability_offset) cfg.stability_offset = *f.stability_offset;
  if (f.dedup_iou) cfg.dedup_iou = *f.dedup_iou;
  if (f.window) cfg.window = *f.window;
  if (f.match_iou) cfg.match_iou = *f.match_iou;
  if (f.stitch) cfg.stitch = 1;
  if (f.vote_scope) cfg.vote_scope = *f.vote_scope == "per_track" ? MF_VOTE_PER_TRACK : MF_VOTE_PER_FRAME;
  if (f.overlap) cfg.overlap = *f.overlap == "pred_iou_asc" ? MF_OVERLAP_PRED_IOU_ASC : MF_OVERLAP_AREA_DESC;
  if (f.min_vote) cfg.min_vote = *f.min_vote;
  if (f.vc) {
    if (f.vc->size() > MF_MAX_VC) throw ApiFailure(MF_ERR_CONFIG, "too many --vc values");
    cfg.vc_count = static_cast<int>(f.vc->size());
    for (std::size_t i = 0; i < f.vc->size(); ++i) cfg.vc_n[i] = (*f.vc)[i];
  }
  if (f.boundary_radius) cfg.boundary_radius = *f.boundary_radius;
  // Round-trips through the library to surface range errors before any work.
  char* json = nullptr;
  Check(mf_pipeline_config_to_json(&cfg, &json));
  mf_string_free(json);
  return cfg;
}

DatasetPtr OpenDataset(const Globals& g) {
  if (g.manifest.empty()) throw ApiFailure(MF_ERR_INVALID_ARGUMENT, "--manifest is required");
  mf_dataset* ds = nullptr;
  Check(mf_dataset_open(g.manifest.c_str(), &ds));
  return DatasetPtr(ds);
}

void EmitReport(const mf_report* report, const std::string& path) {
  const std::string text = TakeString([&] {
    char* s = nullptr;
    Check(mf_report_json(report, &s));
    return s;
  }()) + "\n";
  if (!path.empty()) WriteFile(path, text);
  std::cout << text;
}

int Fail(mf_status st, const std::string& message) {
  Json err;
  err["error"] = {{"status", mf_status_string(st)}, {"code", static_cast<int>(st)},
                  {"message", message}};
  std::cerr << err.dump() << "\n";
  return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masklet-based refinement and evaluation of video segmentation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--manifest", g.manifest, "dataset manifest");
  app.add_option("--jobs", g.jobs, "clip-level worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "seed for synth and train");
  app.add_option("--config", g.config_path, "config or report JSON to start from");
  app.fallthrough();

  // synth
  mf_synth_config synth;
  mf_synth_config_default(&synth);
  std::string synth_out;
  bool no_features = false, perfect_scores = false;
  auto* s = app.add_subcommand("synth", "write a seeded synthetic dataset");
  s->add_option("--out", synth_out, "output directory")->required();
  s->add_option("--clips", synth.clips)->check(CLI::PositiveNumber);
  s->add_option("--frames", synth.frames)->check(CLI::PositiveNumber);
  s->add_option("--width", synth.width)->check(CLI::PositiveNumber);
  s->add_option("--height", synth.height)->check(CLI::PositiveNumber);
  s->add_option("--objects", synth.num_objects)->check(CLI::NonNegativeNumber);
  s->add_option("--classes", synth.num_classes)->check(CLI::PositiveNumber);
  s->add_option("--min-speed", synth.min_speed);
  s->add_option("--max-speed", synth.max_speed);
  s->add_option("--min-size", synth.min_size);
  s->add_option("--max-size", synth.max_size);
  s->add_option("--jitter", synth.jitter_radius, "boundary jitter radius");
  s->add_option("--noise", synth.label_noise_rate, "label noise rate");
  s->add_option("--swap", synth.class_swap_rate, "object class swap rate");
  s->add_option("--feature-dim", synth.feature_dim);
  s->add_option("--separation", synth.feature_separation);
  s->add_option("--stride", synth.feature_stride, "feature grid stride");
  s->add_flag("--no-features", no_features);
  s->add_flag("--perfect-scores", perfect_scores, "quality scores fixed at 1.0");

  // filter
  ConfigFlags filter_flags;
  std::string filter_out;
  auto* f = app.add_subcommand("filter", "drop low-quality masklets");
  f->add_option("--out", filter_out)->required();
  AddConfigFlags(f, filter_flags, kFilterFlags | kScalarSweepable);

  // refine
  ConfigFlags refine_flags;
  std::string refine_out;
  auto* r = app.add_subcommand("refine", "overwrite masklet regions with their majority class");
  r->add_option("--out", refine_out)->required();
  AddConfigFlags(r, refine_flags, kFilterFlags | kTrackerFlags | kRefineFlags | kScalarSweepable);

  // train
  ConfigFlags train_flags;
  mf_train_config train;
  mf_train_config_default(&train);
  std::string model_out;
  auto* t = app.add_subcommand("train", "train the masklet classifier");
  t->add_option("--model-out", model_out)->required();
  t->add_option("--epochs", train.epochs)->check(CLI::PositiveNumber);
  t->add_option("--lr", train.learning_rate)->check(CLI::PositiveNumber);
  t->add_option("--batch", train.batch_size)->check(CLI::PositiveNumber);
  t->add_option("--hidden", train.d_hidden)->check(CLI::PositiveNumber);
  AddConfigFlags(t, train_flags, kFilterFlags | kScalarSweepable);

  // classify
  ConfigFlags classify_flags;
  std::string model_in, classify_out, base_from;
  auto* c = app.add_subcommand("classify", "classify masklets and compose segmentations");
  c->add_option("--model", model_in)->required();
  c->add_option("--out", classify_out)->required();
  c->add_option("--base-from", base_from, "fill uncovered pixels from this source")
      ->check(CLI::IsMember({"pred"}));
  AddConfigFlags(c, classify_flags, kFilterFlags | kScalarSweepable);
  c->add_option("--overlap", classify_flags.overlap)->check(CLI::IsMember({"area_desc", "pred_iou_asc"}));

  // eval
  ConfigFlags eval_flags;
  std::string eval_report, eval_csv;
  bool validate_only = false;
  auto* e = app.add_subcommand("eval", "score predictions against ground truth");
  e->add_option("--report", eval_report);
  e->add_option("--csv", eval_csv, "per-class IoU table");
  e->add_flag("--validate-only", validate_only, "check files without scoring");
  AddConfigFlags(e, eval_flags, kEvalFlags);

  // pipeline
  ConfigFlags pipe_flags;
  std::string pipe_report;
  auto* p = app.add_subcommand("pipeline", "evaluate raw and refined predictions");
  p->add_option("--report", pipe_report);
  AddConfigFlags(p, pipe_flags, kFilterFlags | kTrackerFlags | kRefineFlags | kEvalFlags | kScalarSweepable);

  // sweep
  ConfigFlags sweep_flags;
  std::vector<double> sw_window, sw_pred, sw_stab, sw_grid;
  std::string sweep_csv_path;
  auto* w = app.add_subcommand("sweep", "one pipeline run per parameter value");
  auto* o1 = w->add_option("--window", sw_window)->delimiter(',');
  auto* o2 = w->add_option("--pred-iou", sw_pred)->delimiter(',');
  auto* o3 = w->add_option("--stability", sw_stab)->delimiter(',');
  auto* o4 = w->add_option("--grid-note", sw_grid, "prompt grid sizes, recorded only")->delimiter(',');
  o1->excludes(o2)->excludes(o3)->excludes(o4);
  o2->excludes(o3)->excludes(o4);
  o3->excludes(o4);
  w->add_option("--csv", sweep_csv_path);
  AddConfigFlags(w, sweep_flags, kFilterFlags | kTrackerFlags | kRefineFlags | kEvalFlags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return Fail(MF_ERR_INVALID_ARGUMENT, ex.what());
  }

  try {
    if (*s) {
      if (g.seed) synth.seed = *g.seed;
      synth.write_features = no_features ? 0 : 1;
      synth.perfect_scores = perfect_scores ? 1 : 0;
      mf_dataset* ds = nullptr;
      Check(mf_synth_write(&synth, synth_out.c_str(), &ds));
      DatasetPtr owned(ds);
      Json j{{"manifest", mf_dataset_manifest_path(ds)}, {"clips", mf_dataset_clip_count(ds)}};
      std::cout << j.dump() << "\n";
    } else if (*f) {
      const mf_pipeline_config cfg = ResolveConfig(g, filter_flags);
      DatasetPtr ds = OpenDataset(g);
      mf_dataset* res = nullptr;
      Check(mf_filter_dataset(ds.get(), &cfg, filter_out.c_str(), g.jobs, &res));
      DatasetPtr owned(res);
      std::cout << Json{{"manifest", mf_dataset_manifest_path(res)}}.dump() << "\n";
    } else if (*r) {
      const mf_pipeline_config cfg = ResolveConfig(g, refine_flags);
      DatasetPtr ds = OpenDataset(g);
      mf_dataset* res = nullptr;
      Check(mf_refine_dataset(ds.get(), &cfg, refine_out.c_str(), g.jobs, &res));
      DatasetPtr owned(res);
      std::cout << Json{{"manifest", mf_dataset_manifest_path(res)}}.dump() << "\n";
    } else if (*t) {
      if (g.seed) train.seed = *g.seed;
      const mf_pipeline_config cfg = ResolveConfig(g, train_flags);
      DatasetPtr ds = OpenDataset(g);
      mf_model* m = nullptr;
      Check(mf_train(ds.get(), &cfg, &train, &m));
      ModelPtr model(m);
      Check(mf_model_save(m, model_out.c_str()));
      Json j{{"model", model_out}, {"final_loss", mf_model_final_loss(m)}};
      std::cout << j.dump() << "\n";
    } else if (*c) {
      const mf_pipeline_config cfg = ResolveConfig(g, classify_flags);
      DatasetPtr ds = OpenDataset(g);
      mf_model* m = nullptr;
      Check(mf_model_load(model_in.c_str(), &m));
      ModelPtr model(m);
      mf_dataset* res = nullptr;
      Check(mf_classify_dataset(ds.get(), m, &cfg, base_from == "pred" ? 1 : 0,
                                classify_out.c_str(), g.jobs, &res));
      DatasetPtr owned(res);
      std::cout << Json{{"manifest", mf_dataset_manifest_path(res)}}.dump() << "\n";
    } else if (*e) {
      DatasetPtr ds = OpenDataset(g);
      if (validate_only) {
        mf_report* rep = nullptr;
        const mf_status st = mf_validate_dataset(ds.get(), &rep);
        ReportPtr owned(rep);
        if (rep) EmitReport(rep, eval_report);
        Check(st);
      } else {
        const mf_pipeline_config cfg = ResolveConfig(g, eval_flags);
        mf_report* rep = nullptr;
        Check(mf_evaluate(ds.get(), &cfg, g.jobs, &rep));
        ReportPtr owned(rep);
        EmitReport(rep, eval_report);
        if (!eval_csv.empty()) {
          char* csv = nullptr;
          Check(mf_report_csv(rep, &csv));
          WriteFile(eval_csv, TakeString(csv));
        }
      }
    } else if (*p) {
      const mf_pipeline_config cfg = ResolveConfig(g, pipe_flags);
      DatasetPtr ds = OpenDataset(g);
      mf_report* rep = nullptr;
      Check(mf_run_pipeline(ds.get(), &cfg, g.jobs, &rep));
      ReportPtr owned(rep);
      EmitReport(rep, pipe_report);
    } else if (*w) {
      const mf_pipeline_config cfg = ResolveConfig(g, sweep_flags);
      const char* param = nullptr;
      const std::vector<double>* values = nullptr;
      if (o1->count()) { param = "window"; values = &sw_window; }
      if (o2->count()) { param = "pred_iou"; values = &sw_pred; }
      if (o3->count()) { param = "stability"; values = &sw_stab; }
      if (o4->count()) { param = "grid_note"; values = &sw_grid; }
      if (!param) {
        throw ApiFailure(MF_ERR_INVALID_ARGUMENT,
                         "sweep needs one of --window, --pred-iou, --stability, --grid-note");
      }
      DatasetPtr ds = OpenDataset(g);
      char* csv = nullptr;
      Check(mf_run_sweep(ds.get(), &cfg, param, values->data(), values->size(), g.jobs, &csv));
      const std::string table = TakeString(csv);
      if (!sweep_csv_path.empty()) WriteFile(sweep_csv_path, table);
      std::cout << table;
    }
  } catch (const ApiFailure& ex) {
    return Fail(ex.status, ex.what());
  } catch (const std::exception& ex) {
    return Fail(MF_ERR_INTERNAL, ex.what());
  }
  return 0;
}
