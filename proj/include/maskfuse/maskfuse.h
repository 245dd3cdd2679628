#ifndef MASKFUSE_MASKFUSE_H_
#define MASKFUSE_MASKFUSE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(MASKFUSE_BUILDING_LIBRARY)
#define MF_API __attribute__((visibility("default")))
#else
#define MF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mf_status {
  MF_OK = 0,
  MF_ERR_INVALID_ARGUMENT = 1,
  MF_ERR_FORMAT = 2,
  MF_ERR_VALIDATION = 3,
  MF_ERR_RANGE = 4,
  MF_ERR_DATA = 5,
  MF_ERR_DIMENSION = 6,
  MF_ERR_CONFIG = 7,
  MF_ERR_CONTRACT = 8,
  MF_ERR_UNDEFINED_METRIC = 9,
  MF_ERR_DIVERGENCE = 10,
  MF_ERR_IO = 11,
  MF_ERR_INTERNAL = 12
} mf_status;

/* Short stable name, e.g. "format". */
MF_API const char* mf_status_string(mf_status status);
/* Message of the last failure on the calling thread; "" after success. */
MF_API const char* mf_last_error_message(void);
/* trace|debug|info|warn|error|off */
MF_API mf_status mf_set_log_level(const char* level);
MF_API const char* mf_version(void);

/* Strings returned through char** out parameters are owned by the caller. */
MF_API void mf_string_free(char* s);

/* ---- masks ---- */

typedef struct mf_mask mf_mask;

MF_API mf_status mf_mask_encode(const uint8_t* dense, int width, int height, mf_mask** out);
MF_API mf_status mf_mask_from_counts(int width, int height, const uint32_t* counts, size_t n,
                                     mf_mask** out);
MF_API void mf_mask_free(mf_mask* mask);
MF_API int mf_mask_width(const mf_mask* mask);
MF_API int mf_mask_height(const mf_mask* mask);
MF_API size_t mf_mask_area(const mf_mask* mask);
MF_API size_t mf_mask_count_length(const mf_mask* mask);
MF_API const uint32_t* mf_mask_counts(const mf_mask* mask);
/* out must hold width*height bytes. */
MF_API mf_status mf_mask_decode(const mf_mask* mask, uint8_t* out, size_t out_len);
MF_API mf_status mf_mask_iou(const mf_mask* a, const mf_mask* b, double* out);

/* ---- label maps ---- */

typedef struct mf_labelmap mf_labelmap;

MF_API mf_status mf_labelmap_create(int width, int height, uint16_t fill, uint16_t ignore_label,
                                    mf_labelmap** out);
MF_API mf_status mf_labelmap_read(const char* path, uint16_t ignore_label, mf_labelmap** out);
MF_API mf_status mf_labelmap_write(const mf_labelmap* map, const char* path);
MF_API void mf_labelmap_free(mf_labelmap* map);
MF_API int mf_labelmap_width(const mf_labelmap* map);
MF_API int mf_labelmap_height(const mf_labelmap* map);
/* Row-major, width*height entries, writable. */
MF_API uint16_t* mf_labelmap_data(mf_labelmap* map);

/* Majority class of map under mask; ignore pixels never vote. */
MF_API mf_status mf_predominant_class(const mf_mask* mask, const mf_labelmap* map,
                                      uint16_t* class_id, double* fraction);

/* probs: width*height values in [0,1]. */
MF_API mf_status mf_stability_score(const double* probs, int width, int height, double offset,
                                    double* out);

/* ---- configuration ---- */

#define MF_MAX_VC 8

typedef enum mf_vote_scope { MF_VOTE_PER_FRAME = 0, MF_VOTE_PER_TRACK = 1 } mf_vote_scope;
typedef enum mf_overlap_order {
  MF_OVERLAP_AREA_DESC = 0,
  MF_OVERLAP_PRED_IOU_ASC = 1
} mf_overlap_order;

typedef struct mf_pipeline_config {
  double pred_iou;
  double stability;
  double stability_offset;
  double dedup_iou; /* negative disables */
  int window;
  double match_iou;
  int stitch;
  mf_vote_scope vote_scope;
  mf_overlap_order overlap;
  double min_vote;
  int vc_n[MF_MAX_VC];
  int vc_count;
  int boundary_radius;
} mf_pipeline_config;

MF_API void mf_pipeline_config_default(mf_pipeline_config* cfg);
/* Accepts a bare config object or a report that embeds one under "config". */
MF_API mf_status mf_pipeline_config_from_json(const char* json, mf_pipeline_config* cfg);
MF_API mf_status mf_pipeline_config_to_json(const mf_pipeline_config* cfg, char** out);

typedef struct mf_synth_config {
  uint64_t seed;
  int width;
  int height;
  int frames;
  int num_objects;
  int num_classes;
  double min_speed;
  double max_speed;
  int min_size;
  int max_size;
  int jitter_radius;
  double label_noise_rate;
  double class_swap_rate;
  int feature_dim;
  double feature_separation;
  int feature_stride;
  int clips;
  int write_features;
  int perfect_scores; /* constant 1.0 quality scores */
} mf_synth_config;

MF_API void mf_synth_config_default(mf_synth_config* cfg);

typedef struct mf_train_config {
  double learning_rate;
  int epochs;
  int batch_size;
  uint64_t seed;
  int d_hidden;
} mf_train_config;

MF_API void mf_train_config_default(mf_train_config* cfg);

/* ---- datasets ---- */

typedef struct mf_dataset mf_dataset;

MF_API mf_status mf_dataset_open(const char* manifest_path, mf_dataset** out);
MF_API void mf_dataset_free(mf_dataset* ds);
MF_API size_t mf_dataset_clip_count(const mf_dataset* ds);
/* Path the dataset was read from or written to. */
MF_API const char* mf_dataset_manifest_path(const mf_dataset* ds);

/* Writes a synthetic dataset under out_dir; out may be NULL. */
MF_API mf_status mf_synth_write(const mf_synth_config* cfg, const char* out_dir, mf_dataset** out);

/* Rewrites masklet streams after quality filtering; out may be NULL. */
MF_API mf_status mf_filter_dataset(const mf_dataset* ds, const mf_pipeline_config* cfg,
                                   const char* out_dir, int jobs, mf_dataset** out);
/* Writes refined predictions; out may be NULL. */
MF_API mf_status mf_refine_dataset(const mf_dataset* ds, const mf_pipeline_config* cfg,
                                   const char* out_dir, int jobs, mf_dataset** out);

/* ---- reports ---- */

typedef struct mf_report mf_report;

MF_API void mf_report_free(mf_report* report);
MF_API mf_status mf_report_json(const mf_report* report, char** out);
/* Per-class IoU as class,iou rows; empty for pipeline/validation reports. */
MF_API mf_status mf_report_csv(const mf_report* report, char** out);
/* Looks up a number by JSON pointer, e.g. "/after/miou". */
MF_API mf_status mf_report_number(const mf_report* report, const char* pointer, double* out);

MF_API mf_status mf_evaluate(const mf_dataset* ds, const mf_pipeline_config* cfg, int jobs,
                             mf_report** out);
/* Before/after reports plus delta. */
MF_API mf_status mf_run_pipeline(const mf_dataset* ds, const mf_pipeline_config* cfg, int jobs,
                                 mf_report** out);
/* parameter: window|pred_iou|stability|grid_note. csv_out is the ablation table. */
MF_API mf_status mf_run_sweep(const mf_dataset* ds, const mf_pipeline_config* base,
                              const char* parameter, const double* values, size_t n, int jobs,
                              char** csv_out);
/* Summary JSON {clips, frames, masklets, errors[]}; MF_ERR_VALIDATION when errors exist. */
MF_API mf_status mf_validate_dataset(const mf_dataset* ds, mf_report** out);

/* ---- classifier ---- */

typedef struct mf_model mf_model;

MF_API mf_status mf_train(const mf_dataset* ds, const mf_pipeline_config* filter_cfg,
                          const mf_train_config* cfg, mf_model** out);
MF_API mf_status mf_model_load(const char* path, mf_model** out);
MF_API mf_status mf_model_save(const mf_model* model, const char* path);
MF_API void mf_model_free(mf_model* model);
MF_API int mf_model_num_classes(const mf_model* model);
MF_API int mf_model_input_dim(const mf_model* model);
/* NaN when the model carries no loss. */
MF_API double mf_model_final_loss(const mf_model* model);
MF_API mf_status mf_model_predict(const mf_model* model, const double* v, int dim,
                                  uint16_t* class_id);
MF_API mf_status mf_classify_dataset(const mf_dataset* ds, const mf_model* model,
                                     const mf_pipeline_config* filter_cfg, int base_from_pred,
                                     const char* out_dir, int jobs, mf_dataset** out);

#ifdef __cplusplus
}
#endif

#endif /* MASKFUSE_MASKFUSE_H_ */
