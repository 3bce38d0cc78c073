/* SPDX-License-Identifier: Apache-2.0 */
#ifndef OIE_OIE_H_
#define OIE_OIE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(OIE_BUILDING_LIBRARY)
#define OIE_API __attribute__((visibility("default")))
#else
#define OIE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every call returns a status; on failure oie_last_error() describes it. */
typedef enum oie_status {
  OIE_OK = 0,
  OIE_ERR_RUNTIME = 1,  /* failure while running: I/O, non-finite values, editor contract */
  OIE_ERR_CONFIG = 2,   /* invalid configuration, arguments or input shapes */
} oie_status;

typedef struct oie_config oie_config;
typedef struct oie_model oie_model;

/* Receives (phase, step, loss). Phases: "pretrain", "train", "<variant>/<seed>". */
typedef void (*oie_progress_fn)(const char* phase, int64_t step, double loss, void* user);

typedef struct oie_train_summary {
  int64_t steps;
  double initial_loss; /* mean over the first smoothing window */
  double final_loss;   /* mean over the last smoothing window */
} oie_train_summary;

typedef struct oie_tryon_stats {
  int editor_calls;
  int assemble_calls;
} oie_tryon_stats;

typedef struct oie_metrics {
  double ssim;
  double perc;
  double fvd;
  int samples;
} oie_metrics;

typedef struct oie_efficiency {
  int64_t base_params;
  int64_t total_params;
  int64_t trainable_params;
  double added_over_base_pct;
  double trainable_pct;
  int64_t flops_base;
  int64_t flops_conditioned;
  double flops_overhead_pct;
  int64_t flops_merged;
  double flops_merged_overhead_pct;
  double wall_time_per_step;
} oie_efficiency;

OIE_API const char* oie_version(void);
/* Thread-local; valid until the next failing call on the same thread. */
OIE_API const char* oie_last_error(void);
OIE_API void oie_string_free(char* s);

OIE_API oie_status oie_config_default(oie_config** out);
OIE_API oie_status oie_config_load(const char* path, oie_config** out);
/* Applies a JSON merge patch, e.g. {"train": {"steps": 100}}. */
OIE_API oie_status oie_config_patch(oie_config* cfg, const char* json_patch);
OIE_API oie_status oie_config_to_json(const oie_config* cfg, char** out_json);
OIE_API void oie_config_free(oie_config* cfg);

/* Writes <out_dir>/dataset/{manifest.json, garments/, samples/}. */
OIE_API oie_status oie_gen_data(const oie_config* cfg, const char* out_dir);

/* Pretrains (or reuses) <out_dir>/checkpoints/base, fine-tunes the configured
 * variant into <out_dir>/checkpoints/<variant> (resuming a saved state there)
 * and writes <out_dir>/reports/loss.csv. */
OIE_API oie_status oie_train(const oie_config* cfg, const char* manifest_path, const char* out_dir,
                             oie_progress_fn progress, void* user, oie_train_summary* out);

/* merged != 0 folds adapters into the host weights. */
OIE_API oie_status oie_model_load(const char* checkpoint_dir, int merged, oie_model** out);
OIE_API oie_status oie_model_params(const oie_model* model, int64_t* total, int64_t* trainable);
OIE_API void oie_model_free(oie_model* model);

/* Try-on for one dataset sample. garment_id < 0 selects the worn garment.
 * Writes <out_dir>/samples/<sample>_g<garment>/{output.tns, frame_*.ppm}. */
OIE_API oie_status oie_sample(const oie_config* cfg, const oie_model* model, const char* manifest_path,
                              int sample_index, int garment_id, uint64_t seed, const char* out_dir,
                              oie_tryon_stats* stats);

/* setting: "paired" or "unpaired". Writes <out_dir>/reports/{report.json, metrics.csv}. */
OIE_API oie_status oie_eval(const oie_config* cfg, const oie_model* model, const char* manifest_path,
                            const char* setting, const char* out_dir, oie_metrics* out);

/* variants: comma-separated subset of full,no_pose,no_agnostic,no_both (NULL: all four).
 * Writes <out_dir>/reports/ablation.csv. */
OIE_API oie_status oie_ablate(const oie_config* cfg, const char* manifest_path, const char* variants,
                              const char* out_dir, oie_progress_fn progress, void* user);

/* model NULL profiles a freshly conditioned model. Writes
 * <out_dir>/reports/{efficiency.json, efficiency.txt, efficiency.csv}. */
OIE_API oie_status oie_profile(const oie_config* cfg, const oie_model* model, const char* out_dir,
                               oie_efficiency* out);

/* 100 * (total - base) / base. */
OIE_API oie_status oie_overhead_pct(double base, double total, double* out);

#ifdef __cplusplus
}
#endif

#endif /* OIE_OIE_H_ */
