/* C interface to the colontcn temporal-segmentation library.
 *
 * All functions return ctcn_status; on failure a thread-local message is
 * available from ctcn_last_error(). Handles are opaque and must be released
 * with their _free function. Status values match the CLI exit-code contract.
 */
#ifndef COLONTCN_H
#define COLONTCN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ctcn_status {
    CTCN_OK = 0,
    CTCN_ERROR = 1,         /* invalid arguments / internal failure */
    CTCN_ERROR_CONFIG = 2,  /* bad configuration */
    CTCN_ERROR_DATA = 3,    /* bad or missing input data */
    CTCN_ERROR_NUMERIC = 4, /* numeric failure (divergence, non-finite) */
} ctcn_status;

typedef struct ctcn_features ctcn_features;
typedef struct ctcn_model ctcn_model;

/* Message describing the most recent failure on this thread. Never NULL. */
const char* ctcn_last_error(void);

void ctcn_version(int* major, int* minor);

/* Frees strings returned through char** out-parameters. */
void ctcn_string_free(char* s);

/* ---- feature sequences ---- */

ctcn_status ctcn_features_load(const char* path, ctcn_features** out);
void ctcn_features_free(ctcn_features* f);
int64_t ctcn_features_frames(const ctcn_features* f);
int ctcn_features_dim(const ctcn_features* f);
double ctcn_features_fps(const ctcn_features* f);
/* Copies one frame's embedding (dim values) into out. */
ctcn_status ctcn_features_row(const ctcn_features* f, int64_t frame, double* out);

/* ---- models ---- */

ctcn_status ctcn_model_load(const char* checkpoint_path, ctcn_model** out);
void ctcn_model_free(ctcn_model* m);
int ctcn_model_num_classes(const ctcn_model* m);
int ctcn_model_feature_dim(const ctcn_model* m);

/* Per-frame argmax labels (length = frame count). When probs is non-NULL it
 * receives frames * num_classes row-major class probabilities. */
ctcn_status ctcn_model_predict(const ctcn_model* m, const ctcn_features* f, int* labels,
                               double* probs);

/* ---- commands (the CLI binds these one-to-one) ----
 *
 * config_json is the run-config document ("" or NULL for defaults);
 * overrides_json is merged on top ("" or NULL for none).
 */

ctcn_status ctcn_cmd_synth(const char* config_json, const char* overrides_json, int n_videos,
                           const char* out_dir);

ctcn_status ctcn_cmd_train(const char* config_json, const char* overrides_json, int fold_id,
                           const char* out_dir);

ctcn_status ctcn_cmd_eval(const char* checkpoint_path, const char* manifest_path,
                          const char* folds_path, int fold_id, const char* split,
                          const char* out_dir, int dump_labels);

ctcn_status ctcn_cmd_predict(const char* checkpoint_path, const char* const* feature_paths,
                             int n_paths, const char* out_dir, int write_probs);

/* json_out receives a JSON document; release with ctcn_string_free. */
ctcn_status ctcn_cmd_profile(const char* config_json, const char* overrides_json,
                             const int64_t* frames, int n_frames, char** json_out);

ctcn_status ctcn_cmd_render(const char* const* label_paths, int n_paths, const char* out_svg);

ctcn_status ctcn_cmd_folds_validate(const char* folds_path, const char* manifest_path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* COLONTCN_H */
