/*
 * procl: weakly-supervised temporal action localization via progressive
 * category exclusion, exposed as a C shared-library API.
 *
 * All functions return procl_status (0 on success); procl_last_error() gives
 * a thread-local description of the most recent failure on this thread.
 * Handles are opaque; every *_new/*_open has a matching *_free.
 */
#ifndef PROCL_H
#define PROCL_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define PROCL_API __declspec(dllexport)
#else
#define PROCL_API __attribute__((visibility("default")))
#endif

typedef enum procl_status {
    PROCL_OK = 0,
    PROCL_ERR_GENERIC = 1,
    PROCL_ERR_CONFIG = 2,
    PROCL_ERR_NUMERIC = 3,
    PROCL_ERR_IO = 4,
    PROCL_ERR_DATA = 5,
    PROCL_ERR_INVALID_ARG = 6,
} procl_status;

PROCL_API const char* procl_version(void);

/* Thread-local message for the last failed call; empty string if none. */
PROCL_API const char* procl_last_error(void);

/* ---- configuration ---- */

typedef struct procl_config procl_config;

/* Defaults for the synthetic desk-scale benchmark. */
PROCL_API procl_config* procl_config_new(void);
PROCL_API void procl_config_free(procl_config* cfg);

PROCL_API procl_status procl_config_load_file(procl_config* cfg, const char* path);

/* Dotted-path override, e.g. ("train.theta", "0.4"), ("seed", "11"),
 * ("train.flags", "cl,fbd,mpcl"). */
PROCL_API procl_status procl_config_set(procl_config* cfg, const char* key, const char* value);

/* JSON dump of the effective config; free with procl_string_free. */
PROCL_API char* procl_config_dump(const procl_config* cfg);
PROCL_API void procl_string_free(char* s);

/* ---- datasets ---- */

typedef struct procl_dataset procl_dataset;

PROCL_API procl_status procl_gen_data(const procl_config* cfg, const char* out_dir);

/* Opens a split directory (one holding meta.json). */
PROCL_API procl_dataset* procl_dataset_open(const char* dir);
PROCL_API void procl_dataset_free(procl_dataset* ds);
PROCL_API int procl_dataset_num_videos(const procl_dataset* ds);
PROCL_API int procl_dataset_num_classes(const procl_dataset* ds);
PROCL_API int procl_dataset_feature_dim(const procl_dataset* ds);
/* Borrowed pointer, valid while ds lives; NULL when index is out of range. */
PROCL_API const char* procl_dataset_video_id(const procl_dataset* ds, int index);

/* ---- runs ---- */

/* Train on the train split under data_dir (or on data_dir itself when it is
 * a split). Writes checkpoints, loss.csv, audit.csv and config.json. */
PROCL_API procl_status procl_train(const procl_config* cfg, const char* data_dir,
                                   const char* out_dir);

/* Proposal generation for every video of a split; JSON-lines output. */
PROCL_API procl_status procl_localize(const procl_config* cfg, const char* checkpoint,
                                      const char* data_dir, const char* out_file);

/* mAP table. ground_truth is an annotations.jsonl or a split directory.
 * out_csv may be NULL; table_text (optional) receives the printable table,
 * free with procl_string_free. */
PROCL_API procl_status procl_evaluate(const procl_config* cfg, const char* proposals_file,
                                      const char* ground_truth, const char* out_csv,
                                      char** table_text);

/* Label-quality audit (PL / PCL / MPCL) of a checkpoint against a split with
 * snippet-level ground truth. */
PROCL_API procl_status procl_label_audit(const procl_config* cfg, const char* checkpoint,
                                         const char* data_dir, const char* out_csv);

/* Full ablation matrix; writes ablation.csv plus per-experiment artifacts.
 * table_text as in procl_evaluate. */
PROCL_API procl_status procl_ablate(const procl_config* cfg, const char* data_root,
                                    const char* out_dir, char** table_text);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PROCL_H */
