#ifndef GRASPMETA_H
#define GRASPMETA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum GmStatus {
  GM_STATUS_OK = 0,
  GM_STATUS_NULL_POINTER = 1,
  GM_STATUS_INVALID_ARGUMENT = 2,
  GM_STATUS_CONFIG = 3,
  GM_STATUS_MISSING_ARTIFACT = 4,
  GM_STATUS_IO = 5,
  GM_STATUS_NUMERIC = 6,
  GM_STATUS_BUFFER_TOO_SMALL = 7,
  GM_STATUS_INTERNAL = 8,
} GmStatus;

/**
 * Configuration profile for [`gm_config_new`].
 */
typedef enum GmProfile {
  GM_PROFILE_FULL = 0,
  GM_PROFILE_REDUCED = 1,
  GM_PROFILE_SMOKE = 2,
} GmProfile;

/**
 * Which model of a `train` run to load.
 */
typedef enum GmModelKind {
  GM_MODEL_KIND_META = 0,
  GM_MODEL_KIND_BASELINE = 1,
} GmModelKind;

/**
 * Opaque run configuration.
 */
typedef struct GmConfig GmConfig;

/**
 * Opaque in-memory dataset.
 */
typedef struct GmDataset GmDataset;

/**
 * Opaque trained network with its target scaling.
 */
typedef struct GmModel GmModel;

/**
 * Slope-difference test between two regression lines.
 */
typedef struct GmSlopeTest {
  double slope_a;
  double slope_b;
  /**
   * `slope_b - slope_a`.
   */
  double interaction;
  double interaction_se;
  uint64_t dof;
  double p_value;
} GmSlopeTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *gm_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library on this thread.
 */
const char *gm_last_error(void);

/**
 * New configuration from a profile.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum GmStatus gm_config_new(enum GmProfile profile, struct GmConfig **out);

/**
 * Overrides one field by dotted path; `value` is a TOML literal or a bare
 * word, as with the command line's `--set`.
 *
 * # Safety
 * `cfg` must come from [`gm_config_new`]; strings must be NUL-terminated.
 */
enum GmStatus gm_config_set(struct GmConfig *cfg, const char *key, const char *value);

/**
 * Writes the configuration as TOML into `buf`. With a NULL or short
 * buffer, returns `BufferTooSmall` and stores the required size.
 *
 * # Safety
 * `buf` must hold `cap` bytes; `needed` may be NULL.
 */
enum GmStatus gm_config_to_toml(const struct GmConfig *cfg,
                                char *buf,
                                uintptr_t cap,
                                uintptr_t *needed);

/**
 * # Safety
 * `cfg` must come from [`gm_config_new`] or be NULL.
 */
void gm_config_free(struct GmConfig *cfg);

/**
 * Runs a command (`gen`, `train`, `benchmark`, `micro`, `analyze-gpa`,
 * `analyze-embed`, `analyze-gradnorm`, `analyze-slopes`, `report`) and
 * writes the run directory (or dataset directory for `gen`) into `buf`.
 *
 * # Safety
 * `cfg` must be valid; `buf` must hold `cap` bytes; `needed` may be NULL.
 */
enum GmStatus gm_run_command(const struct GmConfig *cfg,
                             const char *command,
                             char *buf,
                             uintptr_t cap,
                             uintptr_t *needed);

/**
 * Generates a dataset in memory.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum GmStatus gm_dataset_generate(uintptr_t n_objects,
                                  uintptr_t sequences_per_object,
                                  uintptr_t frames_per_sequence,
                                  uint64_t seed,
                                  struct GmDataset **out);

/**
 * Reads a dataset directory written by `gen` or [`gm_dataset_write`].
 *
 * # Safety
 * `dir` must be NUL-terminated; `out` must be valid.
 */
enum GmStatus gm_dataset_read(const char *dir, struct GmDataset **out);

/**
 * # Safety
 * `ds` must be valid; `dir` must be NUL-terminated.
 */
enum GmStatus gm_dataset_write(const struct GmDataset *ds, const char *dir);

/**
 * Number of sequences and total samples.
 *
 * # Safety
 * `ds` must be valid; outputs may be NULL.
 */
enum GmStatus gm_dataset_counts(const struct GmDataset *ds,
                                uintptr_t *sequences,
                                uintptr_t *samples);

/**
 * Copies one sample's network input (`INPUT_DIM` values) and hand target
 * (63 values, millimetres, wrist-aligned camera frame).
 *
 * # Safety
 * `ds` must be valid; `input` must hold `gm_input_dim()` values and
 * `target` 63.
 */
enum GmStatus gm_dataset_sample(const struct GmDataset *ds,
                                uintptr_t sequence,
                                uintptr_t frame,
                                double *input,
                                double *target);

/**
 * # Safety
 * `ds` must come from this library or be NULL.
 */
void gm_dataset_free(struct GmDataset *ds);

/**
 * Width of a network input row.
 */
uintptr_t gm_input_dim(void);

/**
 * Loads one model of a `train` run directory.
 *
 * # Safety
 * `run_dir` must be NUL-terminated; `out` must be valid.
 */
enum GmStatus gm_model_load(const char *run_dir, enum GmModelKind kind, struct GmModel **out);

/**
 * Output width in values per row.
 *
 * # Safety
 * `model` must be valid.
 */
enum GmStatus gm_model_output_dim(const struct GmModel *model, uintptr_t *out);

/**
 * Predicts `rows` samples. `inputs` is row-major `rows × gm_input_dim()`;
 * `out` receives `rows × output_dim` values in millimetres.
 *
 * # Safety
 * Buffers must hold the stated number of values.
 */
enum GmStatus gm_model_predict(const struct GmModel *model,
                               const double *inputs,
                               uintptr_t rows,
                               double *out,
                               uintptr_t out_len);

/**
 * Adapts a copy of `model` to a support set (targets in millimetres) with
 * the inner-loop settings it was trained with.
 *
 * # Safety
 * Buffers must hold `rows × input_dim` and `rows × output_dim` values;
 * `out` must be valid.
 */
enum GmStatus gm_model_adapt(const struct GmModel *model,
                             const double *inputs,
                             const double *targets,
                             uintptr_t rows,
                             struct GmModel **out);

/**
 * # Safety
 * `model` must come from this library or be NULL.
 */
void gm_model_free(struct GmModel *model);

/**
 * Interaction t-test of `slope_b - slope_a` for two regression lines.
 *
 * # Safety
 * Each array must hold the stated number of values; `out` must be valid.
 */
enum GmStatus gm_slope_difference_test(const double *xa,
                                       const double *ya,
                                       uintptr_t na,
                                       const double *xb,
                                       const double *yb,
                                       uintptr_t nb,
                                       struct GmSlopeTest *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRASPMETA_H */
