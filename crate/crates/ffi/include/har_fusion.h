#ifndef HAR_FUSION_H
#define HAR_FUSION_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum HfStatus {
  HF_STATUS_OK = 0,
  HF_STATUS_NULL_POINTER = 1,
  HF_STATUS_INVALID_ARGUMENT = 2,
  HF_STATUS_DIMENSION = 3,
  HF_STATUS_VALIDATION = 4,
  HF_STATUS_STATE = 5,
  HF_STATUS_CONFIG = 6,
  HF_STATUS_IO = 7,
  HF_STATUS_CHECKPOINT = 8,
  HF_STATUS_MODE = 9,
  // No output: for example a keypoint frame with too few confident joints.
  HF_STATUS_NO_RESULT = 10,
  // A panic was caught at the boundary.
  HF_STATUS_INTERNAL = 99,
} HfStatus;

typedef enum HfFusion {
  HF_FUSION_AVERAGE = 0,
  HF_FUSION_MAX = 1,
} HfFusion;

// Opaque trained stream model.
typedef struct HfModel HfModel;

// Summary metrics over one prediction set.
typedef struct HfMetrics {
  double accuracy;
  double macro_precision;
  double macro_recall;
  double macro_f1;
} HfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *hf_last_error(void);

// Loads a checkpoint manifest (`best.json` / `final.json`) into a new
// model in inference mode.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum HfStatus hf_model_load(const char *path, struct HfModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`hf_model_load`] and not be freed twice.
void hf_model_free(struct HfModel *model);

// Reports the input geometry and class count of a model. Any output
// pointer may be null.
//
// # Safety
// `model` must be a live handle; non-null outputs must be writable.
enum HfStatus hf_model_shape(const struct HfModel *model,
                             size_t *n_classes,
                             size_t *window_len,
                             size_t *features);

// Scores `n` windows laid out `[n x window_len x features]` into
// `scores` (`[n x n_classes]`, `scores_len` values).
//
// # Safety
// `x` must hold `n * window_len * features` values; `scores` must hold
// `scores_len` writable values.
enum HfStatus hf_model_predict(const struct HfModel *model,
                               const double *x,
                               size_t n,
                               double *scores,
                               size_t scores_len);

// Fuses the score rows of one sample (`n_streams` rows of `n_classes`
// probabilities, row-major) and writes the winning class.
//
// # Safety
// `scores` must hold `n_streams * n_classes` values; `class_out` writable.
enum HfStatus hf_fuse(const double *scores,
                      size_t n_streams,
                      size_t n_classes,
                      enum HfFusion method,
                      size_t *class_out);

// Accuracy and macro precision, recall and F1 of `n` predictions.
// `confusion`, if not null, receives `n_classes * n_classes` counts
// indexed by (true, predicted).
//
// # Safety
// `predictions` and `labels` must hold `n` values; `out` must be writable;
// a non-null `confusion` must hold `n_classes * n_classes` values.
enum HfStatus hf_evaluate(const size_t *predictions,
                          const size_t *labels,
                          size_t n,
                          size_t n_classes,
                          struct HfMetrics *out,
                          uint64_t *confusion);

// Number of sliding windows over `n` samples.
//
// # Safety
// `count_out` must be writable.
enum HfStatus hf_window_count(size_t n, size_t window_len, size_t overlap, size_t *count_out);

// Normalizes one person's 25 joints (`x, y, confidence` triples, 75
// values) into 50 model features. Returns `NoResult` when fewer than two
// joints are confident.
//
// # Safety
// `joints` must hold 75 values and `features` 50 writable values.
enum HfStatus hf_normalize_keypoints(const double *joints, double *features);

// Library version as a static NUL-terminated string.
const char *hf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAR_FUSION_H */
