#ifndef QUALITAGGER_H
#define QUALITAGGER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Number of quality attributes; score arrays have this length.
 */
#define QT_QUALITY_COUNT 7

/*
 Result codes.
 */
typedef enum QtStatus {
  QT_OK = 0,
  QT_NULL_ARGUMENT = 1,
  QT_INVALID_UTF8 = 2,
  QT_INVALID_ARGUMENT = 3,
  QT_IO = 4,
  QT_FORMAT = 5,
  QT_UNDEFINED = 6,
  QT_PANIC = 7,
} QtStatus;

/*
 Seven binary models under a confidence threshold.
 */
typedef struct QtEnsemble QtEnsemble;

/*
 A trained binary model.
 */
typedef struct QtModel QtModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or null. Valid until the
 next failing call on the same thread.
 */
const char *qt_last_error(void);

/*
 Library version as a static string.
 */
const char *qt_version(void);

/*
 Canonical name of quality `index` (0..7), or null when out of range.
 */
const char *qt_quality_name(size_t index);

/*
 Loads a model file.

 # Safety
 `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum QtStatus qt_model_load(const char *path, struct QtModel **out);

/*
 Loads a model from the bytes of a model file.

 # Safety
 `bytes` must point to `len` readable bytes and `out` be a valid pointer.
 */
enum QtStatus qt_model_from_bytes(const uint8_t *bytes, size_t len, struct QtModel **out);

/*
 Positive-class probability of `text`.

 # Safety
 `model` must come from a `qt_model_*` constructor, `text` be a
 nul-terminated string and `out` a valid pointer.
 */
enum QtStatus qt_model_score(const struct QtModel *model, const char *text, double *out);

/*
 Index of the model's quality, or -1 for a null model.

 # Safety
 `model` must be null or come from a `qt_model_*` constructor.
 */
int32_t qt_model_quality(const struct QtModel *model);

/*
 Releases a model; null is ignored.

 # Safety
 `model` must be null or an unreleased handle.
 */
void qt_model_free(struct QtModel *model);

/*
 Loads `{quality}.qtag` for all seven qualities from `dir`.

 # Safety
 `dir` must be a nul-terminated string and `out` a valid pointer.
 */
enum QtStatus qt_ensemble_load_dir(const char *dir, double threshold, struct QtEnsemble **out);

/*
 Tags one issue. Writes seven scores in canonical order to `scores` and
 the predicted set as a bitmask (bit i for quality i) to `predicted`.

 # Safety
 `ensemble` must come from `qt_ensemble_load_dir`, `title` and `body` be
 nul-terminated strings, `scores` point to 7 writable doubles and
 `predicted` be a valid pointer.
 */
enum QtStatus qt_ensemble_tag(const struct QtEnsemble *ensemble,
                              const char *title,
                              const char *body,
                              double *scores,
                              uint8_t *predicted);

/*
 Releases an ensemble; null is ignored.

 # Safety
 `ensemble` must be null or an unreleased handle.
 */
void qt_ensemble_free(struct QtEnsemble *ensemble);

/*
 Matthews correlation coefficient of a confusion matrix; 0 when any
 marginal is zero.

 # Safety
 `out` must be a valid pointer.
 */
enum QtStatus qt_mcc(uint64_t tp, uint64_t fp, uint64_t tn, uint64_t fn_, double *out);

/*
 Area under the ROC curve; `truths` holds 0/1 per score.

 # Safety
 `scores` and `truths` must point to `len` readable elements and `out` be
 a valid pointer.
 */
enum QtStatus qt_auc_roc(const double *scores, const uint8_t *truths, size_t len, double *out);

/*
 Two-sided McNemar p-value from the discordant counts.

 # Safety
 `out` must be a valid pointer.
 */
enum QtStatus qt_mcnemar(uint64_t b, uint64_t c, double *out);

/*
 Cliff's delta of `xs` against `ys`. `magnitude` receives 0 negligible,
 1 small, 2 medium or 3 large.

 # Safety
 `xs` and `ys` must point to `nx` and `ny` readable doubles; `delta` and
 `magnitude` must be valid pointers.
 */
enum QtStatus qt_cliffs_delta(const double *xs,
                              size_t nx,
                              const double *ys,
                              size_t ny,
                              double *delta,
                              int32_t *magnitude);

/*
 Runs the text-cleaning pipeline. The result is released with
 `qt_string_free`.

 # Safety
 `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum QtStatus qt_clean_text(const char *text, char **out);

/*
 Releases a string returned by this library; null is ignored.

 # Safety
 `s` must be null or a string from this library not yet released.
 */
void qt_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUALITAGGER_H */
