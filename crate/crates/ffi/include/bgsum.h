#ifndef BGSUM_H
#define BGSUM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum BgsumStatus {
  BGSUM_STATUS_OK = 0,
  BGSUM_STATUS_NULL_ARGUMENT = 1,
  BGSUM_STATUS_INVALID_UTF8 = 2,
  BGSUM_STATUS_IO = 3,
  BGSUM_STATUS_CHECKPOINT = 4,
  BGSUM_STATUS_MALFORMED_RECORD = 5,
  BGSUM_STATUS_MISSING_SECTION = 6,
  BGSUM_STATUS_AMBIGUOUS_SECTIONS = 7,
  BGSUM_STATUS_EMPTY_FINDINGS = 8,
  BGSUM_STATUS_EMPTY_INPUT = 9,
  BGSUM_STATUS_UNKNOWN_METHOD = 10,
  BGSUM_STATUS_INVALID_ARGUMENT = 11,
  BGSUM_STATUS_NUMERIC = 12,
  BGSUM_STATUS_PANIC = 13,
  BGSUM_STATUS_OTHER = 14,
} BgsumStatus;

/**
 * Opaque handle to a loaded model.
 */
typedef struct BgsumModel BgsumModel;

/**
 * ROUGE precision, recall and F1, each in [0, 1].
 */
typedef struct BgsumRouge {
  double rouge1_precision;
  double rouge1_recall;
  double rouge1_f1;
  double rouge2_precision;
  double rouge2_recall;
  double rouge2_f1;
  double rougel_precision;
  double rougel_recall;
  double rougel_f1;
} BgsumRouge;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a checkpoint file. On success `*out` owns a new model handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BgsumStatus bgsum_model_load(const char *path, struct BgsumModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`bgsum_model_load`] and not be used afterwards.
 */
void bgsum_model_free(struct BgsumModel *model);

/**
 * Size of the model's base vocabulary, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t bgsum_model_vocab_size(const struct BgsumModel *model);

/**
 * Summarizes one report given as a JSON object with `id`, `body_part`,
 * `background`, `findings` and `impression` (the impression may be any
 * placeholder). A `beam` or `max_len` of 0 selects the default. On success
 * `*out` owns the summary string.
 *
 * # Safety
 * `model` must be a live handle, `report_json` NUL-terminated and `out`
 * valid.
 */
enum BgsumStatus bgsum_summarize(const struct BgsumModel *model,
                                 const char *report_json,
                                 uint32_t beam,
                                 uint32_t max_len,
                                 char **out);

/**
 * ROUGE-1, ROUGE-2 and ROUGE-L of two texts after the corpus tokenizer.
 *
 * # Safety
 * Both strings must be NUL-terminated and `out` valid.
 */
enum BgsumStatus bgsum_rouge(const char *candidate, const char *reference, struct BgsumRouge *out);

/**
 * Extractive summary of a findings text: `method` is "lexrank" or "lsa",
 * `n` the number of sentences. On success `*out` owns the summary string.
 *
 * # Safety
 * Strings must be NUL-terminated and `out` valid.
 */
enum BgsumStatus bgsum_baseline(const char *method, const char *findings, uint32_t n, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void bgsum_string_free(char *s);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *bgsum_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BGSUM_H */
