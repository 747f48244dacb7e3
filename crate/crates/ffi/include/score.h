#ifndef SCORE_H
#define SCORE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call.
 */
typedef enum ScoreStatus {
  SCORE_STATUS_OK = 0,
  SCORE_STATUS_NULL_POINTER = 1,
  SCORE_STATUS_INVALID_UTF8 = 2,
  SCORE_STATUS_INVALID_ARGUMENT = 3,
  SCORE_STATUS_IO = 4,
  SCORE_STATUS_INVALID_DATA = 5,
  SCORE_STATUS_PANIC = 6,
} ScoreStatus;

/*
 A validated dataset.
 */
typedef struct ScoreDataset ScoreDataset;

/*
 Predictions collected item by item, scored as a whole.
 */
typedef struct ScoreMatrix ScoreMatrix;

/*
 Message for the last failed call on this thread, or NULL. Owned by the
 library and valid until the next failing call on the same thread.
 */
const char *score_last_error(void);

/*
 Library version as a static string.
 */
const char *score_version(void);

/*
 Releases a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void score_string_free(char *s);

/*
 Extracts the option letter after the last `best answer is`. `*out` is
 set to the letter, or NULL when extraction fails.

 # Safety
 `raw` must be a NUL-terminated string; `out` must be writable.
 */
enum ScoreStatus score_extract_mcq(const char *raw, size_t n_options, char **out);

/*
 Extracts the content of the last `\boxed{...}`. `*out` is NULL when
 extraction fails.

 # Safety
 `raw` must be a NUL-terminated string; `out` must be writable.
 */
enum ScoreStatus score_extract_boxed(const char *raw, char **out);

/*
 Canonical form of a math answer.

 # Safety
 `answer` must be a NUL-terminated string; `out` must be writable.
 */
enum ScoreStatus score_normalize_math(const char *answer, char **out);

/*
 Whether two math answers are equivalent.

 # Safety
 `a` and `b` must be NUL-terminated strings; `out` must be writable.
 */
enum ScoreStatus score_sym_equiv(const char *a, const char *b, bool *out);

/*
 Creates an empty matrix for `family` (`mmlu-pro`, `agieval` or `math`).

 # Safety
 `family_name` must be a NUL-terminated string; `out` must be writable.
 */
enum ScoreStatus score_matrix_new(const char *family_name, struct ScoreMatrix **out);

/*
 Adds one item. `answers` holds `n_answers` predictions, one per run;
 a NULL entry is a failed extraction. Multiple-choice answers and gold are
 letters (`"A"`, `"B"`, ...), math ones are answer strings. Every item
 must carry the same number of answers.

 # Safety
 `matrix` must be a live handle; string arguments must be NUL-terminated;
 `answers` must point to `n_answers` readable pointers.
 */
enum ScoreStatus score_matrix_push_item(struct ScoreMatrix *matrix,
                                        const char *item_id,
                                        const char *category,
                                        const char *gold,
                                        const char *const *answers,
                                        size_t n_answers);

/*
 Number of items pushed so far; 0 for NULL.

 # Safety
 `matrix` must be NULL or a live handle.
 */
size_t score_matrix_len(const struct ScoreMatrix *matrix);

/*
 Consistency rate in `[0, 100]`.

 # Safety
 `matrix` must be a live handle; `out` must be writable.
 */
enum ScoreStatus score_matrix_consistency_rate(const struct ScoreMatrix *matrix,
                                               bool failed_pairs_similar,
                                               double *out);

/*
 Percentage of unanimous items, and of items with at least `threshold`
 mutually similar answers.

 # Safety
 `matrix` must be a live handle; both out pointers must be writable.
 */
enum ScoreStatus score_matrix_agreement(const struct ScoreMatrix *matrix,
                                        size_t threshold,
                                        double *out_unanimity,
                                        double *out_cluster);

/*
 Releases a matrix. NULL is ignored.

 # Safety
 `matrix` must come from [`score_matrix_new`] and not have been freed.
 */
void score_matrix_free(struct ScoreMatrix *matrix);

/*
 Loads and validates a JSON Lines dataset.

 # Safety
 `path` and `family_name` must be NUL-terminated strings; `out` must be
 writable.
 */
enum ScoreStatus score_dataset_load(const char *path,
                                    const char *family_name,
                                    bool lenient,
                                    struct ScoreDataset **out);

/*
 Number of items; 0 for NULL.

 # Safety
 `dataset` must be NULL or a live handle.
 */
size_t score_dataset_len(const struct ScoreDataset *dataset);

/*
 Content digest of the dataset, as hex.

 # Safety
 `dataset` must be a live handle; `out` must be writable.
 */
enum ScoreStatus score_dataset_digest(const struct ScoreDataset *dataset, char **out);

/*
 Releases a dataset. NULL is ignored.

 # Safety
 `dataset` must come from [`score_dataset_load`] and not have been freed.
 */
void score_dataset_free(struct ScoreDataset *dataset);

#endif  /* SCORE_H */
