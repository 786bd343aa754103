#ifndef TAGMETRIC_H
#define TAGMETRIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  TM_STATUS_OK = 0,
  TM_STATUS_NULL_POINTER = 1,
  TM_STATUS_INVALID_ARGUMENT = 2,
  TM_STATUS_IO = 3,
  TM_STATUS_PARSE = 4,
  TM_STATUS_SHAPE = 5,
  TM_STATUS_DOMAIN = 6,
  TM_STATUS_NUMERICAL = 7,
  TM_STATUS_OUT_OF_VOCABULARY = 8,
  TM_STATUS_BUFFER_TOO_SMALL = 9,
  TM_STATUS_INTERNAL = 10,
} TmStatus;

typedef struct TmIndex TmIndex;

/**
 * Tag and song branches loaded from a checkpoint.
 */
typedef struct TmModel TmModel;

typedef struct TmWordTable TmWordTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *tm_last_error_message(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
TmStatus tm_word_table_load(const char *path, TmWordTable **out);

/**
 * # Safety
 * `table` must come from [`tm_word_table_load`] and not be used afterwards.
 */
void tm_word_table_free(TmWordTable *table);

/**
 * # Safety
 * `table` must be a live handle and `out` a valid pointer.
 */
TmStatus tm_word_table_dim(const TmWordTable *table, uintptr_t *out);

/**
 * Resolves a free-text tag to its word vector.
 *
 * # Safety
 * `table` must be live, `tag` NUL-terminated, `out` writable for `out_len`
 * values.
 */
TmStatus tm_tag_to_vector(const TmWordTable *table,
                          const char *tag,
                          double *out,
                          uintptr_t out_len);

/**
 * Loads the `tag` and `song` branches of a checkpoint.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` a valid pointer.
 */
TmStatus tm_model_load(const char *path, TmModel **out);

/**
 * # Safety
 * `model` must come from [`tm_model_load`] and not be used afterwards.
 */
void tm_model_free(TmModel *model);

/**
 * Embedding width of the model; output buffers need this many values.
 *
 * # Safety
 * `model` must be live and `out` valid.
 */
TmStatus tm_model_output_dim(const TmModel *model, uintptr_t *out);

/**
 * Embeds a tag through the word table and the tag branch.
 *
 * # Safety
 * Handles must be live, `tag` NUL-terminated, `out` writable for `out_len`.
 */
TmStatus tm_model_embed_tag(const TmModel *model,
                            const TmWordTable *table,
                            const char *tag,
                            double *out,
                            uintptr_t out_len);

/**
 * Embeds one song input vector through the song branch.
 *
 * # Safety
 * `input` readable for `input_len`, `out` writable for `out_len`.
 */
TmStatus tm_model_embed_song(const TmModel *model,
                             const double *input,
                             uintptr_t input_len,
                             double *out,
                             uintptr_t out_len);

/**
 * # Safety
 * `u` and `v` readable for `len` values, `out` valid.
 */
TmStatus tm_cosine_distance(const double *u, const double *v, uintptr_t len, double *out);

/**
 * Embeds every song of a vector file (`song_id<TAB>v1 ... vD`) with the
 * model's song branch and indexes the results.
 *
 * # Safety
 * `model` live, `path` NUL-terminated, `out` valid.
 */
TmStatus tm_index_build(const TmModel *model, const char *path, TmIndex **out);

/**
 * # Safety
 * `index` must come from [`tm_index_build`] and not be used afterwards.
 */
void tm_index_free(TmIndex *index);

/**
 * # Safety
 * `index` live, `out` valid.
 */
TmStatus tm_index_len(const TmIndex *index, uintptr_t *out);

/**
 * Song id at `position`; borrowed from the index and valid while it lives.
 *
 * # Safety
 * `index` live, `out` valid.
 */
TmStatus tm_index_song_id(const TmIndex *index, uintptr_t position, const char **out);

/**
 * Top-`k` songs nearest to `query` (ascending cosine distance, ties by
 * id). Writes index positions and distances; `out_count` receives the
 * number written, `min(k, len)`.
 *
 * # Safety
 * `query` readable for `query_len`; `out_positions` and `out_distances`
 * writable for `k` values; `out_count` valid.
 */
TmStatus tm_index_query(const TmIndex *index,
                        const double *query,
                        uintptr_t query_len,
                        uintptr_t k,
                        uintptr_t *out_positions,
                        double *out_distances,
                        uintptr_t *out_count);

/**
 * Average precision of a ranked relevance list (nonzero bytes are
 * relevant) against `n_relevant_total` relevant items.
 *
 * # Safety
 * `relevance` readable for `len` bytes, `out` valid.
 */
TmStatus tm_average_precision(const uint8_t *relevance,
                              uintptr_t len,
                              uintptr_t n_relevant_total,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAGMETRIC_H */
