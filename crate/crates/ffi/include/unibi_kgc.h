#ifndef UNIBI_KGC_H
#define UNIBI_KGC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum UnibiStatus {
  UNIBI_STATUS_OK = 0,
  UNIBI_STATUS_NULL_POINTER = 1,
  UNIBI_STATUS_INVALID_ARGUMENT = 2,
  UNIBI_STATUS_IO = 3,
  UNIBI_STATUS_BAD_CHECKPOINT = 4,
  UNIBI_STATUS_MISMATCH = 5,
  UNIBI_STATUS_NUMERIC = 6,
  UNIBI_STATUS_BUFFER_TOO_SMALL = 7,
  UNIBI_STATUS_PANIC = 8,
} UnibiStatus;

typedef struct UnibiDataset UnibiDataset;

/**
 * Model parameters plus the vocabulary hash they were trained against
 * (empty for freshly initialized models).
 */
typedef struct UnibiModel UnibiModel;

typedef struct UnibiMetrics {
  double mrr;
  double hits1;
  double hits3;
  double hits10;
  size_t n_queries;
} UnibiMetrics;

/**
 * Copy the calling thread's last error message, NUL-terminated and
 * truncated to `cap` bytes. Returns the full message length without NUL.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t unibi_last_error(char *buf, size_t cap);

/**
 * Freshly initialized model. `kind` is one of `unibi-o2`, `unibi-o3`, `cp`,
 * `complex`, `rescal`.
 *
 * # Safety
 * `kind` must be a NUL-terminated string and `out` a valid pointer.
 */
enum UnibiStatus unibi_model_new(const char *kind,
                                 size_t dim,
                                 bool entity_constraint,
                                 bool relation_constraint,
                                 size_t n_entities,
                                 size_t n_relations,
                                 uint64_t seed,
                                 struct UnibiModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, freed at most once.
 */
void unibi_model_free(struct UnibiModel *model);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum UnibiStatus unibi_model_load(const char *path, struct UnibiModel **out);

/**
 * Refuses to replace an existing file unless `force` is set.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum UnibiStatus unibi_model_save(const struct UnibiModel *model, const char *path, bool force);

/**
 * # Safety
 * `model` must be a live handle; output pointers may be null.
 */
enum UnibiStatus unibi_model_shape(const struct UnibiModel *model,
                                   size_t *n_entities,
                                   size_t *n_relations,
                                   size_t *dim);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum UnibiStatus unibi_score(const struct UnibiModel *model,
                             size_t head,
                             size_t relation,
                             size_t tail,
                             double *out);

/**
 * Scores of `(head, relation, e)` for every entity `e`; `len` must be at
 * least the entity count.
 *
 * # Safety
 * `model` must be a live handle and `out` point to `len` writable doubles.
 */
enum UnibiStatus unibi_score_all_tails(const struct UnibiModel *model,
                                       size_t head,
                                       size_t relation,
                                       double *out,
                                       size_t len);

/**
 * Singular values of a relation's effective matrix, descending; `len` must
 * be at least the dimension.
 *
 * # Safety
 * `model` must be a live handle and `out` point to `len` writable doubles.
 */
enum UnibiStatus unibi_singular_spectrum(const struct UnibiModel *model,
                                         size_t relation,
                                         double *out,
                                         size_t len);

/**
 * Dense effective matrix in row-major order; `len` must be at least `dim²`.
 *
 * # Safety
 * `model` must be a live handle and `out` point to `len` writable doubles.
 */
enum UnibiStatus unibi_effective_matrix(const struct UnibiModel *model,
                                        size_t relation,
                                        double *out,
                                        size_t len);

/**
 * # Safety
 * `sigma` must point to `len` readable doubles and `out` be valid.
 */
enum UnibiStatus unibi_imbalance_degree(const double *sigma, size_t len, double *out);

/**
 * Load `train.txt`, `valid.txt` and `test.txt` from `dir`, optionally adding
 * reciprocal relations.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum UnibiStatus unibi_dataset_load(const char *dir, bool reciprocal, struct UnibiDataset **out);

/**
 * # Safety
 * `dataset` must be null or a handle from this library, freed at most once.
 */
void unibi_dataset_free(struct UnibiDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle; output pointers may be null.
 */
enum UnibiStatus unibi_dataset_counts(const struct UnibiDataset *dataset,
                                      size_t *n_entities,
                                      size_t *n_relations,
                                      size_t *n_train,
                                      size_t *n_valid,
                                      size_t *n_test);

/**
 * Filtered tail-prediction metrics on one split: 0 train, 1 valid, 2 test.
 * Models loaded from a checkpoint must match the dataset vocabulary.
 *
 * # Safety
 * Both handles must be live and `out` a valid pointer.
 */
enum UnibiStatus unibi_evaluate(const struct UnibiModel *model,
                                const struct UnibiDataset *dataset,
                                uint32_t split,
                                struct UnibiMetrics *out);

#endif  /* UNIBI_KGC_H */
