#ifndef DISTEMBED_H
#define DISTEMBED_H

/* Generated by cbindgen; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum DeStatus {
  DE_STATUS_OK = 0,
  DE_STATUS_NULL_POINTER = 1,
  DE_STATUS_INVALID_INPUT = 2,
  DE_STATUS_NUMERICAL = 3,
  DE_STATUS_PANIC = 4,
} DeStatus;

typedef enum DeInit {
  DE_INIT_IDENTITY = 0,
  DE_INIT_TREE_SYNC = 1,
  DE_INIT_SPECTRAL = 2,
  DE_INIT_GEODESIC_MDS = 3,
} DeInit;

typedef enum DeStop {
  DE_STOP_CONVERGED = 0,
  DE_STOP_STAGNATED = 1,
  DE_STOP_MAX_ITERATIONS = 2,
} DeStop;

/**
 * Opaque embedding result.
 */
typedef struct DeEmbedding DeEmbedding;

/**
 * Opaque distance graph.
 */
typedef struct DeGraph DeGraph;

/**
 * Embedding parameters; obtain defaults from [`de_embed_options_default`].
 */
typedef struct DeEmbedOptions {
  size_t dim;
  double tol;
  double var_tol;
  size_t maxit;
  double drop_tol;
  double shift;
  double pcg_tol;
  /**
   * Zero selects the default cap.
   */
  size_t pcg_maxit;
  enum DeInit init;
  size_t landmarks;
  /**
   * Zero disables acceleration.
   */
  size_t accel_depth;
  uint64_t seed;
  bool deterministic;
} DeEmbedOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *de_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *de_version(void);

/**
 * Builds a symmetrized graph from `m` weighted edges on `n` vertices.
 *
 * # Safety
 * `src`, `dst` and `weight` must each point to `m` readable elements and
 * `out` must be writable.
 */
enum DeStatus de_graph_from_edges(size_t n,
                                  const size_t *src,
                                  const size_t *dst,
                                  const double *weight,
                                  size_t m,
                                  struct DeGraph **out);

/**
 * Builds the max-symmetrized `k`-nearest-neighbor graph of `n` points in
 * `d` dimensions, stored row-major.
 *
 * # Safety
 * `points` must point to `n * d` readable values and `out` must be writable.
 */
enum DeStatus de_graph_from_points(const double *points,
                                   size_t n,
                                   size_t d,
                                   size_t k,
                                   struct DeGraph **out);

/**
 * # Safety
 * `g` must be null or a live handle from this library.
 */
size_t de_graph_n_vertices(const struct DeGraph *g);

/**
 * Undirected edge count.
 *
 * # Safety
 * `g` must be null or a live handle from this library.
 */
size_t de_graph_n_edges(const struct DeGraph *g);

/**
 * # Safety
 * `g` must be null or a handle from this library not yet freed.
 */
void de_graph_free(struct DeGraph *g);

struct DeEmbedOptions de_embed_options_default(size_t dim);

/**
 * Embeds `g`; on success `*out` receives a handle to free with
 * [`de_embedding_free`].
 *
 * # Safety
 * `g` must be a live graph handle, `opts` readable and `out` writable.
 */
enum DeStatus de_embed(const struct DeGraph *g,
                       const struct DeEmbedOptions *opts,
                       struct DeEmbedding **out);

/**
 * # Safety
 * `e` must be null or a live handle from this library.
 */
size_t de_embedding_rows(const struct DeEmbedding *e);

/**
 * # Safety
 * `e` must be null or a live handle from this library.
 */
size_t de_embedding_cols(const struct DeEmbedding *e);

/**
 * Copies the coordinates row-major into `buf`, which must hold
 * `rows * cols` values.
 *
 * # Safety
 * `e` must be a live handle and `buf` must point to `len` writable values.
 */
enum DeStatus de_embedding_copy_coords(const struct DeEmbedding *e, double *buf, size_t len);

/**
 * Iterations performed.
 *
 * # Safety
 * `e` must be null or a live handle from this library.
 */
size_t de_embedding_iterations(const struct DeEmbedding *e);

/**
 * Objective after the last solve, NaN for a null handle.
 *
 * # Safety
 * `e` must be null or a live handle from this library.
 */
double de_embedding_objective(const struct DeEmbedding *e);

/**
 * Convergence error of the last iteration, NaN for a null handle.
 *
 * # Safety
 * `e` must be null or a live handle from this library.
 */
double de_embedding_error(const struct DeEmbedding *e);

/**
 * # Safety
 * `e` must be a live handle and `out` writable.
 */
enum DeStatus de_embedding_stop(const struct DeEmbedding *e, enum DeStop *out);

/**
 * # Safety
 * `e` must be null or a handle from this library not yet freed.
 */
void de_embedding_free(struct DeEmbedding *e);

/**
 * TwoNN intrinsic dimension of `n` row-major points in `d` dimensions.
 *
 * # Safety
 * `points` must point to `n * d` readable values and `out` must be writable.
 */
enum DeStatus de_twonn_dimension(const double *points, size_t n, size_t d, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISTEMBED_H */
