#ifndef VL_H
#define VL_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every call.
 */
typedef enum VlStatus {
  VL_STATUS_OK = 0,
  VL_STATUS_BAD_REQUEST = 1,
  VL_STATUS_NOT_FOUND = 2,
  VL_STATUS_DIMENSION_MISMATCH = 3,
  VL_STATUS_DEGENERATE_QUERY = 4,
  VL_STATUS_PROVIDER_UNAVAILABLE = 5,
  VL_STATUS_INTERNAL = 6,
  /**
   * A required pointer argument was NULL.
   */
  VL_STATUS_NULL_ARGUMENT = 7,
  /**
   * A string argument was not valid UTF-8.
   */
  VL_STATUS_INVALID_UTF8 = 8,
  VL_STATUS_PANIC = 9,
} VlStatus;

/**
 * Opaque engine handle.
 */
typedef struct VlEngine VlEngine;

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *vl_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void vl_string_free(char *s);

/**
 * Creates an engine with the deterministic mock embedder.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum VlStatus vl_engine_new(size_t dimension, uint64_t seed, struct VlEngine **out);

/**
 * Creates an engine from a TOML settings file (NULL for defaults), with
 * `VL_*` environment overrides applied.
 *
 * # Safety
 * `config_path` must be NULL or a NUL-terminated string; `out` must be valid.
 */
enum VlStatus vl_engine_from_config(const char *config_path, struct VlEngine **out);

/**
 * Destroys an engine. NULL is ignored.
 *
 * # Safety
 * `engine` must come from `vl_engine_new`/`vl_engine_from_config` and not
 * have been freed.
 */
void vl_engine_free(struct VlEngine *engine);

/**
 * Number of indexed documents; 0 for a NULL handle.
 *
 * # Safety
 * `engine` must be NULL or a live handle.
 */
size_t vl_engine_count(const struct VlEngine *engine);

/**
 * Inserts or replaces one document given as JSON (`id`, `title`,
 * `vector`, optional `media_ref` and `metadata`).
 *
 * # Safety
 * `engine` must be a live handle and `document_json` a NUL-terminated string.
 */
enum VlStatus vl_engine_upsert_json(const struct VlEngine *engine, const char *document_json);

/**
 * Ingests a JSONL corpus; `out_report` receives the ingestion report JSON.
 *
 * # Safety
 * `engine` must be a live handle, `path` a NUL-terminated string and
 * `out_report` valid.
 */
enum VlStatus vl_engine_ingest_jsonl(const struct VlEngine *engine,
                                     const char *path,
                                     bool embed_missing,
                                     char **out_report);

/**
 * Runs a search. `query_json` is a query spec; the response matches the
 * service's search response.
 *
 * # Safety
 * `engine` must be a live handle, `query_json` a NUL-terminated string and
 * `out_json` valid.
 */
enum VlStatus vl_engine_search_json(const struct VlEngine *engine,
                                    const char *query_json,
                                    bool debug,
                                    char **out_json);

/**
 * Recommends documents for `{"seed_ids": [...], "k": n}`.
 *
 * # Safety
 * As for [`vl_engine_search_json`].
 */
enum VlStatus vl_engine_recommend_json(const struct VlEngine *engine,
                                       const char *request_json,
                                       char **out_json);

/**
 * Runs a recommendation walk for a walk request and returns the tree.
 *
 * # Safety
 * As for [`vl_engine_search_json`].
 */
enum VlStatus vl_engine_walk_json(const struct VlEngine *engine,
                                  const char *request_json,
                                  char **out_json);

/**
 * Writes the index snapshot (JSONL, sorted by id) to `path`.
 *
 * # Safety
 * `engine` must be a live handle and `path` a NUL-terminated string.
 */
enum VlStatus vl_engine_save_snapshot(const struct VlEngine *engine, const char *path);

/**
 * Replaces the index with the snapshot at `path`. On failure the index
 * is unchanged.
 *
 * # Safety
 * `engine` must be a live handle and `path` a NUL-terminated string.
 */
enum VlStatus vl_engine_restore_snapshot(const struct VlEngine *engine, const char *path);

/**
 * Normalizes `v` into `out`.
 *
 * # Safety
 * `v` and `out` must each point to `dim` doubles.
 */
enum VlStatus vl_normalize(const double *v, size_t dim, double *out);

/**
 * Spherical interpolation from `a` (t = 0) to `b` (t = 1).
 *
 * # Safety
 * `a`, `b` and `out` must each point to `dim` doubles.
 */
enum VlStatus vl_slerp(const double *a, const double *b, size_t dim, double t, double *out);

/**
 * Normalized weighted sum of `n` vectors; weights may be negative.
 *
 * # Safety
 * `vectors` must point to `n * dim` doubles, `weights` to `n`, `out` to `dim`.
 */
enum VlStatus vl_lerp_combine(const double *vectors,
                              const double *weights,
                              size_t n,
                              size_t dim,
                              double *out);

/**
 * Pairwise weighted slerp reduction of `n` vectors; weights must be positive.
 *
 * # Safety
 * As for [`vl_lerp_combine`].
 */
enum VlStatus vl_hierarchical_slerp(const double *vectors,
                                    const double *weights,
                                    size_t n,
                                    size_t dim,
                                    double *out);

#endif  /* VL_H */
