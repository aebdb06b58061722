#ifndef CVRANK_H
#define CVRANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CvrStatus {
  CVR_STATUS_OK = 0,
  CVR_STATUS_NULL_POINTER = 1,
  CVR_STATUS_INVALID_UTF8 = 2,
  CVR_STATUS_MALFORMED_FEN = 3,
  CVR_STATUS_ILLEGAL_POSITION = 4,
  CVR_STATUS_IO = 5,
  CVR_STATUS_DATA = 6,
  /**
   * The databases are too small for the configured sample sizes.
   */
  CVR_STATUS_METHOD = 7,
  CVR_STATUS_INVALID_ARGUMENT = 8,
  CVR_STATUS_PANIC = 9,
} CvrStatus;

/**
 * Opaque ranking engine over a liked and a disliked database.
 */
typedef struct CvrEngine CvrEngine;

/**
 * Result of a two-tailed Welch t-test.
 */
typedef struct CvrTTest {
  double t;
  double df;
  double p;
  bool significant;
} CvrTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * success. Valid until the next cvr_* call on the same thread.
 */
const char *cvr_last_error_message(void);

/**
 * Check that `fen` is a well-formed, legal position.
 *
 * # Safety
 * `fen` must be a valid NUL-terminated string.
 */
enum CvrStatus cvr_fen_validate(const char *fen);

/**
 * Change value between two positions, in percent of the 128-byte buffer.
 *
 * # Safety
 * `a` and `b` must be valid NUL-terminated strings; `out` must be writable.
 */
enum CvrStatus cvr_change_value(const char *a, const char *b, double *out);

/**
 * Two-tailed Welch t-test of `a` against `b`.
 *
 * # Safety
 * `a` and `b` must point to `na` and `nb` doubles; `out` must be writable.
 */
enum CvrStatus cvr_welch_ttest(const double *a,
                               size_t na,
                               const double *b,
                               size_t nb,
                               double alpha,
                               struct CvrTTest *out);

/**
 * Build an engine from a store directory written by `cvrank ingest`.
 *
 * # Safety
 * `dir` must be a valid NUL-terminated string; `out` must be writable.
 */
enum CvrStatus cvr_engine_from_store(const char *dir, uint64_t seed, struct CvrEngine **out);

/**
 * Build an engine from two newline-separated FEN lists, oldest first.
 *
 * # Safety
 * Both lists must be valid NUL-terminated strings; `out` must be writable.
 */
enum CvrStatus cvr_engine_from_fens(const char *liked,
                                    const char *disliked,
                                    uint64_t seed,
                                    struct CvrEngine **out);

/**
 * Number of cycles each score has.
 *
 * # Safety
 * `engine` must be null or a live handle.
 */
size_t cvr_engine_cycles(const struct CvrEngine *engine);

/**
 * Score `fen` as candidate number `ordinal` of a collection; the result
 * equals the CLI's score for the same position, seed and ordinal. Up to
 * `rp_cap` per-cycle rank percentages go to `rp_out` (may be null when
 * `rp_cap` is 0). The average goes to `arp_out`.
 *
 * # Safety
 * `engine` must be a live handle, `fen` a valid string, `rp_out` valid for
 * `rp_cap` writes, `arp_out` writable.
 */
enum CvrStatus cvr_engine_score(const struct CvrEngine *engine,
                                const char *fen,
                                uint64_t ordinal,
                                double *rp_out,
                                size_t rp_cap,
                                double *arp_out);

/**
 * Release an engine. Null is ignored.
 *
 * # Safety
 * `engine` must be null or a handle not yet freed.
 */
void cvr_engine_free(struct CvrEngine *engine);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CVRANK_H */
