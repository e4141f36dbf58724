#ifndef WCNKIT_H
#define WCNKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Option order inside a flattened bin.
 */
typedef enum WcnOrder {
  /**
   * Order in which the options first appear in the lattice.
   */
  WCN_ORDER_LATTICE = 0,
  /**
   * Highest posterior first.
   */
  WCN_ORDER_POSTERIOR = 1,
} WcnOrder;

/**
 * Result code of every fallible call.
 */
typedef enum WcnStatus {
  WCN_STATUS_OK = 0,
  WCN_STATUS_NULL_ARGUMENT = 1,
  WCN_STATUS_INVALID_UTF8 = 2,
  WCN_STATUS_PARSE_ERROR = 3,
  WCN_STATUS_INVALID_ARGUMENT = 4,
  WCN_STATUS_COMPUTE_ERROR = 5,
  WCN_STATUS_PANIC = 6,
} WcnStatus;

/**
 * Opaque parsed lattice.
 */
typedef struct WcnLattice WcnLattice;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses an SLF lattice. On success `*out` owns a new handle.
 *
 * # Safety
 * `slf` must be a NUL-terminated string and `out` a writable pointer.
 */
enum WcnStatus wcn_lattice_parse(const char *slf, struct WcnLattice **out);

/**
 * Releases a lattice. Null is ignored.
 *
 * # Safety
 * `lat` must come from [`wcn_lattice_parse`] and not be used afterwards.
 */
void wcn_lattice_free(struct WcnLattice *lat);

/**
 * # Safety
 * `lat` must be a live handle and `out` writable.
 */
enum WcnStatus wcn_lattice_num_arcs(const struct WcnLattice *lat, size_t *out);

/**
 * Flattens the lattice's confusion network into one line of text.
 * `separator` is `'|'` or `'/'`; options below `threshold` are dropped.
 *
 * # Safety
 * `lat` must be a live handle and `out` writable. Free `*out` with
 * [`wcn_string_free`].
 */
enum WcnStatus wcn_lattice_render_wcn(const struct WcnLattice *lat,
                                      char separator,
                                      double threshold,
                                      enum WcnOrder order,
                                      double acoustic_scale,
                                      double lm_scale,
                                      char **out);

/**
 * Highest-scoring path. Writes its words, space-separated, to `*words` and
 * its combined log weight to `*score` when `score` is not null.
 *
 * # Safety
 * `lat` must be a live handle, `words` writable, `score` writable or null.
 */
enum WcnStatus wcn_lattice_best_path(const struct WcnLattice *lat,
                                     double acoustic_scale,
                                     double lm_scale,
                                     char **words,
                                     double *score);

/**
 * Word error rate in percent between whitespace-tokenized strings.
 * An empty reference is an invalid argument.
 *
 * # Safety
 * `hyp` and `reference` must be NUL-terminated, `out` writable.
 */
enum WcnStatus wcn_wer(const char *hyp, const char *reference, double *out);

/**
 * Unigram F1 between a prediction and one gold answer. `raw` nonzero skips
 * answer normalization.
 *
 * # Safety
 * `pred` and `gold` must be NUL-terminated, `out` writable.
 */
enum WcnStatus wcn_f1(const char *pred, const char *gold, int raw, double *out);

/**
 * Exact match (0 or 1) after normalization.
 *
 * # Safety
 * `pred` and `gold` must be NUL-terminated, `out` writable.
 */
enum WcnStatus wcn_exact_match(const char *pred, const char *gold, int raw, int *out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void wcn_string_free(char *s);

/**
 * Message for the last failed call on this thread, or null after a
 * success. Valid until the next call into the library on this thread.
 */
const char *wcn_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WCNKIT_H */
