#ifndef TRIPLE_SCORE_H
#define TRIPLE_SCORE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_ARGUMENT = 1,
  TS_STATUS_INVALID_UTF8 = 2,
  TS_STATUS_IO = 3,
  TS_STATUS_PARSE = 4,
  TS_STATUS_VALIDATION = 5,
  TS_STATUS_UNKNOWN_RELATION = 6,
  TS_STATUS_UNKNOWN_ENTITY = 7,
  TS_STATUS_UNDEFINED = 8,
  TS_STATUS_INSUFFICIENT_DATA = 9,
  TS_STATUS_CONFIG = 10,
  TS_STATUS_PANIC = 11,
} TsStatus;

/**
 * A loaded corpus index and scoring model. Opaque to C.
 */
typedef struct TsEngine TsEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens an engine from an `index.json` file and a model bundle directory.
 * On success `*out` owns the engine; release it with [`ts_engine_free`].
 *
 * # Safety
 * Path arguments are NUL-terminated strings; `out` is a valid pointer.
 */
enum TsStatus ts_engine_open(const char *index_path, const char *model_dir, struct TsEngine **out);

/**
 * Scores one triple. `relation` is `"profession"` or `"nationality"` and
 * `entity` a canonical lexicon entry.
 *
 * # Safety
 * `engine` comes from [`ts_engine_open`]; strings are NUL-terminated;
 * `out_score` is a valid pointer.
 */
enum TsStatus ts_engine_score(const struct TsEngine *engine,
                              const char *person_id,
                              const char *relation,
                              const char *entity,
                              uint8_t *out_score);

/**
 * Releases an engine. Null is ignored.
 *
 * # Safety
 * `engine` is null or came from [`ts_engine_open`] and is not used again.
 */
void ts_engine_free(struct TsEngine *engine);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns the full message length
 * without the terminator. Returns 0 when there is no error.
 *
 * # Safety
 * `buf` is null or points to `len` writable bytes.
 */
size_t ts_last_error_message(char *buf, size_t len);

/**
 * Fraction of positions where the scores differ by at most 2.
 *
 * # Safety
 * `pred` and `truth` point to `len` bytes; `out` is a valid pointer.
 */
enum TsStatus ts_accuracy(const uint8_t *pred, const uint8_t *truth, size_t len, double *out);

/**
 * Mean absolute score difference.
 *
 * # Safety
 * As for [`ts_accuracy`].
 */
enum TsStatus ts_avg_score_diff(const uint8_t *pred, const uint8_t *truth, size_t len, double *out);

/**
 * Kendall tau-b of two score lists. Returns `Undefined` for fewer than two
 * items or an all-tied list.
 *
 * # Safety
 * As for [`ts_accuracy`].
 */
enum TsStatus ts_kendall_tau_b(const uint8_t *a, const uint8_t *b, size_t len, double *out);

/**
 * The library version as a static NUL-terminated string.
 */
const char *ts_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRIPLE_SCORE_H */
