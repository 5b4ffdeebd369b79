#ifndef CARDPIPE_H
#define CARDPIPE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

enum CardpipeStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  CARDPIPE_STATUS_OK = 0,
  CARDPIPE_STATUS_NULL_POINTER = 1,
  CARDPIPE_STATUS_INVALID_ARGUMENT = 2,
  CARDPIPE_STATUS_INVALID_UTF8 = 3,
  CARDPIPE_STATUS_NOT_FOUND = 4,
  CARDPIPE_STATUS_PARSE = 5,
  CARDPIPE_STATUS_BUFFER_TOO_SMALL = 6,
  CARDPIPE_STATUS_PANIC = 99,
};
#ifndef __cplusplus
typedef int32_t CardpipeStatus;
#endif // __cplusplus

/**
 * Decoder for the default head geometry.
 */
typedef struct CardpipeDecoder CardpipeDecoder;

/**
 * Boxes after suppression plus the assembled card number, if any.
 */
typedef struct CardpipeReadResult CardpipeReadResult;

/**
 * One decoded digit box in input-image pixels.
 */
typedef struct CardpipeBox {
  double cx;
  double cy;
  double w;
  double h;
  double score;
  uint8_t digit;
} CardpipeBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cardpipe_last_error(void);

/**
 * Writes whether the NUL-terminated digit string passes the Luhn check.
 *
 * # Safety
 * `digits` must be a valid C string and `out` writable.
 */
CardpipeStatus cardpipe_luhn_valid(const char *digits, bool *out);

/**
 * Writes the digit that makes `prefix` followed by it Luhn-valid.
 *
 * # Safety
 * `prefix` must be a valid C string and `out` writable.
 */
CardpipeStatus cardpipe_luhn_check_digit(const char *prefix, uint8_t *out);

/**
 * Number of floats in one head output for the default geometry.
 */
size_t cardpipe_head_output_len(void);

/**
 * # Safety
 * `out` must be writable.
 */
CardpipeStatus cardpipe_decoder_new(struct CardpipeDecoder **out);

/**
 * # Safety
 * `decoder` must come from `cardpipe_decoder_new` and not be used again.
 */
void cardpipe_decoder_free(struct CardpipeDecoder *decoder);

/**
 * Decodes a flat head output (per scale: regression then scores, row-major)
 * into boxes and a card-number candidate.
 *
 * # Safety
 * `values` must point to `len` floats; `decoder` must be live; `out` writable.
 */
CardpipeStatus cardpipe_decoder_decode(const struct CardpipeDecoder *decoder,
                                       const float *values,
                                       size_t len,
                                       struct CardpipeReadResult **out);

/**
 * # Safety
 * `result` must come from `cardpipe_decoder_decode` and not be used again.
 */
void cardpipe_result_free(struct CardpipeReadResult *result);

/**
 * # Safety
 * `result` must be live or null.
 */
size_t cardpipe_result_box_count(const struct CardpipeReadResult *result);

/**
 * # Safety
 * `result` must be live and `out` writable.
 */
CardpipeStatus cardpipe_result_box(const struct CardpipeReadResult *result,
                                   size_t index,
                                   struct CardpipeBox *out);

/**
 * Copies the assembled card number into `buf` with a trailing NUL.
 * `needed` receives the buffer size required, including the NUL. Returns
 * `NotFound` when no number was assembled.
 *
 * # Safety
 * `result` must be live, `buf` must hold `cap` bytes (or be null with
 * `cap == 0`), `needed` and `luhn_valid` may be null.
 */
CardpipeStatus cardpipe_result_pan(const struct CardpipeReadResult *result,
                                   char *buf,
                                   size_t cap,
                                   size_t *needed,
                                   bool *luhn_valid);

/**
 * Applies the fraud rules to a scan-report JSON and an expected-card JSON.
 * On success `verdict_json` receives a string to release with
 * `cardpipe_string_free` and `exit_code` the decision code (0 pass,
 * 2 reject, 3 inconclusive).
 *
 * # Safety
 * Inputs must be valid C strings; outputs writable.
 */
CardpipeStatus cardpipe_verdict_decide(const char *report_json,
                                       const char *expected_json,
                                       char **verdict_json,
                                       int32_t *exit_code);

/**
 * # Safety
 * `s` must come from this library and not be used again.
 */
void cardpipe_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARDPIPE_H */
