#ifndef TRAINCERT_H
#define TRAINCERT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define TC_OPTIMIZER_SGD 0

#define TC_OPTIMIZER_MOMENTUM 1

#define TC_OPTIMIZER_ADAM 2

// Result of every fallible call.
typedef enum TcStatus {
  TC_STATUS_OK = 0,
  TC_STATUS_NULL_POINTER = 1,
  TC_STATUS_INVALID_ARGUMENT = 2,
  TC_STATUS_DECODE = 3,
  TC_STATUS_BUFFER_TOO_SMALL = 4,
  TC_STATUS_PANIC = 5,
} TcStatus;

// Parsed attestation container.
typedef struct TcContainer TcContainer;

// Dataset file contents.
typedef struct TcDataset TcDataset;

// Outcome of a verification run.
typedef struct TcReport TcReport;

// Storage figures in bytes.
typedef struct TcStorageEstimate {
  uint64_t stored_values;
  uint64_t per_checkpoint_bytes;
  uint64_t tree_bytes;
  uint64_t penultimate_level_bytes;
  uint64_t total_bytes;
  uint64_t total_bound_bytes;
} TcStorageEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *tc_last_error(void);

// Library version as a static NUL-terminated string.
const char *tc_version(void);

// Releases a string returned by this library. Accepts null.
//
// # Safety
// `s` must come from this library and not have been freed.
void tc_string_free(char *s);

// Probability that an audit of `v` of `m` transitions misses all `a`
// manipulated ones.
//
// # Safety
// `out_p` must be a valid pointer.
enum TcStatus tc_escape_probability_exact(uint64_t m, uint64_t v, uint64_t a, double *out_p);

// `exp(-a*v/m)`.
double tc_escape_probability_approx(uint64_t m, uint64_t v, uint64_t a);

// Storage needed for `m` checkpoints of `n` parameters.
//
// # Safety
// `out_estimate` must be a valid pointer.
enum TcStatus tc_estimate_storage(uint64_t n,
                                  uint64_t m,
                                  uint64_t arity,
                                  uint8_t optimizer,
                                  uint64_t bytes_per_param,
                                  uint64_t digest_len,
                                  struct TcStorageEstimate *out_estimate);

// Parses an attestation container.
//
// # Safety
// `data` must point to `len` readable bytes; `out_container` must be valid.
enum TcStatus tc_container_open(const uint8_t *data,
                                size_t len,
                                struct TcContainer **out_container);

// # Safety
// `c` must come from [`tc_container_open`] and not have been freed. Accepts null.
void tc_container_free(struct TcContainer *c);

// Copies the signed 32-byte root.
//
// # Safety
// `c` must be a live container; `out_root` must have room for 32 bytes.
enum TcStatus tc_container_root(const struct TcContainer *c, uint8_t *out_root);

// Attestation mode: 0 complete, 1 partial.
//
// # Safety
// `c` must be a live container; `out_mode` must be valid.
enum TcStatus tc_container_mode(const struct TcContainer *c, uint8_t *out_mode);

// Parses a dataset file.
//
// # Safety
// `data` must point to `len` readable bytes; `out_dataset` must be valid.
enum TcStatus tc_dataset_open(const uint8_t *data, size_t len, struct TcDataset **out_dataset);

// # Safety
// `d` must come from [`tc_dataset_open`] and not have been freed. Accepts null.
void tc_dataset_free(struct TcDataset *d);

// Replays a complete attestation against the dataset and a model file
// holding the claimed final weights. A failed verification still returns
// `Ok` with a report describing the failure.
//
// # Safety
// Handles must be live; `model` must point to `model_len` bytes; `public_key`
// to 32 bytes; `out_report` must be valid.
enum TcStatus tc_verify_complete(const struct TcContainer *c,
                                 const struct TcDataset *d,
                                 const uint8_t *model,
                                 size_t model_len,
                                 const uint8_t *public_key,
                                 struct TcReport **out_report);

// Checks the transitions named by an audit plan (text form) using the
// container's signed root and a disclosure bundle.
//
// # Safety
// `c` must be live; `plan` NUL-terminated; `bundle` must point to
// `bundle_len` bytes; `public_key` to 32 bytes; `out_report` must be valid.
enum TcStatus tc_verify_partial(const struct TcContainer *c,
                                const char *plan,
                                const uint8_t *bundle,
                                size_t bundle_len,
                                const uint8_t *public_key,
                                struct TcReport **out_report);

// # Safety
// `r` must come from a verify call and not have been freed. Accepts null.
void tc_report_free(struct TcReport *r);

// Process exit code for the report: 0 on success, 10 to 15 for the
// failure classes. Returns -1 for a null report.
//
// # Safety
// `r` must be null or a live report.
int32_t tc_report_exit_code(const struct TcReport *r);

// Human and machine readable report text. Free with [`tc_string_free`].
// Returns null for a null report.
//
// # Safety
// `r` must be null or a live report.
char *tc_report_render(const struct TcReport *r);

// Index of the first failing transition or item, if the failure names one.
//
// # Safety
// `r` must be a live report; `out_index` and `out_has_index` must be valid.
enum TcStatus tc_report_failure_index(const struct TcReport *r,
                                      uint64_t *out_index,
                                      bool *out_has_index);

// Draws `v` distinct transitions out of `m` for `seed`, ascending.
// Writes at most `capacity` values; `out_len` receives `v`.
//
// # Safety
// `out_indices` must have room for `capacity` values; `out_len` must be valid.
enum TcStatus tc_sample_transitions(uint64_t m,
                                    uint64_t v,
                                    uint64_t seed,
                                    uint64_t *out_indices,
                                    size_t capacity,
                                    size_t *out_len);

// Checks that `leaf` opens to the 32-byte `root` via an encoded audit path.
//
// # Safety
// Pointers must cover their stated lengths; `root` must hold 32 bytes;
// `out_valid` must be valid.
enum TcStatus tc_merkle_verify_path(const uint8_t *leaf,
                                    size_t leaf_len,
                                    const uint8_t *path,
                                    size_t path_len,
                                    const uint8_t *root,
                                    bool *out_valid);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAINCERT_H */
