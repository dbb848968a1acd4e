#ifndef FASTWAVE_H
#define FASTWAVE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum FwStatus {
  FW_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  FW_STATUS_NULL_POINTER = 1,
  FW_STATUS_INVALID_ARGUMENT = 2,
  FW_STATUS_INVALID_CONFIG = 3,
  FW_STATUS_SHAPE_MISMATCH = 4,
  /*
   A file was readable but not a valid weight or config file.
   */
  FW_STATUS_FORMAT = 5,
  FW_STATUS_IO = 6,
  /*
   An internal panic was caught; the handle involved should be freed.
   */
  FW_STATUS_INTERNAL = 7,
} FwStatus;

/*
 A model configuration together with its weights.
 */
typedef struct FwModel FwModel;

typedef struct FwModelInfo {
  size_t num_blocks;
  size_t layers_per_block;
  size_t channels;
  size_t quant_levels;
  uint32_t sample_rate;
  size_t receptive_field;
} FwModelInfo;

typedef struct FwCostEstimate {
  uint64_t mac_count;
  uint64_t estimated_cycles;
  uint64_t weight_buffer_elems;
} FwCostEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the most recent failure on this thread, or an empty
 string after a successful call. The pointer stays valid until the next
 `fw_*` call on the same thread.
 */
const char *fw_last_error_message(void);

/*
 Static name of a status code, e.g. `"ok"` or `"shape-mismatch"`.
 */
const char *fw_status_name(enum FwStatus status);

/*
 Creates a model with uniform random weights in `[-scale, scale]`.
 Filter width is fixed at 2.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum FwStatus fw_model_random(size_t num_blocks,
                              size_t layers_per_block,
                              size_t channels,
                              size_t quant_levels,
                              uint32_t sample_rate,
                              uint64_t seed,
                              float scale,
                              struct FwModel **out);

/*
 Loads a model from a weight file; the file header carries the config.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FwStatus fw_model_load(const char *path, struct FwModel **out);

/*
 Writes the model to a weight file readable by `fw_model_load`.

 # Safety
 `model` must be a live handle and `path` a NUL-terminated string.
 */
enum FwStatus fw_model_save(const struct FwModel *model, const char *path);

/*
 Releases a handle. Null is ignored.

 # Safety
 `model` must be null or a handle not already freed.
 */
void fw_model_free(struct FwModel *model);

/*
 # Safety
 `model` must be a live handle and `out` a valid pointer.
 */
enum FwStatus fw_model_info(const struct FwModel *model, struct FwModelInfo *out);

/*
 Generates `n` samples autoregressively.

 `total_bits == 0` selects 32-bit real arithmetic; otherwise the run uses
 `fixed<total_bits, int_bits>`. `seed` (may be null when `seed_len` is 0)
 is teacher-forced first. `out_samples` receives `n` values in `[-1, 1]`;
 `out_bins`, if not null, receives the `n` quantization bins.

 # Safety
 Pointers must be valid for the stated lengths.
 */
enum FwStatus fw_generate(const struct FwModel *model,
                          uint32_t total_bits,
                          uint32_t int_bits,
                          const double *seed,
                          size_t seed_len,
                          size_t n,
                          double *out_samples,
                          uint32_t *out_bins);

/*
 # Safety
 `out` must be a valid pointer.
 */
enum FwStatus fw_quantize(double x, size_t levels, size_t *out);

/*
 # Safety
 `out` must be a valid pointer.
 */
enum FwStatus fw_dequantize(size_t bin, size_t levels, double *out);

/*
 Analytic cost of one `rows x cols` matvec. `num_parallel_in` must be a
 power of two.

 # Safety
 `out` must be a valid pointer.
 */
enum FwStatus fw_estimate_cycles(size_t rows,
                                 size_t cols,
                                 size_t num_parallel_out,
                                 size_t num_parallel_in,
                                 struct FwCostEstimate *out);

/*
 Mean squared error of two equal-length signals.

 # Safety
 `a` and `b` must hold `len` values; `out` must be valid.
 */
enum FwStatus fw_mse(const double *a, const double *b, size_t len, double *out);

/*
 Log-spectral distance with a periodic Hann window and a 1e-10 floor.

 # Safety
 `a` and `b` must hold `len` values; `out` must be valid.
 */
enum FwStatus fw_lsd(const double *a,
                     const double *b,
                     size_t len,
                     size_t window_size,
                     size_t hop,
                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FASTWAVE_H */
