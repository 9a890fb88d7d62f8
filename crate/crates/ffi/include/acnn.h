#ifndef ACNN_H
#define ACNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every fallible function.
 */
typedef enum AcnnStatus {
  ACNN_STATUS_OK = 0,
  ACNN_STATUS_NULL_POINTER = 1,
  ACNN_STATUS_INVALID_ARGUMENT = 2,
  ACNN_STATUS_IO = 3,
  /**
   * An image or label file could not be decoded.
   */
  ACNN_STATUS_BAD_DATA = 4,
  /**
   * A network file is corrupt, truncated or of another version.
   */
  ACNN_STATUS_BAD_FORMAT = 5,
  /**
   * The network could not be built from the given exemplars.
   */
  ACNN_STATUS_BUILD_FAILED = 6,
  ACNN_STATUS_PANIC = 7,
} AcnnStatus;

/**
 * Construction presets, passed to [`acnn_network_build`] as their integer
 * value.
 */
typedef enum AcnnPreset {
  /**
   * Per-exemplar channels, 2×2 pooling, K = 40.
   */
  ACNN_PRESET_POOLED = 0,
  /**
   * Per-exemplar channels, no pooling, K = 40.
   */
  ACNN_PRESET_UNPOOLED = 1,
  /**
   * Max-merged channels, no pooling, K = 30.
   */
  ACNN_PRESET_MERGED = 2,
} AcnnPreset;

/**
 * Opaque network handle.
 */
typedef struct AcnnNetwork AcnnNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a saved network file.
 *
 * On success `*out` receives a new handle; on failure it is set to null.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AcnnStatus acnn_network_load(const char *path, struct AcnnNetwork **out);

/**
 * Builds a network from an IDX image/label pair.
 *
 * With `exemplar_indices` non-null, its `count` entries are the dataset
 * positions of the exemplars (one per class). With it null, one exemplar
 * per class is drawn using `seed`. `preset` is an `AcnnPreset` value. On
 * failure `*out` is set to null.
 *
 * # Safety
 * Path arguments must be NUL-terminated strings, `exemplar_indices` must
 * be null or point to `count` values, and `out` must be a valid pointer.
 */
enum AcnnStatus acnn_network_build(const char *images_path,
                                   const char *labels_path,
                                   const size_t *exemplar_indices,
                                   size_t count,
                                   uint64_t seed,
                                   uint32_t preset,
                                   struct AcnnNetwork **out);

/**
 * Writes the network to `path` in the checksummed binary format.
 *
 * # Safety
 * `net` must be a live handle and `path` a NUL-terminated string.
 */
enum AcnnStatus acnn_network_save(const struct AcnnNetwork *net, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void acnn_network_free(struct AcnnNetwork *net);

/**
 * Number of classes the network distinguishes; 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t acnn_network_num_classes(const struct AcnnNetwork *net);

/**
 * Kernel counts of the two convolutional layers.
 *
 * # Safety
 * `net` must be a live handle; `layer1` and `layer2` valid pointers.
 */
enum AcnnStatus acnn_network_kernel_counts(const struct AcnnNetwork *net,
                                           size_t *layer1,
                                           size_t *layer2);

/**
 * Classifies one 28×28 greyscale image given row-major in `pixels`
 * (`len` must be 784). Pixels above 127 count as foreground.
 *
 * `*out_class` receives the winning class. When `scores` is non-null,
 * the per-class second-layer scores are written to it; `scores_len` must
 * then be at least the class count.
 *
 * # Safety
 * `net` must be a live handle, `pixels` must point to `len` bytes,
 * `out_class` must be valid and `scores` null or valid for `scores_len`
 * writes.
 */
enum AcnnStatus acnn_network_classify(const struct AcnnNetwork *net,
                                      const uint8_t *pixels,
                                      size_t len,
                                      size_t *out_class,
                                      int32_t *scores,
                                      size_t scores_len);

/**
 * Message for the most recent failure on this thread, or null if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *acnn_last_error_message(void);

/**
 * Static description of an `AcnnStatus` value; unknown values get a
 * generic description.
 */
const char *acnn_status_string(int32_t status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACNN_H */
