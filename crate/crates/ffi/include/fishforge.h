#ifndef FISHFORGE_H
#define FISHFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FfStatus {
  FF_STATUS_OK = 0,
  FF_STATUS_NULL_ARGUMENT = 1,
  FF_STATUS_INVALID_ARGUMENT = 2,
  FF_STATUS_NOT_FOUND = 3,
  FF_STATUS_DECODE = 4,
  FF_STATUS_IO = 5,
  FF_STATUS_DIMENSION_MISMATCH = 6,
  FF_STATUS_ILL_CONDITIONED = 7,
  FF_STATUS_CONFIG = 8,
  FF_STATUS_GENERATION = 9,
  FF_STATUS_PANIC = 10,
} FfStatus;

typedef enum FfPreset {
  FF_PRESET_DEEPFISH = 0,
  FF_PRESET_DEEPSALMON = 1,
} FfPreset;

/**
 * 8-bit image with 1, 3 or 4 interleaved channels.
 */
typedef struct FfImage FfImage;

/**
 * Binary mask, one byte per pixel (0 or 255).
 */
typedef struct FfMask FfMask;

/**
 * Probability map stored as 16-bit codes.
 */
typedef struct FfSoftMask FfSoftMask;

/**
 * Solved thin plate spline.
 */
typedef struct FfTps FfTps;

/**
 * Generator settings. Fill with [`ff_gen_config_default`] and override
 * fields as needed. `fish_count_max` > 0 replaces the preset's fish-count
 * table with a uniform draw over 1..=max.
 */
typedef struct FfGenConfig {
  enum FfPreset preset;
  uint64_t seed;
  double size_ratio_min;
  double size_ratio_max;
  uint32_t tps_points;
  double tps_fraction;
  double hm_sample_fraction;
  double conf_threshold;
  double min_positive_fraction;
  double label_threshold;
  uint32_t fish_count_max;
  uint32_t max_placement_tries;
  uint8_t alpha_cutoff;
  double min_visibility;
} FfGenConfig;

/**
 * Counts reported by [`ff_generate`].
 */
typedef struct FfRunStats {
  uint64_t images_written;
  uint64_t fish_placed;
  uint64_t gated;
  uint64_t skipped;
  uint64_t unmatched;
} FfRunStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *ff_last_error(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FfStatus ff_image_load(const char *path, struct FfImage **out);

/**
 * Copies `len` bytes of interleaved pixel data into a new image.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be valid.
 */
enum FfStatus ff_image_new(uint32_t width,
                           uint32_t height,
                           uint8_t channels,
                           const uint8_t *data,
                           size_t len,
                           struct FfImage **out);

/**
 * # Safety
 * `image` must be a live handle and `path` a NUL-terminated string.
 */
enum FfStatus ff_image_save(const struct FfImage *image, const char *path);

/**
 * Writes width, height and channel count. Any output pointer may be NULL.
 *
 * # Safety
 * `image` must be a live handle.
 */
enum FfStatus ff_image_info(const struct FfImage *image,
                            uint32_t *width,
                            uint32_t *height,
                            uint8_t *channels);

/**
 * Borrowed pointer to the pixel bytes, valid while the handle lives.
 *
 * # Safety
 * `image` must be a live handle and `len` a valid pointer.
 */
const uint8_t *ff_image_data(const struct FfImage *image, size_t *len);

/**
 * # Safety
 * `image` must be NULL or a handle not yet freed.
 */
void ff_image_free(struct FfImage *image);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FfStatus ff_mask_load(const char *path, struct FfMask **out);

/**
 * # Safety
 * `mask` must be a live handle and `path` a NUL-terminated string.
 */
enum FfStatus ff_mask_save(const struct FfMask *mask, const char *path);

/**
 * Number of foreground pixels, or 0 for a NULL handle.
 *
 * # Safety
 * `mask` must be NULL or a live handle.
 */
uint64_t ff_mask_count(const struct FfMask *mask);

/**
 * # Safety
 * `mask` must be NULL or a handle not yet freed.
 */
void ff_mask_free(struct FfMask *mask);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FfStatus ff_soft_mask_load(const char *path, struct FfSoftMask **out);

/**
 * # Safety
 * `probs` must point to `width * height` readable values; `out` must be valid.
 */
enum FfStatus ff_soft_mask_new(uint32_t width,
                               uint32_t height,
                               const double *probs,
                               struct FfSoftMask **out);

/**
 * Foreground where probability >= `threshold`.
 *
 * # Safety
 * `soft` must be a live handle and `out` a valid pointer.
 */
enum FfStatus ff_soft_mask_binarize(const struct FfSoftMask *soft,
                                    double threshold,
                                    struct FfMask **out);

/**
 * # Safety
 * `soft` must be NULL or a handle not yet freed.
 */
void ff_soft_mask_free(struct FfSoftMask *soft);

/**
 * # Safety
 * Both masks must be live handles and `out` a valid pointer.
 */
enum FfStatus ff_dice(const struct FfMask *pred, const struct FfMask *gt, double *out);

/**
 * # Safety
 * Both masks must be live handles and `out` a valid pointer.
 */
enum FfStatus ff_iou(const struct FfMask *pred, const struct FfMask *gt, double *out);

/**
 * Solves the spline through `n` control points. `points` and
 * `displacements` hold `n` interleaved (x, y) pairs.
 *
 * # Safety
 * Both arrays must hold `2 * n` readable values; `out` must be valid.
 */
enum FfStatus ff_tps_solve(const double *points,
                           const double *displacements,
                           size_t n,
                           struct FfTps **out);

/**
 * # Safety
 * `tps` must be a live handle; `out_x` and `out_y` must be valid.
 */
enum FfStatus ff_tps_eval(const struct FfTps *tps,
                          double x,
                          double y,
                          double *out_x,
                          double *out_y);

/**
 * Reciprocal condition number of the solved system, or NaN for NULL.
 *
 * # Safety
 * `tps` must be NULL or a live handle.
 */
double ff_tps_rcond(const struct FfTps *tps);

/**
 * # Safety
 * `tps` must be NULL or a handle not yet freed.
 */
void ff_tps_free(struct FfTps *tps);

/**
 * Matches the colour histogram of an RGBA `asset` to all pixels of
 * `reference`. Transparent pixels and alpha are left unchanged.
 *
 * # Safety
 * Both images must be live handles and `out` a valid pointer.
 */
enum FfStatus ff_match_histogram(const struct FfImage *asset,
                                 const struct FfImage *reference,
                                 struct FfImage **out);

/**
 * Fills `out` with the preset's values. `fish_count_max` is set to 0.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FfStatus ff_gen_config_default(enum FfPreset preset, struct FfGenConfig *out);

/**
 * Generates a dataset into `out_dir` and writes its manifest.
 *
 * `stage` is 1 or 2. Stage 1 reads backgrounds from `inputs`; stage 2 reads
 * images from `inputs` and soft masks from `soft_masks` (NULL for stage 1).
 * `stats` may be NULL.
 *
 * # Safety
 * Path arguments must be NUL-terminated strings; `config` must be valid.
 */
enum FfStatus ff_generate(uint32_t stage,
                          const char *inputs,
                          const char *soft_masks,
                          const char *assets,
                          const char *out_dir,
                          const struct FfGenConfig *config,
                          uint32_t rounds,
                          uint32_t jobs,
                          struct FfRunStats *stats);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FISHFORGE_H */
