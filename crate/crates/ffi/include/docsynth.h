#ifndef DOCSYNTH_H
#define DOCSYNTH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define DS_METHOD_BESTFIT 0

#define DS_METHOD_RANDOM 1

typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_ARGUMENT = 2,
  DS_STATUS_IO = 3,
  DS_STATUS_DATA = 4,
  DS_STATUS_LAYOUT = 5,
  DS_STATUS_CHECK_FAILED = 6,
  DS_STATUS_PANIC = 7,
} DsStatus;

/**
 * Opaque generated layout.
 */
typedef struct DsLayout DsLayout;

/**
 * Opaque element pool.
 */
typedef struct DsPool DsPool;

typedef struct DsPageSpec {
  uint32_t width_px;
  uint32_t height_px;
  uint32_t margin_px;
} DsPageSpec;

typedef struct DsEngineConfig {
  size_t n_max;
  double fr_thr;
  size_t mini_num;
  double small_area_frac;
  size_t candidate_set_size;
  size_t strata;
  double scale_min;
  double scale_max;
  uint32_t gutter_px;
} DsEngineConfig;

typedef struct DsPlacedElement {
  uint32_t element_id;
  uint32_t x;
  uint32_t y;
  uint32_t w;
  uint32_t h;
  double scale;
} DsPlacedElement;

typedef struct DsMetrics {
  double align_sum;
  double align_mean;
  double density;
  double density_union;
  size_t n_elements;
} DsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ds_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ds_version(void);

struct DsPageSpec ds_page_spec_default(void);

struct DsEngineConfig ds_engine_config_default(void);

/**
 * Builds a procedural pool of `categories × per_category` elements.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DsStatus ds_pool_synthetic(size_t categories,
                                size_t per_category,
                                uint64_t seed,
                                struct DsPool **out);

/**
 * Loads a pool directory written by `docsynth pool`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` a valid handle pointer.
 */
enum DsStatus ds_pool_load_dir(const char *dir, struct DsPool **out);

/**
 * Crops a pool from a COCO manifest; images resolve against the
 * manifest's directory.
 *
 * # Safety
 * `manifest` must be a NUL-terminated string; `out` a valid handle pointer.
 */
enum DsStatus ds_pool_load_manifest(const char *manifest, struct DsPool **out);

/**
 * Number of elements, or 0 for a null handle.
 *
 * # Safety
 * `pool` must be null or a live handle.
 */
size_t ds_pool_len(const struct DsPool *pool);

/**
 * # Safety
 * `pool` must be null or a handle not yet freed.
 */
void ds_pool_free(struct DsPool *pool);

/**
 * Generates one layout. `page` and `cfg` may be null for defaults;
 * `method` is `DS_METHOD_BESTFIT` or `DS_METHOD_RANDOM`.
 *
 * # Safety
 * Pointers must be null (where allowed) or valid; `out` must be writable.
 */
enum DsStatus ds_generate_layout(const struct DsPool *pool,
                                 const struct DsPageSpec *page,
                                 const struct DsEngineConfig *cfg,
                                 uint32_t method,
                                 uint64_t seed,
                                 struct DsLayout **out);

/**
 * Number of placed elements, or 0 for a null handle.
 *
 * # Safety
 * `layout` must be null or a live handle.
 */
size_t ds_layout_len(const struct DsLayout *layout);

/**
 * Copies placed element `index` into `out`.
 *
 * # Safety
 * `layout` must be a live handle and `out` writable.
 */
enum DsStatus ds_layout_get(const struct DsLayout *layout,
                            size_t index,
                            struct DsPlacedElement *out);

/**
 * Page geometry of a layout.
 *
 * # Safety
 * `layout` must be a live handle and `out` writable.
 */
enum DsStatus ds_layout_page(const struct DsLayout *layout, struct DsPageSpec *out);

/**
 * Serializes the layout to JSON. Release the string with `ds_string_free`.
 *
 * # Safety
 * `layout` must be a live handle and `out` writable.
 */
enum DsStatus ds_layout_to_json(const struct DsLayout *layout, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void ds_string_free(char *s);

/**
 * Align/Density scores of a layout.
 *
 * # Safety
 * `layout` must be a live handle and `out` writable.
 */
enum DsStatus ds_layout_metrics(const struct DsLayout *layout, struct DsMetrics *out);

/**
 * # Safety
 * `layout` must be null or a handle not yet freed.
 */
void ds_layout_free(struct DsLayout *layout);

/**
 * Runs the receptive-module self-check on both presets. Returns
 * `DS_STATUS_CHECK_FAILED` when any check fails.
 */
enum DsStatus ds_crm_selfcheck(size_t cases, uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOCSYNTH_H */
