#ifndef VOXGAN_H
#define VOXGAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VxgStatus {
  VXG_STATUS_OK = 0,
  VXG_STATUS_NULL_POINTER = 1,
  VXG_STATUS_INVALID_ARGUMENT = 2,
  VXG_STATUS_OUT_OF_RANGE = 3,
  VXG_STATUS_IO = 4,
  VXG_STATUS_FORMAT = 5,
  VXG_STATUS_INTEGRITY = 6,
  VXG_STATUS_VERSION = 7,
  VXG_STATUS_DATA = 8,
  VXG_STATUS_CONFIG = 9,
  VXG_STATUS_MODEL = 10,
  VXG_STATUS_NON_FINITE = 11,
  VXG_STATUS_INTERNAL = 12,
} VxgStatus;

// Occupancy grid handle.
typedef struct VxgGrid VxgGrid;

// Trained checkpoint handle.
typedef struct VxgModel VxgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *vxg_version(void);

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library from the same thread.
const char *vxg_last_error(void);

// New empty grid of the given extent.
//
// # Safety
// `out` must be valid for a pointer write.
enum VxgStatus vxg_grid_new(size_t extent, struct VxgGrid **out);

// Reads a `.binvox` or `.vxg` file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for a pointer write.
enum VxgStatus vxg_grid_read(const char *path, struct VxgGrid **out);

// Writes the grid as `.binvox` when the path ends in that extension, else as `.vxg`.
//
// # Safety
// `grid` must be a live handle; `path` a NUL-terminated string.
enum VxgStatus vxg_grid_write(const struct VxgGrid *grid, const char *path);

// # Safety
// `grid` must be null or a handle not yet freed.
void vxg_grid_free(struct VxgGrid *grid);

// # Safety
// `grid` must be a live handle; `out` valid for a write.
enum VxgStatus vxg_grid_extent(const struct VxgGrid *grid, size_t *out);

// Number of voxels with occupancy at least 0.5.
//
// # Safety
// `grid` must be a live handle; `out` valid for a write.
enum VxgStatus vxg_grid_count(const struct VxgGrid *grid, size_t *out);

// # Safety
// `grid` must be a live handle; `out` valid for a write.
enum VxgStatus vxg_grid_get(const struct VxgGrid *grid, size_t x, size_t y, size_t z, double *out);

// Sets one occupancy value in `[0, 1]`.
//
// # Safety
// `grid` must be a live handle.
enum VxgStatus vxg_grid_set(struct VxgGrid *grid, size_t x, size_t y, size_t z, double value);

// Intersection over union at threshold 0.5.
//
// # Safety
// Both grids must be live handles; `out` valid for a write.
enum VxgStatus vxg_grid_iou(const struct VxgGrid *a, const struct VxgGrid *b, double *out);

// Visible shell of `grid` seen along `view` (`"+x"`, `"-z"`, ...).
//
// # Safety
// `grid` must be a live handle; `view` a NUL-terminated string; `out` valid for a write.
enum VxgStatus vxg_grid_scan(const struct VxgGrid *grid, const char *view, struct VxgGrid **out);

// Loads a training checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` valid for a write.
enum VxgStatus vxg_model_load(const char *path, struct VxgModel **out);

// # Safety
// `model` must be null or a handle not yet freed.
void vxg_model_free(struct VxgModel *model);

// # Safety
// `model` must be a live handle; `out` valid for a write.
enum VxgStatus vxg_model_resolution(const struct VxgModel *model, size_t *out);

// Decodes the latent code drawn from `seed`.
//
// # Safety
// `model` must be a live handle; `out` valid for a write.
enum VxgStatus vxg_model_generate(const struct VxgModel *model,
                                  uint64_t seed,
                                  struct VxgGrid **out);

// Completes a shell grid with a voxel-encoder checkpoint.
//
// # Safety
// `model` and `shell` must be live handles; `out` valid for a write.
enum VxgStatus vxg_model_complete(const struct VxgModel *model,
                                  const struct VxgGrid *shell,
                                  struct VxgGrid **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOXGAN_H */
