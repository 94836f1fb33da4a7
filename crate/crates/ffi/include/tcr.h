#ifndef TCR_H
#define TCR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TcrCropShape {
  TCR_CROP_SHAPE_RADIAL = 0,
  TCR_CROP_SHAPE_BOX = 1,
} TcrCropShape;

typedef enum TcrNumeratorMode {
  TCR_NUMERATOR_MODE_HULL_RESTRICTED = 0,
  TCR_NUMERATOR_MODE_LITERAL = 1,
} TcrNumeratorMode;

// Result codes; the numeric values match the `tcr` command's exit codes.
typedef enum TcrStatus {
  TCR_STATUS_OK = 0,
  TCR_STATUS_IO = 1,
  TCR_STATUS_DEGENERATE_HULL = 2,
  TCR_STATUS_EMPTY_DOMAIN = 3,
  TCR_STATUS_NO_TRUE_MATCH = 4,
  TCR_STATUS_INVALID_ARGUMENT = 6,
  TCR_STATUS_EMPTY_SESSION = 7,
  TCR_STATUS_NULL_POINTER = 8,
  TCR_STATUS_PANIC = 9,
} TcrStatus;

// Opaque point cloud.
typedef struct TcrCloud TcrCloud;

// Opaque comparison report.
typedef struct TcrReport TcrReport;

// Comparison parameters. A `crop_range` of zero or less disables cropping.
typedef struct TcrParams {
  double tau;
  double voxel_resolution;
  double voxel_origin[3];
  double crop_range;
  enum TcrCropShape crop_shape;
  enum TcrNumeratorMode numerator_mode;
} TcrParams;

// Plain-data view of a report. Undefined one-sided ratios are NaN.
typedef struct TcrSummary {
  size_t source_voxels;
  size_t target_voxels;
  size_t o_st;
  size_t o_ts;
  size_t h_st;
  size_t h_ts;
  double tcr_forward;
  double tcr_backward;
  double tcr_sym;
} TcrSummary;

// Precision-recall summary over top-1 retrievals.
typedef struct TcrPrSummary {
  double auc;
  double max_f1;
  double max_f1_threshold;
  double recall_at_1;
  size_t num_queries;
  size_t num_with_true_match;
} TcrPrSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or an empty string.
// The pointer stays valid until the next API call on the same thread.
const char *tcr_last_error_message(void);

struct TcrParams tcr_params_default(void);

// Builds a cloud from `n` interleaved `x, y, z` triples.
//
// # Safety
// `xyz` must point to `3 * n` readable doubles (it may be null when `n` is
// 0) and `out` must be a valid pointer.
enum TcrStatus tcr_cloud_from_xyz(const double *xyz, size_t n, struct TcrCloud **out);

// Loads a cloud file; the format follows the extension.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum TcrStatus tcr_cloud_load(const char *path, struct TcrCloud **out);

// Number of points, or 0 for a null handle.
//
// # Safety
// `cloud` must be null or a live handle.
size_t tcr_cloud_len(const struct TcrCloud *cloud);

// # Safety
// `cloud` must be null or a handle not yet freed.
void tcr_cloud_free(struct TcrCloud *cloud);

// Compares two sessions. `params` may be null for the defaults.
//
// # Safety
// `source` and `target` must be live handles, `params` null or valid, and
// `out` a valid pointer.
enum TcrStatus tcr_compute(const struct TcrCloud *source,
                           const struct TcrCloud *target,
                           const struct TcrParams *params,
                           struct TcrReport **out);

// Symmetric ratio, or NaN for a null handle.
//
// # Safety
// `report` must be null or a live handle.
double tcr_report_sym(const struct TcrReport *report);

// # Safety
// `report` must be a live handle and `out` a valid pointer.
enum TcrStatus tcr_report_summary(const struct TcrReport *report, struct TcrSummary *out);

// The report as JSON, the same document the `tcr` command writes. Release
// it with [`tcr_string_free`]. Returns null for a null handle.
//
// # Safety
// `report` must be null or a live handle.
char *tcr_report_to_json(const struct TcrReport *report);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void tcr_string_free(char *s);

// # Safety
// `report` must be null or a handle not yet freed.
void tcr_report_free(struct TcrReport *report);

// Precision-recall metrics from the best candidate of each of `n` queries.
//
// `scores[i]` is the similarity of query `i`'s top candidate (higher is
// more similar), `distances[i]` the metric distance between the two poses,
// and `has_true_match[i]` is nonzero when any database pose lies within
// `tp_radius` of query `i`.
//
// # Safety
// The three arrays must each hold `n` elements and `out` must be valid.
enum TcrStatus tcr_pr_evaluate(const double *scores,
                               const double *distances,
                               const uint8_t *has_true_match,
                               size_t n,
                               double tp_radius,
                               struct TcrPrSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TCR_H */
