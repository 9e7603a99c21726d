#ifndef GROUPDET_H
#define GROUPDET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GdBackend {
  GD_BACKEND_HEURISTIC = 0,
  GD_BACKEND_ORACLE = 1,
} GdBackend;

typedef enum GdJudgment {
  GD_JUDGMENT_YES = 0,
  GD_JUDGMENT_NO = 1,
  GD_JUDGMENT_NOT_SURE = 2,
} GdJudgment;

typedef enum GdStatus {
  GD_STATUS_OK = 0,
  GD_STATUS_NULL_POINTER = 1,
  GD_STATUS_INVALID_ARGUMENT = 2,
  GD_STATUS_IO = 3,
  GD_STATUS_OUT_OF_RANGE = 4,
  GD_STATUS_REMOTE_UNAVAILABLE = 5,
  GD_STATUS_PANIC = 99,
} GdStatus;

// Opaque pairwise judgment matrix.
typedef struct GdMatrix GdMatrix;

// Opaque clustering result.
typedef struct GdPartition GdPartition;

typedef struct GdBBox {
  double x1;
  double y1;
  double x2;
  double y2;
} GdBBox;

typedef struct GdWeights {
  double w_yes;
  double w_no;
  double w_notsure;
} GdWeights;

typedef struct GdRunOptions {
  enum GdBackend backend;
  double tau_det;
  double tau_d;
  uint8_t tau_z;
  struct GdWeights weights;
  // Scenes processed in parallel; 0 means 1.
  uint32_t jobs;
} GdRunOptions;

typedef struct GdRunSummary {
  uint64_t scenes;
  uint64_t failed_scenes;
  uint64_t persons;
  uint64_t pairs;
  uint64_t filtered_distance;
  uint64_t filtered_depth;
  uint64_t classified;
  uint64_t groups;
} GdRunSummary;

typedef struct GdEvalReport {
  double miou;
  double precision;
  double recall;
  double f1;
  uint64_t n_pred;
  uint64_t n_gt;
  uint64_t n_matched;
  uint64_t tp;
} GdEvalReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gd_version(void);

// Message for the last failed call on this thread; empty after a success.
// Valid until the next library call on the same thread.
const char *gd_last_error_message(void);

enum GdStatus gd_iou(const struct GdBBox *a, const struct GdBBox *b, double *out);

enum GdStatus gd_bbox_union(const struct GdBBox *a, const struct GdBBox *b, struct GdBBox *out);

// Grow `b` by `fraction` of its width/height on every side, clamped to the image.
enum GdStatus gd_pad_bbox(const struct GdBBox *b,
                          double fraction,
                          uint32_t width,
                          uint32_t height,
                          struct GdBBox *out);

// Center distance divided by the image diagonal.
enum GdStatus gd_center_distance(const struct GdBBox *a,
                                 const struct GdBBox *b,
                                 uint32_t width,
                                 uint32_t height,
                                 double *out);

// Map a free-text classifier answer to a judgment ("not sure" wins).
enum GdStatus gd_parse_answer(const char *text, enum GdJudgment *out);

// New matrix over `n` distinct person ids; every pair starts as No.
enum GdStatus gd_matrix_new(const uint32_t *ids, size_t n, struct GdMatrix **out);

void gd_matrix_free(struct GdMatrix *m);

enum GdStatus gd_matrix_len(const struct GdMatrix *m, size_t *out);

// Set the judgment for positions `i` and `j` (both orders).
enum GdStatus gd_matrix_set(struct GdMatrix *m, size_t i, size_t j, enum GdJudgment judgment);

enum GdStatus gd_matrix_get(const struct GdMatrix *m, size_t i, size_t j, enum GdJudgment *out);

// Greedy agreement clustering. `weights` may be NULL for (+1, -1, -1).
enum GdStatus gd_cluster_greedy(const struct GdMatrix *m,
                                const struct GdWeights *weights,
                                struct GdPartition **out);

// Best partition by exhaustive search; at most 10 persons.
enum GdStatus gd_cluster_exhaustive(const struct GdMatrix *m,
                                    const struct GdWeights *weights,
                                    struct GdPartition **out);

void gd_partition_free(struct GdPartition *p);

enum GdStatus gd_partition_num_clusters(const struct GdPartition *p, size_t *out);

// Copy the ids of cluster `k` into `buf` (capacity `cap`) and store the
// cluster size in `len`. Clusters are ordered by smallest member id and
// members ascend. With `cap` smaller than the size only `len` is written
// and `GD_STATUS_OUT_OF_RANGE` is returned.
enum GdStatus gd_partition_cluster(const struct GdPartition *p,
                                   size_t k,
                                   uint32_t *buf,
                                   size_t cap,
                                   size_t *len);

// Sum of weights over same-cluster pairs.
enum GdStatus gd_agreement_score(const struct GdPartition *p,
                                 const struct GdMatrix *m,
                                 const struct GdWeights *weights,
                                 double *out);

// Defaults: heuristic backend, tau_det 0.5, tau_d 0.4, tau_z 80, weights (+1, -1, -1), one job.
enum GdStatus gd_run_options_default(struct GdRunOptions *out);

// Detect groups for every scene of `manifest` and write the results file.
// `options` may be NULL for defaults; `summary` may be NULL.
enum GdStatus gd_run_manifest(const char *manifest,
                              const char *results,
                              const struct GdRunOptions *options,
                              struct GdRunSummary *summary);

// Score a results file against the manifest's ground-truth groups.
enum GdStatus gd_evaluate_files(const char *manifest,
                                const char *predictions,
                                double iou_threshold,
                                struct GdEvalReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUPDET_H */
