#ifndef MULTILIDAR_H
#define MULTILIDAR_H

/* Generated by cbindgen from multilidar-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum {
  ML_OK = 0,
  /**
   * A required pointer argument was null.
   */
  ML_NULL_POINTER = 1,
  /**
   * An argument violated a documented precondition.
   */
  ML_INVALID_ARGUMENT = 2,
  /**
   * A numeric routine failed (singular system, non-PSD matrix, ...).
   */
  ML_NUMERICAL_FAILURE = 3,
} MlStatus;

/**
 * Perturbation prior handle: the 9x9 block-diagonal covariance over
 * translation, rotation, and measurement noise, plus the alpha scale
 * applied to the first two blocks.
 */
typedef struct MlPrior MlPrior;

/**
 * Rigid transform handle (rotation plus translation).
 */
typedef struct MlTransform MlTransform;

/**
 * Propagated per-point uncertainty.
 */
typedef struct {
  /**
   * Transformed point (m).
   */
  double mean[3];
  /**
   * 3x3 covariance, row-major (m^2).
   */
  double covariance[9];
  /**
   * Trace of the covariance (m^2).
   */
  double trace;
} MlPointUncertainty;

/**
 * Detection box: bottom-center position, extents, yaw about +z.
 */
typedef struct {
  uint32_t class_id;
  /**
   * Confidence in [0, 1].
   */
  double score;
  /**
   * Bottom-center position (m).
   */
  double center[3];
  /**
   * Extents (length, width, height), each > 0 (m).
   */
  double size[3];
  /**
   * Rotation about +z (rad).
   */
  double yaw;
} MlBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Detail message for the most recent failure on this thread. Valid until
 * the next failing call on the same thread; never null.
 */
const char *ml_last_error_message(void);

/**
 * Library version as a static null-terminated string.
 */
const char *ml_version(void);

/**
 * Builds a transform from fixed-axis roll-pitch-yaw angles (rad) and a
 * translation (m): R = Rz(yaw) Ry(pitch) Rx(roll).
 *
 * # Safety
 * `out` must be a valid pointer; on `MlOk` it receives a handle the
 * caller frees with `ml_transform_free`.
 */
MlStatus ml_transform_from_euler_rpy(double roll_rad,
                                     double pitch_rad,
                                     double yaw_rad,
                                     double tx,
                                     double ty,
                                     double tz,
                                     MlTransform **out);

/**
 * Identity transform.
 *
 * # Safety
 * `out` must be a valid pointer; see `ml_transform_from_euler_rpy`.
 */
MlStatus ml_transform_identity(MlTransform **out);

/**
 * Composition `first_applied` then `second_applied` as a new handle.
 *
 * # Safety
 * All pointers must be valid.
 */
MlStatus ml_transform_compose(const MlTransform *second_applied,
                              const MlTransform *first_applied,
                              MlTransform **out);

/**
 * Inverse transform as a new handle.
 *
 * # Safety
 * All pointers must be valid.
 */
MlStatus ml_transform_inverse(const MlTransform *transform, MlTransform **out);

/**
 * Applies the transform to one point: `point_out = R point_in + t`.
 * `point_in` and `point_out` are 3-element arrays and may alias.
 *
 * # Safety
 * All pointers must be valid for 3 doubles.
 */
MlStatus ml_transform_apply(const MlTransform *transform,
                            const double *point_in,
                            double *point_out);

/**
 * Releases a transform handle; null is a no-op.
 *
 * # Safety
 * `transform` must come from this library and not be freed twice.
 */
void ml_transform_free(MlTransform *transform);

/**
 * Default prior: translation variances (1/20)^2 m^2, rotation (1/10)^2
 * rad^2, measurement (1/50)^2 m^2 per axis, at the given alpha.
 *
 * # Safety
 * `out` must be a valid pointer; on `MlOk` it receives a handle the
 * caller frees with `ml_prior_free`.
 */
MlStatus ml_prior_default(double alpha, MlPrior **out);

/**
 * Prior from per-axis variances: `p_diag` (m^2, translation), `phi_diag`
 * (rad^2, rotation), `z_diag` (m^2, measurement), each a 3-element array,
 * scaled by `alpha` on the first two blocks.
 *
 * # Safety
 * Array pointers must be valid for 3 doubles; see `ml_prior_default`.
 */
MlStatus ml_prior_from_diagonals(const double *p_diag,
                                 const double *phi_diag,
                                 const double *z_diag,
                                 double alpha,
                                 MlPrior **out);

/**
 * New prior handle equal to `prior` at a different alpha.
 *
 * # Safety
 * All pointers must be valid.
 */
MlStatus ml_prior_with_alpha(const MlPrior *prior, double alpha, MlPrior **out);

/**
 * Releases a prior handle; null is a no-op.
 *
 * # Safety
 * `prior` must come from this library and not be freed twice.
 */
void ml_prior_free(MlPrior *prior);

/**
 * First-order propagation of one point through a noisy transform: mean,
 * 3x3 covariance, and its trace.
 *
 * # Safety
 * `point` must be valid for 3 doubles, `out` for one struct.
 */
MlStatus ml_propagate_point(const MlTransform *transform,
                            const MlPrior *prior,
                            const double *point,
                            MlPointUncertainty *out);

/**
 * Propagates `n_points` points (interleaved x, y, z) through the
 * transform, writing transformed points to `points_out` (same layout,
 * may alias `points`) and covariance traces to `traces_out`. Either
 * output may be null to skip it.
 *
 * # Safety
 * `points` must be valid for `3 * n_points` doubles; non-null outputs
 * must be valid for `3 * n_points` and `n_points` doubles respectively.
 */
MlStatus ml_propagate_cloud(const MlTransform *transform,
                            const MlPrior *prior,
                            const double *points,
                            size_t n_points,
                            double *points_out,
                            double *traces_out);

/**
 * Draws a sigma-bounded perturbation from the prior (deterministic in
 * `seed`) and injects it into the extrinsics: `t + rho`, `exp(phi^) R`.
 *
 * # Safety
 * All pointers must be valid; see `ml_transform_from_euler_rpy` for
 * ownership of `out`.
 */
MlStatus ml_inject_sampled(const MlTransform *extrinsics,
                           const MlPrior *prior,
                           uint64_t seed,
                           MlTransform **out);

/**
 * 3D intersection-over-union of two boxes.
 *
 * # Safety
 * All pointers must be valid.
 */
MlStatus ml_box_iou_3d(const MlBox *a, const MlBox *b, double *iou_out);

/**
 * Greedy non-maximum suppression. Writes the kept indices (descending
 * score order) to `keep_out` and their count to `n_keep_out`.
 *
 * # Safety
 * `boxes` must be valid for `n_boxes` structs and `keep_out` for
 * `n_boxes` size_t slots.
 */
MlStatus ml_box_nms(const MlBox *boxes,
                    size_t n_boxes,
                    double iou_threshold,
                    size_t *keep_out,
                    size_t *n_keep_out);

/**
 * Weighted least-squares plane fit in the parameterization `x . p = 1`.
 * `weights` may be null for a uniform fit. Writes the 3 coefficients to
 * `coefficients_out`.
 *
 * # Safety
 * `points` must be valid for `3 * n_points` doubles, `weights` (if
 * non-null) for `n_points`, and `coefficients_out` for 3.
 */
MlStatus ml_fit_plane(const double *points,
                      const double *weights,
                      size_t n_points,
                      double *coefficients_out);

/**
 * Converts covariance traces to fit weights `1 / (trace + 1e-12)`.
 *
 * # Safety
 * Both pointers must be valid for `n` doubles.
 */
MlStatus ml_weights_from_traces(const double *traces, size_t n, double *weights_out);

/**
 * Focal classification loss for predicted probability `p` of the true
 * class being positive. Writes the loss to `value_out` and, if non-null,
 * d(loss)/dp to `gradient_out`.
 *
 * # Safety
 * `value_out` must be valid; `gradient_out` may be null.
 */
MlStatus ml_focal_loss(double p,
                       bool is_positive,
                       double gamma,
                       double alpha,
                       double *value_out,
                       double *gradient_out);

/**
 * Smooth-L1 (Huber) regression loss between 8-element residual vectors.
 * Writes the summed loss to `value_out` and, if non-null, the 8-element
 * gradient with respect to `u` to `gradient_out`.
 *
 * # Safety
 * `u` and `u_star` must be valid for 8 doubles; `gradient_out` may be
 * null, otherwise valid for 8.
 */
MlStatus ml_smooth_l1(const double *u,
                      const double *u_star,
                      double *value_out,
                      double *gradient_out);

/**
 * Uncertainty regularizer `exp(1 - clamp(max_trace)) * |u7|` over a
 * 7-element refinement residual. Writes the loss to `value_out` and, if
 * non-null, the 7-element gradient to `gradient_out`.
 *
 * # Safety
 * `u7` must be valid for 7 doubles; `gradient_out` may be null,
 * otherwise valid for 7.
 */
MlStatus ml_uct_regularizer(double max_trace,
                            const double *u7,
                            double *value_out,
                            double *gradient_out);

/**
 * Total detection loss `regression + eta * classification +
 * lambda * regularizer` from already-computed component values.
 *
 * # Safety
 * `value_out` must be valid.
 */
MlStatus ml_total_loss(double regression,
                       double classification,
                       double regularizer,
                       double eta,
                       double lambda,
                       double *value_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTILIDAR_H */
