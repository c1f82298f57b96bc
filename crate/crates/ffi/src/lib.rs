//! C ABI over the core kernels. Stateful objects cross the boundary as
//! opaque handles, bulk data as plain `double` arrays (points interleaved
//! x, y, z), and every fallible call returns an [`MlStatus`] code with a
//! human-readable detail retrievable via [`ml_last_error_message`].
//!
//! Ownership: `*_new`-style constructors hand out handles the caller must
//! release with the matching `*_free`; `free(NULL)` is a no-op. Output
//! buffers are caller-allocated; required capacities are documented per
//! function. No function stores the pointers it is given.

use std::cell::RefCell;
use std::ffi::{c_char, CString};

use multilidar::boxes::{iou_3d, nms_indices, Box3D, Residual8};
use multilidar::losses::{
    focal_loss, smooth_l1, total_loss, uct_regularizer, LossConfig, LossValue,
};
use multilidar::perturbation::{inject, sample_perturbation, ThetaPrior};
use multilidar::plane::{fit_plane, weights_from_traces};
use multilidar::propagation::{propagate_point, PerturbationPrior};
use multilidar::se3::RigidTransform;
use nalgebra::{SVector, Vector3};

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlStatus {
    MlOk = 0,
    /// A required pointer argument was null.
    MlNullPointer = 1,
    /// An argument violated a documented precondition.
    MlInvalidArgument = 2,
    /// A numeric routine failed (singular system, non-PSD matrix, ...).
    MlNumericalFailure = 3,
}

/// Rigid transform handle (rotation plus translation).
pub struct MlTransform(RigidTransform);

/// Perturbation prior handle: the 9x9 block-diagonal covariance over
/// translation, rotation, and measurement noise, plus the alpha scale
/// applied to the first two blocks.
pub struct MlPrior(ThetaPrior);

/// Detection box: bottom-center position, extents, yaw about +z.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MlBox {
    pub class_id: u32,
    /// Confidence in [0, 1].
    pub score: f64,
    /// Bottom-center position (m).
    pub center: [f64; 3],
    /// Extents (length, width, height), each > 0 (m).
    pub size: [f64; 3],
    /// Rotation about +z (rad).
    pub yaw: f64,
}

/// Propagated per-point uncertainty.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MlPointUncertainty {
    /// Transformed point (m).
    pub mean: [f64; 3],
    /// 3x3 covariance, row-major (m^2).
    pub covariance: [f64; 9],
    /// Trace of the covariance (m^2).
    pub trace: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: MlStatus, message: impl std::fmt::Display) -> MlStatus {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).expect("nul bytes stripped");
    });
    status
}

fn fail_core(err: multilidar::Error) -> MlStatus {
    let status = if err.exit_code() == 3 {
        MlStatus::MlNumericalFailure
    } else {
        MlStatus::MlInvalidArgument
    };
    fail(status, err)
}

fn null_arg(name: &str) -> MlStatus {
    fail(MlStatus::MlNullPointer, format!("{name} is null"))
}

/// Detail message for the most recent failure on this thread. Valid until
/// the next failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn ml_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static null-terminated string.
#[no_mangle]
pub extern "C" fn ml_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn vec3_arg(ptr: *const f64) -> Vector3<f64> {
    Vector3::new(*ptr, *ptr.add(1), *ptr.add(2))
}

unsafe fn write_vec3(out: *mut f64, v: &Vector3<f64>) {
    *out = v.x;
    *out.add(1) = v.y;
    *out.add(2) = v.z;
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Builds a transform from fixed-axis roll-pitch-yaw angles (rad) and a
/// translation (m): R = Rz(yaw) Ry(pitch) Rx(roll).
///
/// # Safety
/// `out` must be a valid pointer; on `MlOk` it receives a handle the
/// caller frees with `ml_transform_free`.
#[no_mangle]
pub unsafe extern "C" fn ml_transform_from_euler_rpy(
    roll_rad: f64,
    pitch_rad: f64,
    yaw_rad: f64,
    tx: f64,
    ty: f64,
    tz: f64,
    out: *mut *mut MlTransform,
) -> MlStatus {
    if out.is_null() {
        return null_arg("out");
    }
    if !finite(&[roll_rad, pitch_rad, yaw_rad, tx, ty, tz]) {
        return fail(MlStatus::MlInvalidArgument, "pose arguments must be finite");
    }
    let t = RigidTransform::from_euler_rpy(
        &Vector3::new(roll_rad, pitch_rad, yaw_rad),
        Vector3::new(tx, ty, tz),
    );
    *out = Box::into_raw(Box::new(MlTransform(t)));
    MlStatus::MlOk
}

/// Identity transform.
///
/// # Safety
/// `out` must be a valid pointer; see `ml_transform_from_euler_rpy`.
#[no_mangle]
pub unsafe extern "C" fn ml_transform_identity(out: *mut *mut MlTransform) -> MlStatus {
    if out.is_null() {
        return null_arg("out");
    }
    *out = Box::into_raw(Box::new(MlTransform(RigidTransform::identity())));
    MlStatus::MlOk
}

/// Composition `first_applied` then `second_applied` as a new handle.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_transform_compose(
    second_applied: *const MlTransform,
    first_applied: *const MlTransform,
    out: *mut *mut MlTransform,
) -> MlStatus {
    if second_applied.is_null() {
        return null_arg("second_applied");
    }
    if first_applied.is_null() {
        return null_arg("first_applied");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let composed = (*second_applied).0.compose(&(*first_applied).0);
    *out = Box::into_raw(Box::new(MlTransform(composed)));
    MlStatus::MlOk
}

/// Inverse transform as a new handle.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_transform_inverse(
    transform: *const MlTransform,
    out: *mut *mut MlTransform,
) -> MlStatus {
    if transform.is_null() {
        return null_arg("transform");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = Box::into_raw(Box::new(MlTransform((*transform).0.inverse())));
    MlStatus::MlOk
}

/// Applies the transform to one point: `point_out = R point_in + t`.
/// `point_in` and `point_out` are 3-element arrays and may alias.
///
/// # Safety
/// All pointers must be valid for 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn ml_transform_apply(
    transform: *const MlTransform,
    point_in: *const f64,
    point_out: *mut f64,
) -> MlStatus {
    if transform.is_null() {
        return null_arg("transform");
    }
    if point_in.is_null() {
        return null_arg("point_in");
    }
    if point_out.is_null() {
        return null_arg("point_out");
    }
    let mapped = (*transform).0.apply(&vec3_arg(point_in));
    write_vec3(point_out, &mapped);
    MlStatus::MlOk
}

/// Releases a transform handle; null is a no-op.
///
/// # Safety
/// `transform` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ml_transform_free(transform: *mut MlTransform) {
    if !transform.is_null() {
        drop(Box::from_raw(transform));
    }
}

/// Default prior: translation variances (1/20)^2 m^2, rotation (1/10)^2
/// rad^2, measurement (1/50)^2 m^2 per axis, at the given alpha.
///
/// # Safety
/// `out` must be a valid pointer; on `MlOk` it receives a handle the
/// caller frees with `ml_prior_free`.
#[no_mangle]
pub unsafe extern "C" fn ml_prior_default(alpha: f64, out: *mut *mut MlPrior) -> MlStatus {
    if out.is_null() {
        return null_arg("out");
    }
    match multilidar::perturbation::default_theta().with_alpha(alpha) {
        Ok(prior) => {
            *out = Box::into_raw(Box::new(MlPrior(prior)));
            MlStatus::MlOk
        }
        Err(e) => fail_core(e),
    }
}

/// Prior from per-axis variances: `p_diag` (m^2, translation), `phi_diag`
/// (rad^2, rotation), `z_diag` (m^2, measurement), each a 3-element array,
/// scaled by `alpha` on the first two blocks.
///
/// # Safety
/// Array pointers must be valid for 3 doubles; see `ml_prior_default`.
#[no_mangle]
pub unsafe extern "C" fn ml_prior_from_diagonals(
    p_diag: *const f64,
    phi_diag: *const f64,
    z_diag: *const f64,
    alpha: f64,
    out: *mut *mut MlPrior,
) -> MlStatus {
    if p_diag.is_null() {
        return null_arg("p_diag");
    }
    if phi_diag.is_null() {
        return null_arg("phi_diag");
    }
    if z_diag.is_null() {
        return null_arg("z_diag");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let read3 = |ptr: *const f64| [*ptr, *ptr.add(1), *ptr.add(2)];
    let base =
        match PerturbationPrior::from_diagonals(read3(p_diag), read3(phi_diag), read3(z_diag)) {
            Ok(base) => base,
            Err(e) => return fail_core(e),
        };
    match ThetaPrior::new(base, alpha) {
        Ok(prior) => {
            *out = Box::into_raw(Box::new(MlPrior(prior)));
            MlStatus::MlOk
        }
        Err(e) => fail_core(e),
    }
}

/// New prior handle equal to `prior` at a different alpha.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_prior_with_alpha(
    prior: *const MlPrior,
    alpha: f64,
    out: *mut *mut MlPrior,
) -> MlStatus {
    if prior.is_null() {
        return null_arg("prior");
    }
    if out.is_null() {
        return null_arg("out");
    }
    match (*prior).0.with_alpha(alpha) {
        Ok(scaled) => {
            *out = Box::into_raw(Box::new(MlPrior(scaled)));
            MlStatus::MlOk
        }
        Err(e) => fail_core(e),
    }
}

/// Releases a prior handle; null is a no-op.
///
/// # Safety
/// `prior` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ml_prior_free(prior: *mut MlPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

/// First-order propagation of one point through a noisy transform: mean,
/// 3x3 covariance, and its trace.
///
/// # Safety
/// `point` must be valid for 3 doubles, `out` for one struct.
#[no_mangle]
pub unsafe extern "C" fn ml_propagate_point(
    transform: *const MlTransform,
    prior: *const MlPrior,
    point: *const f64,
    out: *mut MlPointUncertainty,
) -> MlStatus {
    if transform.is_null() {
        return null_arg("transform");
    }
    if prior.is_null() {
        return null_arg("prior");
    }
    if point.is_null() {
        return null_arg("point");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let p = vec3_arg(point);
    if !finite(p.as_slice()) {
        return fail(MlStatus::MlInvalidArgument, "point must be finite");
    }
    let result = propagate_point(&(*transform).0, &p, &(*prior).0.effective());
    let mut covariance = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            covariance[3 * r + c] = result.covariance[(r, c)];
        }
    }
    *out = MlPointUncertainty {
        mean: [result.mean.x, result.mean.y, result.mean.z],
        covariance,
        trace: result.trace,
    };
    MlStatus::MlOk
}

/// Propagates `n_points` points (interleaved x, y, z) through the
/// transform, writing transformed points to `points_out` (same layout,
/// may alias `points`) and covariance traces to `traces_out`. Either
/// output may be null to skip it.
///
/// # Safety
/// `points` must be valid for `3 * n_points` doubles; non-null outputs
/// must be valid for `3 * n_points` and `n_points` doubles respectively.
#[no_mangle]
pub unsafe extern "C" fn ml_propagate_cloud(
    transform: *const MlTransform,
    prior: *const MlPrior,
    points: *const f64,
    n_points: usize,
    points_out: *mut f64,
    traces_out: *mut f64,
) -> MlStatus {
    if transform.is_null() {
        return null_arg("transform");
    }
    if prior.is_null() {
        return null_arg("prior");
    }
    if points.is_null() && n_points > 0 {
        return null_arg("points");
    }
    let effective = (*prior).0.effective();
    for i in 0..n_points {
        let p = vec3_arg(points.add(3 * i));
        if !finite(p.as_slice()) {
            return fail(
                MlStatus::MlInvalidArgument,
                format!("point {i} must be finite"),
            );
        }
        let result = propagate_point(&(*transform).0, &p, &effective);
        if !points_out.is_null() {
            write_vec3(points_out.add(3 * i), &result.mean);
        }
        if !traces_out.is_null() {
            *traces_out.add(i) = result.trace;
        }
    }
    MlStatus::MlOk
}

/// Draws a sigma-bounded perturbation from the prior (deterministic in
/// `seed`) and injects it into the extrinsics: `t + rho`, `exp(phi^) R`.
///
/// # Safety
/// All pointers must be valid; see `ml_transform_from_euler_rpy` for
/// ownership of `out`.
#[no_mangle]
pub unsafe extern "C" fn ml_inject_sampled(
    extrinsics: *const MlTransform,
    prior: *const MlPrior,
    seed: u64,
    out: *mut *mut MlTransform,
) -> MlStatus {
    if extrinsics.is_null() {
        return null_arg("extrinsics");
    }
    if prior.is_null() {
        return null_arg("prior");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let sample = sample_perturbation(&(*prior).0, seed);
    let noisy = inject(&(*extrinsics).0, &sample);
    *out = Box::into_raw(Box::new(MlTransform(noisy)));
    MlStatus::MlOk
}

fn box_from_c(b: &MlBox) -> multilidar::Result<Box3D> {
    Box3D::new(
        b.class_id,
        b.score,
        Vector3::new(b.center[0], b.center[1], b.center[2]),
        Vector3::new(b.size[0], b.size[1], b.size[2]),
        b.yaw,
    )
}

/// 3D intersection-over-union of two boxes.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_box_iou_3d(
    a: *const MlBox,
    b: *const MlBox,
    iou_out: *mut f64,
) -> MlStatus {
    if a.is_null() {
        return null_arg("a");
    }
    if b.is_null() {
        return null_arg("b");
    }
    if iou_out.is_null() {
        return null_arg("iou_out");
    }
    let box_a = match box_from_c(&*a) {
        Ok(v) => v,
        Err(e) => return fail_core(e),
    };
    let box_b = match box_from_c(&*b) {
        Ok(v) => v,
        Err(e) => return fail_core(e),
    };
    *iou_out = iou_3d(&box_a, &box_b);
    MlStatus::MlOk
}

/// Greedy non-maximum suppression. Writes the kept indices (descending
/// score order) to `keep_out` and their count to `n_keep_out`.
///
/// # Safety
/// `boxes` must be valid for `n_boxes` structs and `keep_out` for
/// `n_boxes` size_t slots.
#[no_mangle]
pub unsafe extern "C" fn ml_box_nms(
    boxes: *const MlBox,
    n_boxes: usize,
    iou_threshold: f64,
    keep_out: *mut usize,
    n_keep_out: *mut usize,
) -> MlStatus {
    if boxes.is_null() && n_boxes > 0 {
        return null_arg("boxes");
    }
    if keep_out.is_null() && n_boxes > 0 {
        return null_arg("keep_out");
    }
    if n_keep_out.is_null() {
        return null_arg("n_keep_out");
    }
    let raw = std::slice::from_raw_parts(boxes, n_boxes);
    let mut converted = Vec::with_capacity(n_boxes);
    for (i, b) in raw.iter().enumerate() {
        match box_from_c(b) {
            Ok(v) => converted.push(v),
            Err(e) => return fail(MlStatus::MlInvalidArgument, format!("box {i}: {e}")),
        }
    }
    match nms_indices(&converted, iou_threshold) {
        Ok(kept) => {
            for (slot, index) in kept.iter().enumerate() {
                *keep_out.add(slot) = *index;
            }
            *n_keep_out = kept.len();
            MlStatus::MlOk
        }
        Err(e) => fail_core(e),
    }
}

/// Weighted least-squares plane fit in the parameterization `x . p = 1`.
/// `weights` may be null for a uniform fit. Writes the 3 coefficients to
/// `coefficients_out`.
///
/// # Safety
/// `points` must be valid for `3 * n_points` doubles, `weights` (if
/// non-null) for `n_points`, and `coefficients_out` for 3.
#[no_mangle]
pub unsafe extern "C" fn ml_fit_plane(
    points: *const f64,
    weights: *const f64,
    n_points: usize,
    coefficients_out: *mut f64,
) -> MlStatus {
    if points.is_null() && n_points > 0 {
        return null_arg("points");
    }
    if coefficients_out.is_null() {
        return null_arg("coefficients_out");
    }
    let cloud: Vec<Vector3<f64>> = (0..n_points).map(|i| vec3_arg(points.add(3 * i))).collect();
    let weight_vec = if weights.is_null() {
        vec![1.0; n_points]
    } else {
        std::slice::from_raw_parts(weights, n_points).to_vec()
    };
    match fit_plane(&cloud, &weight_vec) {
        Ok(plane) => {
            write_vec3(coefficients_out, &plane.x);
            MlStatus::MlOk
        }
        Err(e) => fail_core(e),
    }
}

/// Converts covariance traces to fit weights `1 / (trace + 1e-12)`.
///
/// # Safety
/// Both pointers must be valid for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ml_weights_from_traces(
    traces: *const f64,
    n: usize,
    weights_out: *mut f64,
) -> MlStatus {
    if traces.is_null() && n > 0 {
        return null_arg("traces");
    }
    if weights_out.is_null() && n > 0 {
        return null_arg("weights_out");
    }
    let weights = weights_from_traces(std::slice::from_raw_parts(traces, n));
    for (i, w) in weights.iter().enumerate() {
        *weights_out.add(i) = *w;
    }
    MlStatus::MlOk
}

/// Focal classification loss for predicted probability `p` of the true
/// class being positive. Writes the loss to `value_out` and, if non-null,
/// d(loss)/dp to `gradient_out`.
///
/// # Safety
/// `value_out` must be valid; `gradient_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn ml_focal_loss(
    p: f64,
    is_positive: bool,
    gamma: f64,
    alpha: f64,
    value_out: *mut f64,
    gradient_out: *mut f64,
) -> MlStatus {
    if value_out.is_null() {
        return null_arg("value_out");
    }
    let cfg = LossConfig {
        focal_gamma: gamma,
        focal_alpha: alpha,
        ..LossConfig::default()
    };
    match focal_loss(p, is_positive, &cfg) {
        Ok(loss) => {
            *value_out = loss.value;
            if !gradient_out.is_null() {
                *gradient_out = loss.gradient[0];
            }
            MlStatus::MlOk
        }
        Err(e) => fail_core(e),
    }
}

/// Smooth-L1 (Huber) regression loss between 8-element residual vectors.
/// Writes the summed loss to `value_out` and, if non-null, the 8-element
/// gradient with respect to `u` to `gradient_out`.
///
/// # Safety
/// `u` and `u_star` must be valid for 8 doubles; `gradient_out` may be
/// null, otherwise valid for 8.
#[no_mangle]
pub unsafe extern "C" fn ml_smooth_l1(
    u: *const f64,
    u_star: *const f64,
    value_out: *mut f64,
    gradient_out: *mut f64,
) -> MlStatus {
    if u.is_null() {
        return null_arg("u");
    }
    if u_star.is_null() {
        return null_arg("u_star");
    }
    if value_out.is_null() {
        return null_arg("value_out");
    }
    let lhs = Residual8::from_column_slice(std::slice::from_raw_parts(u, 8));
    let rhs = Residual8::from_column_slice(std::slice::from_raw_parts(u_star, 8));
    if !finite(lhs.as_slice()) || !finite(rhs.as_slice()) {
        return fail(MlStatus::MlInvalidArgument, "residuals must be finite");
    }
    let loss = smooth_l1(&lhs, &rhs);
    *value_out = loss.value;
    if !gradient_out.is_null() {
        for i in 0..8 {
            *gradient_out.add(i) = loss.gradient[i];
        }
    }
    MlStatus::MlOk
}

/// Uncertainty regularizer `exp(1 - clamp(max_trace)) * |u7|` over a
/// 7-element refinement residual. Writes the loss to `value_out` and, if
/// non-null, the 7-element gradient to `gradient_out`.
///
/// # Safety
/// `u7` must be valid for 7 doubles; `gradient_out` may be null,
/// otherwise valid for 7.
#[no_mangle]
pub unsafe extern "C" fn ml_uct_regularizer(
    max_trace: f64,
    u7: *const f64,
    value_out: *mut f64,
    gradient_out: *mut f64,
) -> MlStatus {
    if u7.is_null() {
        return null_arg("u7");
    }
    if value_out.is_null() {
        return null_arg("value_out");
    }
    let residual = SVector::<f64, 7>::from_column_slice(std::slice::from_raw_parts(u7, 7));
    match uct_regularizer(max_trace, &residual, &LossConfig::default()) {
        Ok(loss) => {
            *value_out = loss.value;
            if !gradient_out.is_null() {
                for i in 0..7 {
                    *gradient_out.add(i) = loss.gradient[i];
                }
            }
            MlStatus::MlOk
        }
        Err(e) => fail_core(e),
    }
}

/// Total detection loss `regression + eta * classification +
/// lambda * regularizer` from already-computed component values.
///
/// # Safety
/// `value_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_total_loss(
    regression: f64,
    classification: f64,
    regularizer: f64,
    eta: f64,
    lambda: f64,
    value_out: *mut f64,
) -> MlStatus {
    if value_out.is_null() {
        return null_arg("value_out");
    }
    if !finite(&[regression, classification, regularizer, eta, lambda]) {
        return fail(MlStatus::MlInvalidArgument, "loss terms must be finite");
    }
    let cfg = LossConfig {
        eta,
        lambda,
        ..LossConfig::default()
    };
    let wrap1 = LossValue::<1> {
        value: classification,
        gradient: SVector::zeros(),
    };
    let wrap7 = LossValue::<7> {
        value: regularizer,
        gradient: SVector::zeros(),
    };
    let wrap8 = LossValue::<8> {
        value: regression,
        gradient: SVector::zeros(),
    };
    *value_out = total_loss(&wrap8, &wrap1, &wrap7, &cfg);
    MlStatus::MlOk
}
