//! Exercises the C ABI from Rust (null handling, status codes, numeric
//! agreement with the core crate) and, at the end, from an actual C
//! program compiled against the generated header and static library.

use std::ffi::CStr;
use std::ptr;

use multilidar::boxes::{iou_3d, nms_indices, Box3D};
use multilidar::perturbation::default_theta;
use multilidar::propagation::propagate_point;
use multilidar::se3::RigidTransform;
use nalgebra::Vector3;

use multilidar_ffi::*;

fn make_transform(rpy: [f64; 3], t: [f64; 3]) -> *mut MlTransform {
    let mut handle: *mut MlTransform = ptr::null_mut();
    let status = unsafe {
        ml_transform_from_euler_rpy(rpy[0], rpy[1], rpy[2], t[0], t[1], t[2], &mut handle)
    };
    assert_eq!(status, MlStatus::MlOk);
    assert!(!handle.is_null());
    handle
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(ml_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn version_is_a_static_string() {
    let version = unsafe { CStr::from_ptr(ml_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn transform_apply_matches_core() {
    let rpy = [0.2, -0.1, 0.7];
    let t = [1.0, -2.0, 0.5];
    let handle = make_transform(rpy, t);
    let reference = RigidTransform::from_euler_rpy(
        &Vector3::new(rpy[0], rpy[1], rpy[2]),
        Vector3::new(t[0], t[1], t[2]),
    );
    let point = [3.0, -1.0, 2.0];
    let mut out = [0.0; 3];
    let status = unsafe { ml_transform_apply(handle, point.as_ptr(), out.as_mut_ptr()) };
    assert_eq!(status, MlStatus::MlOk);
    let expected = reference.apply(&Vector3::new(point[0], point[1], point[2]));
    for i in 0..3 {
        assert!((out[i] - expected[i]).abs() < 1e-15);
    }
    unsafe { ml_transform_free(handle) };
}

#[test]
fn inverse_composes_to_identity() {
    let handle = make_transform([0.3, 0.1, -0.4], [2.0, 0.0, -1.0]);
    let mut inverse: *mut MlTransform = ptr::null_mut();
    let mut round_trip: *mut MlTransform = ptr::null_mut();
    unsafe {
        assert_eq!(ml_transform_inverse(handle, &mut inverse), MlStatus::MlOk);
        assert_eq!(
            ml_transform_compose(inverse, handle, &mut round_trip),
            MlStatus::MlOk
        );
        let point = [0.5, 6.0, -2.5];
        let mut mapped = [0.0; 3];
        assert_eq!(
            ml_transform_apply(round_trip, point.as_ptr(), mapped.as_mut_ptr()),
            MlStatus::MlOk
        );
        for i in 0..3 {
            assert!((mapped[i] - point[i]).abs() < 1e-12);
        }
        ml_transform_free(handle);
        ml_transform_free(inverse);
        ml_transform_free(round_trip);
    }
}

#[test]
fn propagate_point_matches_core() {
    let rpy = [
        10.0_f64.to_radians(),
        10.0_f64.to_radians(),
        10.0_f64.to_radians(),
    ];
    let t = [1.0, 1.0, 1.0];
    let transform = make_transform(rpy, t);
    let mut prior: *mut MlPrior = ptr::null_mut();
    unsafe {
        assert_eq!(ml_prior_default(1.0, &mut prior), MlStatus::MlOk);
    }
    let point = [10.0, 10.0, 10.0];
    let mut out = MlPointUncertainty {
        mean: [0.0; 3],
        covariance: [0.0; 9],
        trace: 0.0,
    };
    let status = unsafe { ml_propagate_point(transform, prior, point.as_ptr(), &mut out) };
    assert_eq!(status, MlStatus::MlOk);

    let reference = propagate_point(
        &RigidTransform::from_euler_rpy(
            &Vector3::new(rpy[0], rpy[1], rpy[2]),
            Vector3::new(t[0], t[1], t[2]),
        ),
        &Vector3::new(point[0], point[1], point[2]),
        &default_theta().effective(),
    );
    for i in 0..3 {
        assert!((out.mean[i] - reference.mean[i]).abs() < 1e-15);
        for j in 0..3 {
            assert!((out.covariance[3 * i + j] - reference.covariance[(i, j)]).abs() < 1e-15);
        }
    }
    assert!((out.trace - reference.trace).abs() < 1e-15);
    unsafe {
        ml_prior_free(prior);
        ml_transform_free(transform);
    }
}

#[test]
fn cloud_propagation_aliases_and_scales_with_alpha() {
    let transform = make_transform([0.0, 0.0, 1.2], [0.3, -0.2, 1.9]);
    let mut base: *mut MlPrior = ptr::null_mut();
    let mut scaled: *mut MlPrior = ptr::null_mut();
    unsafe {
        assert_eq!(ml_prior_default(1.0, &mut base), MlStatus::MlOk);
        assert_eq!(ml_prior_with_alpha(base, 0.0, &mut scaled), MlStatus::MlOk);
    }
    let mut points = [1.0, 2.0, 3.0, -4.0, 0.5, 0.0, 7.0, -7.0, 2.0];
    let mut traces_full = [0.0; 3];
    let mut traces_zero = [0.0; 3];
    unsafe {
        assert_eq!(
            ml_propagate_cloud(
                transform,
                base,
                points.as_ptr(),
                3,
                ptr::null_mut(),
                traces_full.as_mut_ptr()
            ),
            MlStatus::MlOk
        );
        // In-place transform: output aliases the input buffer.
        assert_eq!(
            ml_propagate_cloud(
                transform,
                scaled,
                points.as_ptr(),
                3,
                points.as_mut_ptr(),
                traces_zero.as_mut_ptr()
            ),
            MlStatus::MlOk
        );
        ml_prior_free(base);
        ml_prior_free(scaled);
        ml_transform_free(transform);
    }
    // Alpha zero leaves only the fixed measurement block.
    for (full, zero) in traces_full.iter().zip(&traces_zero) {
        assert!(full > zero);
        assert!((zero - 3.0 * 0.0004).abs() < 1e-15);
    }
    // Aliased output actually moved the points.
    assert!((points[0] - 1.0).abs() > 0.1);
}

#[test]
fn injected_extrinsics_are_deterministic_and_bounded() {
    let transform = make_transform([0.0, 0.0, 0.3], [1.0, 2.0, 0.0]);
    let mut prior: *mut MlPrior = ptr::null_mut();
    let mut noisy_a: *mut MlTransform = ptr::null_mut();
    let mut noisy_b: *mut MlTransform = ptr::null_mut();
    unsafe {
        assert_eq!(ml_prior_default(0.1, &mut prior), MlStatus::MlOk);
        assert_eq!(
            ml_inject_sampled(transform, prior, 42, &mut noisy_a),
            MlStatus::MlOk
        );
        assert_eq!(
            ml_inject_sampled(transform, prior, 42, &mut noisy_b),
            MlStatus::MlOk
        );
        let probe = [5.0, -3.0, 1.0];
        let mut via_a = [0.0; 3];
        let mut via_b = [0.0; 3];
        assert_eq!(
            ml_transform_apply(noisy_a, probe.as_ptr(), via_a.as_mut_ptr()),
            MlStatus::MlOk
        );
        assert_eq!(
            ml_transform_apply(noisy_b, probe.as_ptr(), via_b.as_mut_ptr()),
            MlStatus::MlOk
        );
        assert_eq!(via_a, via_b);
        // Sigma bounding keeps the translation within 1 sigma per axis.
        let mut clean = [0.0; 3];
        assert_eq!(
            ml_transform_apply(transform, [0.0; 3].as_ptr(), clean.as_mut_ptr()),
            MlStatus::MlOk
        );
        let mut shifted = [0.0; 3];
        assert_eq!(
            ml_transform_apply(noisy_a, [0.0; 3].as_ptr(), shifted.as_mut_ptr()),
            MlStatus::MlOk
        );
        let sigma = (0.1_f64 * 0.0025).sqrt();
        for i in 0..3 {
            assert!((shifted[i] - clean[i]).abs() <= sigma + 1e-12);
        }
        ml_transform_free(noisy_a);
        ml_transform_free(noisy_b);
        ml_transform_free(transform);
        ml_prior_free(prior);
    }
}

fn c_box(score: f64, center: [f64; 3], size: [f64; 3], yaw: f64) -> MlBox {
    MlBox {
        class_id: 0,
        score,
        center,
        size,
        yaw,
    }
}

#[test]
fn iou_and_nms_match_core() {
    let a = c_box(0.9, [0.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.3);
    let b = c_box(0.8, [0.5, 0.2, 0.1], [4.0, 2.0, 1.5], 0.4);
    let c = c_box(0.7, [10.0, 10.0, 0.0], [4.0, 2.0, 1.5], 0.0);
    let mut iou = -1.0;
    unsafe {
        assert_eq!(ml_box_iou_3d(&a, &b, &mut iou), MlStatus::MlOk);
    }
    let to_core = |b: &MlBox| {
        Box3D::new(
            b.class_id,
            b.score,
            Vector3::new(b.center[0], b.center[1], b.center[2]),
            Vector3::new(b.size[0], b.size[1], b.size[2]),
            b.yaw,
        )
        .unwrap()
    };
    let expected = iou_3d(&to_core(&a), &to_core(&b));
    assert!((iou - expected).abs() < 1e-15);

    let boxes = [a, b, c];
    let core_boxes: Vec<Box3D> = boxes.iter().map(to_core).collect();
    let mut keep = [usize::MAX; 3];
    let mut n_keep = 0usize;
    unsafe {
        assert_eq!(
            ml_box_nms(boxes.as_ptr(), 3, 0.1, keep.as_mut_ptr(), &mut n_keep),
            MlStatus::MlOk
        );
    }
    let expected = nms_indices(&core_boxes, 0.1).unwrap();
    assert_eq!(&keep[..n_keep], expected.as_slice());
}

#[test]
fn plane_fit_recovers_weighted_solution() {
    // Grid on the plane x . p = 1 for x = (0, 0, 0.5), plus an outlier
    // that only the weighted fit ignores.
    let x_gt = [0.0, 0.0, 0.5];
    let mut points = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            points.extend_from_slice(&[i as f64, j as f64, 2.0]);
        }
    }
    points.extend_from_slice(&[1.5, 1.5, 50.0]);
    let n = points.len() / 3;
    let mut traces = vec![1e-4; n];
    traces[n - 1] = 1e6;
    let mut weights = vec![0.0; n];
    let mut coefficients = [0.0; 3];
    unsafe {
        assert_eq!(
            ml_weights_from_traces(traces.as_ptr(), n, weights.as_mut_ptr()),
            MlStatus::MlOk
        );
        assert_eq!(
            ml_fit_plane(
                points.as_ptr(),
                weights.as_ptr(),
                n,
                coefficients.as_mut_ptr()
            ),
            MlStatus::MlOk
        );
    }
    for i in 0..3 {
        assert!((coefficients[i] - x_gt[i]).abs() < 1e-6);
    }
    // The uniform fit is dragged off the plane by the outlier.
    unsafe {
        assert_eq!(
            ml_fit_plane(points.as_ptr(), ptr::null(), n, coefficients.as_mut_ptr()),
            MlStatus::MlOk
        );
    }
    assert!((coefficients[2] - x_gt[2]).abs() > 1e-3);
}

#[test]
fn losses_cross_check_core_values() {
    let mut value = 0.0;
    let mut gradient = 0.0;
    unsafe {
        assert_eq!(
            ml_focal_loss(0.7, true, 2.0, 0.25, &mut value, &mut gradient),
            MlStatus::MlOk
        );
    }
    // -0.25 * 0.3^2 * ln(0.7)
    assert!((value - (-0.25 * 0.09 * 0.7_f64.ln())).abs() < 1e-15);
    assert!(gradient < 0.0);

    let u = [0.3, -0.2, 0.1, 0.0, 0.4, -0.1, 0.05, 0.99];
    let u_star = [0.0; 8];
    let mut grad8 = [0.0; 8];
    unsafe {
        assert_eq!(
            ml_smooth_l1(u.as_ptr(), u_star.as_ptr(), &mut value, grad8.as_mut_ptr()),
            MlStatus::MlOk
        );
    }
    let expected: f64 = u.iter().map(|d| 0.5 * d * d).sum();
    assert!((value - expected).abs() < 1e-15);
    for i in 0..8 {
        assert!((grad8[i] - u[i]).abs() < 1e-15);
    }

    let u7 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    unsafe {
        assert_eq!(
            ml_uct_regularizer(0.5, u7.as_ptr(), &mut value, ptr::null_mut()),
            MlStatus::MlOk
        );
    }
    assert_eq!(value, 0.5_f64.exp());

    unsafe {
        assert_eq!(
            ml_total_loss(1.0, 1.0, 1.0, 2.0, 0.005, &mut value),
            MlStatus::MlOk
        );
    }
    assert_eq!(value, 3.005);
}

#[test]
fn error_paths_report_status_and_message() {
    unsafe {
        assert_eq!(
            ml_transform_from_euler_rpy(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, ptr::null_mut()),
            MlStatus::MlNullPointer
        );
        assert!(last_error().contains("out"));

        let mut handle: *mut MlTransform = ptr::null_mut();
        assert_eq!(
            ml_transform_from_euler_rpy(f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0, &mut handle),
            MlStatus::MlInvalidArgument
        );
        assert!(last_error().contains("finite"));

        let mut prior: *mut MlPrior = ptr::null_mut();
        assert_eq!(
            ml_prior_default(-1.0, &mut prior),
            MlStatus::MlInvalidArgument
        );

        // A negative variance is a non-PSD prior: numerical-domain failure.
        let p = [1.0, 0.0, 0.0];
        let phi = [1.0, 0.0, 0.0];
        let z = [-1.0, 0.0, 0.0];
        assert_eq!(
            ml_prior_from_diagonals(p.as_ptr(), phi.as_ptr(), z.as_ptr(), 1.0, &mut prior),
            MlStatus::MlNumericalFailure
        );
        assert!(last_error().contains("semidefinite"));

        // Collinear points: numerically singular normal equations.
        let line: Vec<f64> = (0..12).map(|i| (i / 3 * (1 + i % 3)) as f64).collect();
        let mut coefficients = [0.0; 3];
        assert_eq!(
            ml_fit_plane(line.as_ptr(), ptr::null(), 4, coefficients.as_mut_ptr()),
            MlStatus::MlNumericalFailure
        );

        let bad = c_box(2.0, [0.0; 3], [1.0; 3], 0.0);
        let good = c_box(0.5, [0.0; 3], [1.0; 3], 0.0);
        let mut iou = 0.0;
        assert_eq!(
            ml_box_iou_3d(&bad, &good, &mut iou),
            MlStatus::MlInvalidArgument
        );
        assert!(last_error().contains("score"));

        let mut value = 0.0;
        assert_eq!(
            ml_focal_loss(1.5, true, 2.0, 0.25, &mut value, ptr::null_mut()),
            MlStatus::MlInvalidArgument
        );

        // Frees tolerate null.
        ml_transform_free(ptr::null_mut());
        ml_prior_free(ptr::null_mut());
    }
}

/// Compiles and runs an actual C program against the generated header and
/// the static library produced by this build.
#[test]
fn c_program_links_and_runs() {
    let manifest = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(
        header_dir.join("multilidar.h").is_file(),
        "cbindgen header missing"
    );

    // target/<profile>/deps/ffi-<hash> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let static_lib = profile_dir.join("libmultilidar_ffi.a");
    assert!(
        static_lib.is_file(),
        "static library not found at {}",
        static_lib.display()
    );

    let work = std::env::temp_dir().join(format!("ml-ffi-c-{}", std::process::id()));
    std::fs::create_dir_all(&work).unwrap();
    let source = work.join("smoke.c");
    std::fs::write(
        &source,
        r#"
#include <stdio.h>
#include <string.h>
#include "multilidar.h"

int main(void) {
    if (strlen(ml_version()) == 0) return 1;

    MlTransform *t = NULL;
    if (ml_transform_from_euler_rpy(0.17453292519943295, 0.17453292519943295,
                                    0.17453292519943295, 1.0, 1.0, 1.0,
                                    &t) != ML_OK) return 2;
    MlPrior *prior = NULL;
    if (ml_prior_default(1.0, &prior) != ML_OK) return 3;

    double point[3] = {10.0, 10.0, 10.0};
    MlPointUncertainty u;
    if (ml_propagate_point(t, prior, point, &u) != ML_OK) return 4;
    if (!(u.trace > 6.0 && u.trace < 8.0)) return 5;
    if (!(u.covariance[1] == u.covariance[3])) return 6;

    MlBox a = {0, 0.9, {0.0, 0.0, 0.0}, {4.0, 2.0, 1.5}, 0.0};
    double iou = -1.0;
    if (ml_box_iou_3d(&a, &a, &iou) != ML_OK) return 7;
    if (!(iou > 0.999999 && iou < 1.000001)) return 8;

    if (ml_propagate_point(NULL, prior, point, &u) != ML_NULL_POINTER) return 9;
    if (strlen(ml_last_error_message()) == 0) return 10;

    ml_prior_free(prior);
    ml_transform_free(t);
    printf("c smoke ok\n");
    return 0;
}
"#,
    )
    .unwrap();

    let binary = work.join("smoke");
    let compile = std::process::Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header_dir)
        .arg(&source)
        .arg(&static_lib)
        .arg("-lpthread")
        .arg("-ldl")
        .arg("-lm")
        .arg("-o")
        .arg(&binary)
        .output()
        .expect("cc is available");
    assert!(
        compile.status.success(),
        "compile failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = std::process::Command::new(&binary).output().unwrap();
    assert!(run.status.success(), "smoke exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout), "c smoke ok\n");
}
