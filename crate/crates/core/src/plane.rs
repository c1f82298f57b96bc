//! Weighted least-squares plane fitting and the two-sensor robustness
//! sweep that compares uncertainty-weighted fits against uniform ones.
//!
//! Planes are parameterized as `{p : x . p = 1}`, the `Ax = b` form with
//! `b` all ones. Planes through the origin are outside this family and
//! surface as fit failures.

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::perturbation::{default_theta, inject, sample_perturbation_with, ThetaPrior};
use crate::propagation::propagate_cloud;
use crate::se3::RigidTransform;

/// Guard added to traces before inversion so perfectly certain points
/// get a large, finite weight.
const WEIGHT_EPS: f64 = 1e-12;

/// Plane `{p : x . p = 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneCoefficients {
    pub x: Vector3<f64>,
}

impl PlaneCoefficients {
    /// Distance from `p` to the plane.
    pub fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        (self.x.dot(p) - 1.0).abs() / self.x.norm()
    }
}

/// Solves `x* = (A^T W A)^{-1} A^T W 1` over the given points.
pub fn fit_plane(points: &[Vector3<f64>], weights: &[f64]) -> Result<PlaneCoefficients> {
    if points.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "point/weight length mismatch: {} vs {}",
            points.len(),
            weights.len()
        )));
    }
    if points.len() < 3 {
        return Err(Error::FitFailure("need at least 3 points".into()));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidArgument(
            "weights must be finite and non-negative".into(),
        ));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(Error::InvalidArgument(
            "weights must not all be zero".into(),
        ));
    }
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (p, &w) in points.iter().zip(weights) {
        normal += w * p * p.transpose();
        rhs += w * p;
    }
    // Relative rank test: det scales with the cube of the matrix size.
    let scale = normal.norm() / 3.0;
    if normal.determinant().abs() < 1e-12 * scale.powi(3).max(f64::MIN_POSITIVE) {
        return Err(Error::FitFailure(
            "rank-deficient normal matrix (degenerate points or plane through origin)".into(),
        ));
    }
    let x = normal
        .try_inverse()
        .ok_or_else(|| Error::FitFailure("normal matrix not invertible".into()))?
        * rhs;
    Ok(PlaneCoefficients { x })
}

/// Per-point weights `1 / (trace + eps)` from propagated traces.
pub fn weights_from_traces(traces: &[f64]) -> Vec<f64> {
    traces.iter().map(|t| 1.0 / (t + WEIGHT_EPS)).collect()
}

/// Synthetic planar scene shared by both sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub n_points: usize,
    /// Isotropic per-point noise std (m).
    pub noise_std: f64,
    /// Ground-truth plane coefficients.
    pub x_gt: Vector3<f64>,
    /// Half-extent of the sampled patch along each in-plane axis (m).
    pub extent: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_points: 10_000,
            noise_std: 0.02,
            // Gently tilted plane about 25 m from the origin, LiDAR-range
            // scale. At this distance the rotational lever arm dominates
            // the propagated traces, so downweighting the perturbed half
            // is decisive; much closer planes blur the weight contrast.
            x_gt: Vector3::new(0.002, 0.003, 0.04),
            extent: 10.0,
        }
    }
}

/// Two half-scenes plus the ground-truth plane coefficients.
pub type SceneSplit = (Vec<Vector3<f64>>, Vec<Vector3<f64>>, Vector3<f64>);

/// Samples noisy points on the ground-truth plane and splits them
/// randomly into two equal halves (first half gets the odd point).
pub fn make_scene(config: &SceneConfig, rng_seed: u64) -> Result<SceneSplit> {
    if config.n_points < 6 {
        return Err(Error::InvalidArgument(
            "scene needs at least 6 points".into(),
        ));
    }
    let norm2 = config.x_gt.norm_squared();
    if norm2 < 1e-12 {
        return Err(Error::InvalidArgument("x_gt must be non-zero".into()));
    }
    if config.noise_std < 0.0 || config.extent <= 0.0 {
        return Err(Error::InvalidArgument(
            "noise_std must be >= 0 and extent > 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    // Plane point closest to the origin plus an orthonormal in-plane basis.
    let anchor = config.x_gt / norm2;
    let normal = config.x_gt / norm2.sqrt();
    let seed_axis = if normal.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = normal.cross(&seed_axis).normalize();
    let v = normal.cross(&u);
    let mut points = Vec::with_capacity(config.n_points);
    for _ in 0..config.n_points {
        let a = rng.random_range(-config.extent..config.extent);
        let b = rng.random_range(-config.extent..config.extent);
        let noise = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ) * config.noise_std;
        points.push(anchor + a * u + b * v + noise);
    }
    let mut order: Vec<usize> = (0..config.n_points).collect();
    order.shuffle(&mut rng);
    let half = config.n_points.div_ceil(2);
    let cloud_a = order[..half].iter().map(|&i| points[i]).collect();
    let cloud_b = order[half..].iter().map(|&i| points[i]).collect();
    Ok((cloud_a, cloud_b, config.x_gt))
}

/// Mean fit errors at one alpha level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub alpha: f64,
    /// Mean `|x_gt - x_est|` with weights `1/tr(Xi)`, over successful trials.
    pub error_weighted: f64,
    /// Same with uniform weights.
    pub error_unweighted: f64,
    pub trials: usize,
    /// Trials where either fit failed (excluded from the means).
    pub failures: usize,
}

/// Sweep setup: scene parameters plus the second sensor's ground-truth
/// extrinsics and perturbation prior base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub scene: SceneConfig,
    pub extrinsics: RigidTransform,
    pub prior: ThetaPrior,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            scene: SceneConfig::default(),
            extrinsics: RigidTransform::from_euler_rpy(
                &Vector3::repeat(10.0_f64.to_radians()),
                Vector3::new(1.0, 1.0, 1.0),
            ),
            prior: default_theta(),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Independent per-trial stream so trials are order-free and parallelizable.
fn trial_seed(root: u64, alpha_index: usize, trial: usize) -> u64 {
    splitmix64(root ^ splitmix64(alpha_index as u64 ^ splitmix64(trial as u64)))
}

/// Scene stream, disjoint from the perturbation streams above because
/// `alpha_index` there is always a small index, never `!0`.
fn scene_seed(root: u64, trial: usize) -> u64 {
    splitmix64(root ^ splitmix64(!0u64 ^ splitmix64(trial as u64)))
}

/// Runs the two-sensor experiment over the alpha levels: each trial draws
/// a fresh scene (shared across alpha levels, so the sweep is paired in
/// the trial index), perturbs the second sensor's extrinsics, transforms
/// its cloud with the noisy extrinsics tagged with traces from the
/// alpha-scaled prior, and fits the joint cloud twice (weighted, uniform).
/// Averaging over scenes as well as perturbations keeps the reported
/// means estimates of expectations rather than draws conditioned on one
/// noise realization.
pub fn fitting_sweep(alphas: &[f64], trials: usize, rng_seed: u64) -> Result<Vec<FitReport>> {
    fitting_sweep_with(&SweepConfig::default(), alphas, trials, rng_seed)
}

/// [`fitting_sweep`] with an explicit configuration.
pub fn fitting_sweep_with(
    config: &SweepConfig,
    alphas: &[f64],
    trials: usize,
    rng_seed: u64,
) -> Result<Vec<FitReport>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let inverse = config.extrinsics.inverse();
    let reference_prior = config.prior.with_alpha(0.0)?;
    let mut scenes = Vec::with_capacity(trials);
    for trial in 0..trials {
        let (cloud_a, cloud_b, x_gt) = make_scene(&config.scene, scene_seed(rng_seed, trial))?;
        // What the second sensor actually measured, in its own frame.
        let raw_b: Vec<Vector3<f64>> = cloud_b.iter().map(|p| inverse.apply(p)).collect();
        // The reference sensor defines the base frame: measurement noise only.
        let tagged_a = propagate_cloud(
            &RigidTransform::identity(),
            &cloud_a,
            &reference_prior.effective(),
        );
        scenes.push((raw_b, tagged_a, x_gt));
    }

    let mut reports = Vec::with_capacity(alphas.len());
    for (ai, &alpha) in alphas.iter().enumerate() {
        let prior = config.prior.with_alpha(alpha)?;
        let effective = prior.effective();
        let mut sum_weighted = 0.0;
        let mut sum_unweighted = 0.0;
        let mut failures = 0usize;
        let mut successes = 0usize;
        for (trial, (raw_b, tagged_a, x_gt)) in scenes.iter().enumerate() {
            let x_gt = *x_gt;
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(rng_seed, ai, trial));
            let s = sample_perturbation_with(&prior, &mut rng);
            let noisy = inject(&config.extrinsics, &s);
            let tagged_b = propagate_cloud(&noisy, raw_b, &effective);

            let mut points = tagged_a.points().to_vec();
            points.extend_from_slice(tagged_b.points());
            let mut traces = tagged_a.traces().to_vec();
            traces.extend_from_slice(tagged_b.traces());

            let weighted = fit_plane(&points, &weights_from_traces(&traces));
            let unweighted = fit_plane(&points, &vec![1.0; points.len()]);
            match (weighted, unweighted) {
                (Ok(w), Ok(u)) => {
                    sum_weighted += (x_gt - w.x).norm();
                    sum_unweighted += (x_gt - u.x).norm();
                    successes += 1;
                }
                _ => failures += 1,
            }
        }
        if successes == 0 {
            return Err(Error::FitFailure(format!(
                "all {trials} trials failed at alpha {alpha}"
            )));
        }
        reports.push(FitReport {
            alpha,
            error_weighted: sum_weighted / successes as f64,
            error_unweighted: sum_unweighted / successes as f64,
            trials,
            failures,
        });
    }
    Ok(reports)
}
