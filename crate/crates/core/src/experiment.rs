//! End-to-end experiments behind the CLI: the worked propagation example
//! and the miscalibration robustness sweep over fusion schemes.

use nalgebra::{Matrix3, Vector3};

use crate::boxes::Box3D;
use crate::config::{RigConfig, SensorConfig};
use crate::detect::detect;
use crate::error::Result;
use crate::eval::{evaluate, Difficulty, EvalConfig};
use crate::fusion::{feature_fuse, input_fuse, result_fuse, voxelize_mean, SensorRig, VoxelGrid};
use crate::perturbation::{inject, sample_perturbation};
use crate::propagation::{
    propagate_point_with, PerturbationModel, PerturbationPrior, TaggedPointCloud,
};
use crate::scene::generate_scene;
use crate::se3::{RigidTransform, Rotation};

/// One worked-example row: covariance of a propagated landmark at a given
/// miscalibration level, split into the alpha-scaled extrinsic part and
/// the full matrix including measurement noise.
#[derive(Debug, Clone)]
pub struct ExampleRow {
    pub alpha: f64,
    pub extrinsic: Matrix3<f64>,
    pub full: Matrix3<f64>,
    pub per_axis_std: [f64; 3],
}

/// Propagates `landmark` through the sensor's extrinsics at each alpha.
/// Uses the left-multiplicative pose perturbation, whose rotation block
/// takes its lever arm about the base origin.
pub fn propagate_example(
    sensor: &SensorConfig,
    landmark: &Vector3<f64>,
    alphas: &[f64],
) -> Result<Vec<ExampleRow>> {
    let transform = sensor.extrinsics();
    let theta = sensor.theta()?;
    let base = *theta.base();
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let full_prior = theta.with_alpha(alpha)?.effective();
        let ext_prior = PerturbationPrior::new(
            base.translation_cov() * alpha,
            base.rotation_cov() * alpha,
            Matrix3::zeros(),
        )?;
        let model = PerturbationModel::LeftSe3;
        let full = propagate_point_with(model, &transform, landmark, &full_prior).covariance;
        let extrinsic = propagate_point_with(model, &transform, landmark, &ext_prior).covariance;
        let per_axis_std = [
            full[(0, 0)].max(0.0).sqrt(),
            full[(1, 1)].max(0.0).sqrt(),
            full[(2, 2)].max(0.0).sqrt(),
        ];
        rows.push(ExampleRow {
            alpha,
            extrinsic,
            full,
            per_axis_std,
        });
    }
    Ok(rows)
}

/// Mean average precision per (alpha, fusion scheme) over the swept seeds.
/// Schemes appear in a fixed order: input, feature, result, then one row
/// per single sensor.
#[derive(Debug, Clone)]
pub struct RobustnessRow {
    pub alpha: f64,
    pub scheme: String,
    /// AP per difficulty tier, indexed easy, moderate, hard.
    pub ap: [f64; 3],
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn derived_seed(root: u64, stream: u64, a: u64, b: u64) -> u64 {
    splitmix64(root ^ splitmix64(stream ^ splitmix64(a ^ splitmix64(b))))
}

/// Projects a perturbed extrinsic onto its nearest pure-yaw pose, which is
/// all a yaw-parameterized box transform can consume.
fn yaw_projected(t: &RigidTransform) -> RigidTransform {
    let m = t.rotation.matrix();
    RigidTransform {
        rotation: Rotation::from_yaw(m[(1, 0)].atan2(m[(0, 0)])),
        translation: t.translation,
    }
}

fn ap_per_tier(dets: &[Box3D], gts: &[Box3D], iou_threshold: f64) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for (i, d) in Difficulty::ALL.iter().enumerate() {
        let config = EvalConfig::new(iou_threshold, *d)?;
        out[i] = evaluate(dets, gts, &config).curve.ap;
    }
    Ok(out)
}

/// Runs the full detection robustness sweep: for every seed a fresh scene,
/// for every alpha freshly sampled extrinsic perturbations, then each
/// fusion scheme detected and scored against ground truth at the given
/// IoU threshold.
pub fn robustness_sweep(
    config: &RigConfig,
    alphas: &[f64],
    n_seeds: usize,
    iou_threshold: f64,
) -> Result<Vec<RobustnessRow>> {
    use crate::error::Error;
    if n_seeds == 0 {
        return Err(Error::InvalidArgument("n_seeds must be >= 1".into()));
    }
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("need at least one alpha".into()));
    }
    let extr_true: Vec<RigidTransform> = config.sensor.iter().map(|s| s.extrinsics()).collect();
    let n_sensors = extr_true.len();
    let grid_config = config.fusion.voxel_grid()?;
    let n_schemes = 3 + n_sensors;
    let mut sums = vec![[0.0f64; 3]; alphas.len() * n_schemes];

    for seed_idx in 0..n_seeds {
        let scene_seed = derived_seed(config.seed, 1, seed_idx as u64, 0);
        let scene = generate_scene(&config.scene, &extr_true, scene_seed)?;
        let gt = &scene.gt_boxes;

        // Per-sensor work that does not depend on alpha: raw voxel grids
        // and sensor-frame detections (each sensor knows its calibrated
        // mounting height, so its own frame's ground level is exact).
        let grids: Vec<VoxelGrid> = scene
            .sensor_clouds
            .iter()
            .map(|c| voxelize_mean(&TaggedPointCloud::from_points(c.clone()), &grid_config))
            .collect();
        let box_sets: Vec<Vec<Box3D>> = (0..n_sensors)
            .map(|s| {
                detect(
                    &scene.sensor_clouds[s],
                    -extr_true[s].translation.z,
                    &config.detect,
                )
            })
            .collect();

        for (ai, &alpha) in alphas.iter().enumerate() {
            let mut noisy = Vec::with_capacity(n_sensors);
            let mut priors = Vec::with_capacity(n_sensors);
            for (s, (sensor, extrinsics)) in config.sensor.iter().zip(&extr_true).enumerate() {
                let prior = sensor.theta()?.with_alpha(alpha)?;
                let seed = derived_seed(config.seed, 2 + ai as u64, seed_idx as u64, s as u64);
                let sample = sample_perturbation(&prior, seed);
                noisy.push(inject(extrinsics, &sample));
                priors.push(prior);
            }
            let noisy_rig = SensorRig::new(noisy.clone(), priors.clone())?;
            let mut record = |scheme_idx: usize, ap: [f64; 3]| {
                let cell = &mut sums[ai * n_schemes + scheme_idx];
                for k in 0..3 {
                    cell[k] += ap[k];
                }
            };

            let fused = input_fuse(&noisy_rig, &scene.sensor_clouds)?;
            let dets = detect(fused.points(), 0.0, &config.detect);
            record(0, ap_per_tier(&dets, gt, iou_threshold)?);

            let fused_grid = feature_fuse(&noisy_rig, &grids)?;
            let means: Vec<Vector3<f64>> = fused_grid.cells().values().map(|f| f.mean).collect();
            let dets = detect(&means, 0.0, &config.detect);
            record(1, ap_per_tier(&dets, gt, iou_threshold)?);

            let yaw_rig =
                SensorRig::new(noisy.iter().map(yaw_projected).collect(), priors.clone())?;
            let dets = result_fuse(&yaw_rig, &box_sets, config.fusion.nms_iou_threshold)?;
            record(2, ap_per_tier(&dets, gt, iou_threshold)?);

            for (s, (cloud, transform)) in scene.sensor_clouds.iter().zip(&noisy).enumerate() {
                let cloud_base: Vec<Vector3<f64>> =
                    cloud.iter().map(|p| transform.apply(p)).collect();
                let dets = detect(&cloud_base, 0.0, &config.detect);
                record(3 + s, ap_per_tier(&dets, gt, iou_threshold)?);
            }
        }
    }

    let mut rows = Vec::with_capacity(alphas.len() * n_schemes);
    for (ai, &alpha) in alphas.iter().enumerate() {
        for scheme_idx in 0..n_schemes {
            let scheme = match scheme_idx {
                0 => "input".to_string(),
                1 => "feature".to_string(),
                2 => "result".to_string(),
                s => format!("sensor{}", s - 3),
            };
            let sum = sums[ai * n_schemes + scheme_idx];
            rows.push(RobustnessRow {
                alpha,
                scheme,
                ap: sum.map(|v| v / n_seeds as f64),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RigConfig;

    #[test]
    fn example_matches_published_covariance_at_alpha_one() {
        let rows = propagate_example(
            &SensorConfig::worked_example(),
            &Vector3::new(10.0, 10.0, 10.0),
            &[1.0],
        )
        .unwrap();
        let expected = Matrix3::new(
            2.36, -1.24, -1.20, //
            -1.24, 2.41, -1.18, //
            -1.20, -1.18, 2.49,
        );
        let got = rows[0].extrinsic;
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (got[(i, j)] - expected[(i, j)]).abs() <= 0.02,
                    "({i},{j}): {} vs {}",
                    got[(i, j)],
                    expected[(i, j)]
                );
            }
        }
    }

    #[test]
    fn example_std_near_quarter_meter_at_two_percent() {
        let rows = propagate_example(
            &SensorConfig::worked_example(),
            &Vector3::new(10.0, 10.0, 10.0),
            &[0.02],
        )
        .unwrap();
        for std in rows[0].per_axis_std {
            assert!((std - 0.22).abs() <= 0.02, "std {std}");
        }
    }

    #[test]
    fn extrinsic_part_is_linear_in_alpha() {
        let rows = propagate_example(
            &SensorConfig::worked_example(),
            &Vector3::new(10.0, 10.0, 10.0),
            &[0.02, 0.04, 1.0],
        )
        .unwrap();
        let unit = rows[2].extrinsic;
        assert!((rows[0].extrinsic - unit * 0.02).abs().max() < 1e-12);
        assert!((rows[1].extrinsic - unit * 0.04).abs().max() < 1e-12);
    }

    #[test]
    fn full_minus_extrinsic_is_the_isotropic_measurement_term() {
        let rows = propagate_example(
            &SensorConfig::worked_example(),
            &Vector3::new(10.0, 10.0, 10.0),
            &[0.0, 0.06],
        )
        .unwrap();
        for row in rows {
            let diff = row.full - row.extrinsic;
            assert!((diff - Matrix3::identity() * 0.0004).abs().max() < 1e-12);
        }
    }

    fn small_config() -> RigConfig {
        let mut config = RigConfig::default();
        config.scene.n_boxes = 8;
        config.scene.region = 18.0;
        config.seed = 5;
        config
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let config = small_config();
        let alphas = [0.0, 0.1];
        let rows = robustness_sweep(&config, &alphas, 2, 0.7).unwrap();
        assert_eq!(rows.len(), 2 * (3 + 3));
        let again = robustness_sweep(&config, &alphas, 2, 0.7).unwrap();
        for (a, b) in rows.iter().zip(&again) {
            assert_eq!(a.alpha, b.alpha);
            assert_eq!(a.scheme, b.scheme);
            assert_eq!(a.ap, b.ap);
        }
        for row in &rows {
            for ap in row.ap {
                assert!((0.0..=1.0).contains(&ap), "{} {:?}", row.scheme, row.ap);
            }
        }
    }

    #[test]
    fn clean_pipeline_detects_something() {
        let config = small_config();
        let rows = robustness_sweep(&config, &[0.0], 1, 0.5).unwrap();
        let by_scheme = |name: &str| {
            rows.iter()
                .find(|r| r.scheme == name)
                .map(|r| r.ap[2])
                .unwrap()
        };
        assert!(by_scheme("input") > 0.2, "input {}", by_scheme("input"));
        assert!(by_scheme("result") > 0.2, "result {}", by_scheme("result"));
        assert!(
            by_scheme("feature") > 0.2,
            "feature {}",
            by_scheme("feature")
        );
    }

    #[test]
    fn rejects_empty_sweep_arguments() {
        let config = small_config();
        assert!(robustness_sweep(&config, &[], 2, 0.7).is_err());
        assert!(robustness_sweep(&config, &[0.0], 0, 0.7).is_err());
    }
}
