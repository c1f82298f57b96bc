//! TOML configuration shared by the CLI commands: the sensor rig, scene
//! generation, fusion, plane-sweep, and detector parameters. Every field
//! has a default, so all commands run without a config file.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{SensorRig, VoxelGridConfig};
use crate::perturbation::ThetaPrior;
use crate::plane::{SceneConfig as PlaneSceneConfig, SweepConfig as PlaneSweepConfig};
use crate::propagation::PerturbationPrior;
use crate::se3::RigidTransform;

/// One sensor: base-from-sensor extrinsics plus its perturbation prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// Fixed-axis roll, pitch, yaw in degrees (applied as Rz Ry Rx).
    pub euler_rpy_deg: [f64; 3],
    pub translation_m: [f64; 3],
    #[serde(default = "default_p_diag")]
    pub theta_p_diag: [f64; 3],
    #[serde(default = "default_phi_diag")]
    pub theta_phi_diag: [f64; 3],
    #[serde(default = "default_z_diag")]
    pub theta_z_diag: [f64; 3],
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_p_diag() -> [f64; 3] {
    [0.0025; 3]
}

fn default_phi_diag() -> [f64; 3] {
    [0.01; 3]
}

fn default_z_diag() -> [f64; 3] {
    [0.0004; 3]
}

fn default_alpha() -> f64 {
    1.0
}

impl SensorConfig {
    /// The worked-example pose: rpy [10, 10, 10] degrees, t [1, 1, 1] m.
    pub fn worked_example() -> Self {
        SensorConfig {
            euler_rpy_deg: [10.0, 10.0, 10.0],
            translation_m: [1.0, 1.0, 1.0],
            theta_p_diag: default_p_diag(),
            theta_phi_diag: default_phi_diag(),
            theta_z_diag: default_z_diag(),
            alpha: 1.0,
        }
    }

    fn pure_yaw(yaw_deg: f64, translation: [f64; 3]) -> Self {
        SensorConfig {
            euler_rpy_deg: [0.0, 0.0, yaw_deg],
            translation_m: translation,
            theta_p_diag: default_p_diag(),
            theta_phi_diag: default_phi_diag(),
            theta_z_diag: default_z_diag(),
            alpha: 1.0,
        }
    }

    pub fn extrinsics(&self) -> RigidTransform {
        RigidTransform::from_euler_rpy(
            &Vector3::new(
                self.euler_rpy_deg[0].to_radians(),
                self.euler_rpy_deg[1].to_radians(),
                self.euler_rpy_deg[2].to_radians(),
            ),
            Vector3::from(self.translation_m),
        )
    }

    pub fn theta(&self) -> Result<ThetaPrior> {
        let base = PerturbationPrior::from_diagonals(
            self.theta_p_diag,
            self.theta_phi_diag,
            self.theta_z_diag,
        )?;
        ThetaPrior::new(base, self.alpha)
    }

    fn validate(&self, index: usize) -> Result<()> {
        let finite = self
            .euler_rpy_deg
            .iter()
            .chain(&self.translation_m)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config(format!(
                "sensor {index}: pose values must be finite"
            )));
        }
        self.theta()
            .map_err(|e| Error::Config(format!("sensor {index}: {e}")))?;
        Ok(())
    }
}

/// Synthetic scene layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub n_boxes: usize,
    /// Half-extent of the square placement region for box centers (m).
    pub region: f64,
    /// Minimum BEV clearance between placed boxes (m).
    pub min_gap: f64,
    pub length_range: [f64; 2],
    pub width_range: [f64; 2],
    pub height_range: [f64; 2],
    /// Surface sample density on visible faces at close range (pts/m^2).
    pub surface_density: f64,
    /// Range at which the quadratic density falloff starts (m).
    pub falloff_range: f64,
    /// Ground plane sample density (pts/m^2).
    pub ground_density: f64,
    /// Half-extent of the sampled ground patch (m).
    pub ground_extent: f64,
    /// Per-sensor visibility radius (m).
    pub max_range: f64,
    /// Placement attempts per requested box before giving up.
    pub max_attempts_per_box: usize,
}

impl Default for SceneSection {
    fn default() -> Self {
        SceneSection {
            n_boxes: 20,
            region: 30.0,
            min_gap: 2.0,
            length_range: [3.2, 4.8],
            width_range: [1.6, 2.0],
            height_range: [1.4, 1.8],
            surface_density: 4.0,
            falloff_range: 20.0,
            ground_density: 0.5,
            ground_extent: 35.0,
            max_range: 25.0,
            max_attempts_per_box: 200,
        }
    }
}

impl SceneSection {
    fn validate(&self) -> Result<()> {
        let ranges = [self.length_range, self.width_range, self.height_range];
        if ranges.iter().any(|r| !(0.0 < r[0] && r[0] <= r[1])) {
            return Err(Error::Config(
                "scene size ranges must satisfy 0 < low <= high".into(),
            ));
        }
        if self.region <= 0.0
            || self.min_gap < 0.0
            || self.surface_density <= 0.0
            || self.falloff_range <= 0.0
            || self.ground_density < 0.0
            || self.ground_extent <= 0.0
            || self.max_range <= 0.0
            || self.max_attempts_per_box == 0
        {
            return Err(Error::Config("scene geometry values out of range".into()));
        }
        Ok(())
    }
}

/// Fusion-stage parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub nms_iou_threshold: f64,
    pub voxel_low: [f64; 3],
    pub voxel_high: [f64; 3],
    pub voxel_resolution: [f64; 3],
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            nms_iou_threshold: 0.05,
            voxel_low: [-35.2, -40.0, -5.7],
            voxel_high: [35.2, 40.0, 2.0],
            voxel_resolution: [0.05, 0.05, 0.14],
        }
    }
}

impl FusionSection {
    pub fn voxel_grid(&self) -> Result<VoxelGridConfig> {
        VoxelGridConfig::from_range(
            Vector3::from(self.voxel_low),
            Vector3::from(self.voxel_high),
            Vector3::from(self.voxel_resolution),
        )
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.nms_iou_threshold) {
            return Err(Error::Config(format!(
                "nms_iou_threshold must be in [0,1], got {}",
                self.nms_iou_threshold
            )));
        }
        self.voxel_grid()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Plane-sweep experiment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaneSection {
    pub n_points: usize,
    pub noise_std: f64,
    pub x_gt: [f64; 3],
    pub extent: f64,
    pub trials: usize,
}

impl Default for PlaneSection {
    fn default() -> Self {
        let scene = PlaneSceneConfig::default();
        PlaneSection {
            n_points: scene.n_points,
            noise_std: scene.noise_std,
            x_gt: scene.x_gt.into(),
            extent: scene.extent,
            trials: 100,
        }
    }
}

impl PlaneSection {
    fn validate(&self) -> Result<()> {
        if self.n_points < 6 || self.trials == 0 {
            return Err(Error::Config(
                "plane sweep needs n_points >= 6 and trials >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Geometric detector parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    /// Points within this height of the ground level are discarded (m).
    pub ground_margin: f64,
    /// BEV neighbor radius for Euclidean clustering (m).
    pub cluster_radius: f64,
    /// Minimum cluster size to emit a box.
    pub min_points: usize,
    /// Point count at which the confidence score reaches 0.5.
    pub score_halfway: f64,
}

impl Default for DetectSection {
    fn default() -> Self {
        DetectSection {
            ground_margin: 0.25,
            cluster_radius: 0.9,
            min_points: 10,
            score_halfway: 50.0,
        }
    }
}

impl DetectSection {
    fn validate(&self) -> Result<()> {
        if self.ground_margin < 0.0
            || self.cluster_radius <= 0.0
            || self.min_points == 0
            || self.score_halfway <= 0.0
        {
            return Err(Error::Config("detector parameters out of range".into()));
        }
        Ok(())
    }
}

/// Top-level configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    #[serde(default)]
    pub seed: u64,
    pub sensor: Vec<SensorConfig>,
    #[serde(default)]
    pub scene: SceneSection,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub plane: PlaneSection,
    #[serde(default)]
    pub detect: DetectSection,
}

impl Default for RigConfig {
    /// Three pure-yaw roof sensors around the base origin.
    fn default() -> Self {
        RigConfig {
            seed: 0,
            sensor: vec![
                SensorConfig::pure_yaw(0.0, [1.2, 0.0, 2.2]),
                SensorConfig::pure_yaw(120.0, [-0.6, 1.0, 2.0]),
                SensorConfig::pure_yaw(-120.0, [-0.6, -1.0, 2.0]),
            ],
            scene: SceneSection::default(),
            fusion: FusionSection::default(),
            plane: PlaneSection::default(),
            detect: DetectSection::default(),
        }
    }
}

impl RigConfig {
    /// Single-sensor config with the worked-example pose.
    pub fn worked_example() -> Self {
        RigConfig {
            sensor: vec![SensorConfig::worked_example()],
            ..RigConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates; parse errors carry toml's line/column info.
    pub fn parse(text: &str) -> Result<Self> {
        let config: RigConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensor.is_empty() {
            return Err(Error::Config("at least one [[sensor]] required".into()));
        }
        for (i, s) in self.sensor.iter().enumerate() {
            s.validate(i)?;
        }
        self.scene.validate()?;
        self.fusion.validate()?;
        self.plane.validate()?;
        self.detect.validate()?;
        Ok(())
    }

    /// The rig at the configured per-sensor alphas.
    pub fn rig(&self) -> Result<SensorRig> {
        let extrinsics = self.sensor.iter().map(|s| s.extrinsics()).collect();
        let priors = self
            .sensor
            .iter()
            .map(|s| s.theta())
            .collect::<Result<Vec<_>>>()?;
        SensorRig::new(extrinsics, priors)
    }

    /// The rig with every sensor's alpha overridden.
    pub fn rig_at_alpha(&self, alpha: f64) -> Result<SensorRig> {
        let extrinsics = self.sensor.iter().map(|s| s.extrinsics()).collect();
        let priors = self
            .sensor
            .iter()
            .map(|s| s.theta()?.with_alpha(alpha))
            .collect::<Result<Vec<_>>>()?;
        SensorRig::new(extrinsics, priors)
    }

    pub fn plane_sweep_config(&self) -> Result<PlaneSweepConfig> {
        let sensor = &self.sensor[0];
        Ok(PlaneSweepConfig {
            scene: PlaneSceneConfig {
                n_points: self.plane.n_points,
                noise_std: self.plane.noise_std,
                x_gt: Vector3::from(self.plane.x_gt),
                extent: self.plane.extent,
            },
            extrinsics: sensor.extrinsics(),
            prior: sensor.theta()?,
        })
    }
}
