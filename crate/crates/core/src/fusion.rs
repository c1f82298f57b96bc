//! The three cross-sensor fusion schemes: input-level cloud merging,
//! feature-level voxel fusion with a componentwise max, and result-level
//! box fusion through NMS.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::boxes::{nms, normalize_yaw, Box3D};
use crate::error::{Error, Result};
use crate::perturbation::ThetaPrior;
use crate::propagation::{propagate_cloud, TaggedPointCloud};
use crate::se3::{RigidTransform, Rotation};

/// Spatial layout of a voxel grid: min corner, per-axis voxel size, and
/// voxel counts. Fusable grids must share the exact layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGridConfig {
    pub origin: Vector3<f64>,
    pub resolution: Vector3<f64>,
    pub dims: [u32; 3],
}

impl VoxelGridConfig {
    pub fn new(origin: Vector3<f64>, resolution: Vector3<f64>, dims: [u32; 3]) -> Result<Self> {
        if resolution.iter().any(|r| *r <= 0.0 || !r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "voxel resolution must be strictly positive, got {resolution:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "voxel dims must be non-zero, got {dims:?}"
            )));
        }
        Ok(VoxelGridConfig {
            origin,
            resolution,
            dims,
        })
    }

    /// Derives dims by rounding `(high - low) / resolution`.
    pub fn from_range(
        low: Vector3<f64>,
        high: Vector3<f64>,
        resolution: Vector3<f64>,
    ) -> Result<Self> {
        if low.x >= high.x || low.y >= high.y || low.z >= high.z {
            return Err(Error::InvalidArgument(
                "voxel range low must be strictly below high on every axis".into(),
            ));
        }
        if resolution.iter().any(|r| *r <= 0.0 || !r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "voxel resolution must be strictly positive, got {resolution:?}"
            )));
        }
        let dims = [
            ((high.x - low.x) / resolution.x).round() as u32,
            ((high.y - low.y) / resolution.y).round() as u32,
            ((high.z - low.z) / resolution.z).round() as u32,
        ];
        Self::new(low, resolution, dims)
    }

    /// Voxel containing `p`, or None if outside the range.
    pub fn index_of(&self, p: &Vector3<f64>) -> Option<[u32; 3]> {
        let mut idx = [0u32; 3];
        for axis in 0..3 {
            let cell = ((p[axis] - self.origin[axis]) / self.resolution[axis]).floor();
            if cell < 0.0 || cell >= self.dims[axis] as f64 {
                return None;
            }
            idx[axis] = cell as u32;
        }
        Some(idx)
    }

    /// Min/max corners of a voxel.
    pub fn voxel_bounds(&self, idx: [u32; 3]) -> (Vector3<f64>, Vector3<f64>) {
        let low = Vector3::new(
            self.origin.x + idx[0] as f64 * self.resolution.x,
            self.origin.y + idx[1] as f64 * self.resolution.y,
            self.origin.z + idx[2] as f64 * self.resolution.z,
        );
        (low, low + self.resolution)
    }
}

impl Default for VoxelGridConfig {
    fn default() -> Self {
        VoxelGridConfig::from_range(
            Vector3::new(-35.2, -40.0, -5.7),
            Vector3::new(35.2, 40.0, 2.0),
            Vector3::new(0.05, 0.05, 0.14),
        )
        .expect("default voxel range is valid")
    }
}

/// Per-voxel feature: arithmetic mean of member points plus their count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelFeature {
    pub mean: Vector3<f64>,
    pub count: u32,
}

/// Sparse voxel grid. Cells iterate in deterministic index order.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    config: VoxelGridConfig,
    cells: BTreeMap<[u32; 3], VoxelFeature>,
}

impl VoxelGrid {
    pub fn config(&self) -> &VoxelGridConfig {
        &self.config
    }

    pub fn cells(&self) -> &BTreeMap<[u32; 3], VoxelFeature> {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// A rig of sensors: base-from-sensor extrinsics with matching priors.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRig {
    extrinsics: Vec<RigidTransform>,
    priors: Vec<ThetaPrior>,
}

impl SensorRig {
    pub fn new(extrinsics: Vec<RigidTransform>, priors: Vec<ThetaPrior>) -> Result<Self> {
        if extrinsics.is_empty() {
            return Err(Error::InvalidArgument(
                "rig needs at least one sensor".into(),
            ));
        }
        if extrinsics.len() != priors.len() {
            return Err(Error::SensorCountMismatch {
                rig: extrinsics.len(),
                given: priors.len(),
            });
        }
        Ok(SensorRig { extrinsics, priors })
    }

    pub fn len(&self) -> usize {
        self.extrinsics.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn extrinsics(&self) -> &[RigidTransform] {
        &self.extrinsics
    }

    pub fn priors(&self) -> &[ThetaPrior] {
        &self.priors
    }

    pub fn check_count(&self, given: usize) -> Result<()> {
        if given != self.len() {
            return Err(Error::SensorCountMismatch {
                rig: self.len(),
                given,
            });
        }
        Ok(())
    }
}

/// Input fusion: every sensor's cloud propagated through its extrinsics
/// into the base frame and concatenated in sensor order, tagged with
/// traces from the sensor's effective prior.
pub fn input_fuse(rig: &SensorRig, clouds: &[Vec<Vector3<f64>>]) -> Result<TaggedPointCloud> {
    rig.check_count(clouds.len())?;
    let mut fused = TaggedPointCloud::default();
    for ((transform, prior), cloud) in rig.extrinsics.iter().zip(&rig.priors).zip(clouds) {
        fused.extend(propagate_cloud(transform, cloud, &prior.effective()));
    }
    Ok(fused)
}

/// Bins points into voxels, keeping the mean position and count per
/// occupied voxel. Points outside the range are dropped.
pub fn voxelize_mean(cloud: &TaggedPointCloud, config: &VoxelGridConfig) -> VoxelGrid {
    let mut sums: BTreeMap<[u32; 3], (Vector3<f64>, u32)> = BTreeMap::new();
    for p in cloud.points() {
        if let Some(idx) = config.index_of(p) {
            let entry = sums.entry(idx).or_insert((Vector3::zeros(), 0));
            entry.0 += p;
            entry.1 += 1;
        }
    }
    let cells = sums
        .into_iter()
        .map(|(idx, (sum, count))| {
            (
                idx,
                VoxelFeature {
                    mean: sum / count as f64,
                    count,
                },
            )
        })
        .collect();
    VoxelGrid {
        config: *config,
        cells,
    }
}

/// Feature fusion: each grid's cell means are transformed into the base
/// frame and re-binned onto the shared layout; colliding cells fuse by
/// componentwise max of the mean feature, counts by sum.
pub fn feature_fuse(rig: &SensorRig, grids: &[VoxelGrid]) -> Result<VoxelGrid> {
    rig.check_count(grids.len())?;
    let config = grids[0].config;
    for (i, g) in grids.iter().enumerate() {
        if g.config != config {
            return Err(Error::GridGeometryMismatch(format!(
                "grid {i} has {:?}, expected {:?}",
                g.config, config
            )));
        }
    }
    let mut cells: BTreeMap<[u32; 3], VoxelFeature> = BTreeMap::new();
    for (transform, grid) in rig.extrinsics.iter().zip(grids) {
        for feature in grid.cells.values() {
            let moved = transform.apply(&feature.mean);
            let Some(idx) = config.index_of(&moved) else {
                continue;
            };
            cells
                .entry(idx)
                .and_modify(|f| {
                    f.mean = f.mean.sup(&moved);
                    f.count += feature.count;
                })
                .or_insert(VoxelFeature {
                    mean: moved,
                    count: feature.count,
                });
        }
    }
    Ok(VoxelGrid { config, cells })
}

/// Yaw of a rotation that is pure yaw within `tol`, as
/// `(yaw, deviation)`; the caller decides whether the deviation is
/// acceptable.
fn yaw_and_deviation(rotation: &Rotation) -> (f64, f64) {
    let m = rotation.matrix();
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    let deviation = (m - Rotation::from_yaw(yaw).matrix()).abs().max();
    (yaw, deviation)
}

/// Tolerated deviation of a result-fusion extrinsic from pure yaw.
pub const PURE_YAW_TOL: f64 = 1e-6;

/// Result fusion: each sensor's boxes are rigidly moved into the base
/// frame (requires pure-yaw extrinsics, since roll or pitch would leave
/// the yaw-box family), concatenated, and filtered with greedy NMS.
pub fn result_fuse(
    rig: &SensorRig,
    box_sets: &[Vec<Box3D>],
    iou_threshold: f64,
) -> Result<Vec<Box3D>> {
    rig.check_count(box_sets.len())?;
    let mut all = Vec::new();
    for (sensor, (transform, boxes)) in rig.extrinsics.iter().zip(box_sets).enumerate() {
        let (yaw, deviation) = yaw_and_deviation(&transform.rotation);
        if deviation > PURE_YAW_TOL {
            return Err(Error::NotPureYaw { sensor, deviation });
        }
        for b in boxes {
            all.push(Box3D {
                center: transform.apply(&b.center),
                yaw: normalize_yaw(b.yaw + yaw),
                ..*b
            });
        }
    }
    nms(&all, iou_threshold)
}
