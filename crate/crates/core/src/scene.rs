//! Synthetic multi-sensor scenes: non-overlapping boxes on a ground plane,
//! sampled as LiDAR-like surface returns per sensor.
//!
//! Boxes are placed with exactly zero pairwise IoU (plus a configurable
//! clearance). Each sensor samples only faces whose outward normal points
//! toward it, with a quadratic density falloff in range and a hard range
//! cutoff, so every sensor sees a different, incomplete view. Clouds are
//! returned in each sensor's own frame; ground truth stays in the base
//! frame.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::boxes::{iou_3d, Box3D};
use crate::config::SceneSection;
use crate::error::{Error, Result};
use crate::se3::RigidTransform;

#[derive(Debug, Clone)]
pub struct Scene {
    /// Base frame; bottom faces rest on the ground plane z = 0.
    pub gt_boxes: Vec<Box3D>,
    /// One cloud per sensor, in that sensor's frame.
    pub sensor_clouds: Vec<Vec<Vector3<f64>>>,
}

fn sample_range<R: Rng>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

/// Clearance is enforced by testing IoU of the boxes inflated by `min_gap`
/// in length and width; disjoint inflated boxes imply IoU of exactly zero
/// for the real ones.
fn inflate(b: &Box3D, gap: f64) -> Box3D {
    Box3D::new(
        b.class_id,
        b.score,
        b.center,
        Vector3::new(b.size.x + gap, b.size.y + gap, b.size.z),
        b.yaw,
    )
    .expect("inflated box stays valid")
}

fn place_boxes<R: Rng>(section: &SceneSection, rng: &mut R) -> Result<Vec<Box3D>> {
    let mut boxes: Vec<Box3D> = Vec::with_capacity(section.n_boxes);
    let mut inflated: Vec<Box3D> = Vec::with_capacity(section.n_boxes);
    for _ in 0..section.n_boxes {
        let mut placed = false;
        for _ in 0..section.max_attempts_per_box {
            let size = Vector3::new(
                sample_range(rng, section.length_range),
                sample_range(rng, section.width_range),
                sample_range(rng, section.height_range),
            );
            let center = Vector3::new(
                rng.random_range(-section.region..section.region),
                rng.random_range(-section.region..section.region),
                0.0,
            );
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let candidate = Box3D::new(0, 1.0, center, size, yaw)?;
            let candidate_inflated = inflate(&candidate, section.min_gap);
            if inflated
                .iter()
                .all(|b| iou_3d(b, &candidate_inflated) == 0.0)
            {
                boxes.push(candidate);
                inflated.push(candidate_inflated);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::PlacementInfeasible {
                placed: boxes.len(),
                requested: section.n_boxes,
                attempts: section.max_attempts_per_box,
            });
        }
    }
    Ok(boxes)
}

/// A face in the box's local frame (origin at the bottom center, x along
/// length): center, outward normal, and the two in-face half-axes.
struct Face {
    center: Vector3<f64>,
    normal: Vector3<f64>,
    u_axis: Vector3<f64>,
    v_axis: Vector3<f64>,
    half_u: f64,
    half_v: f64,
}

fn faces_of(size: &Vector3<f64>) -> [Face; 6] {
    let (hl, hw, h) = (size.x / 2.0, size.y / 2.0, size.z);
    let x = Vector3::x();
    let y = Vector3::y();
    let z = Vector3::z();
    let mid = Vector3::new(0.0, 0.0, h / 2.0);
    [
        Face {
            center: mid + x * hl,
            normal: x,
            u_axis: y,
            v_axis: z,
            half_u: hw,
            half_v: h / 2.0,
        },
        Face {
            center: mid - x * hl,
            normal: -x,
            u_axis: y,
            v_axis: z,
            half_u: hw,
            half_v: h / 2.0,
        },
        Face {
            center: mid + y * hw,
            normal: y,
            u_axis: x,
            v_axis: z,
            half_u: hl,
            half_v: h / 2.0,
        },
        Face {
            center: mid - y * hw,
            normal: -y,
            u_axis: x,
            v_axis: z,
            half_u: hl,
            half_v: h / 2.0,
        },
        Face {
            center: Vector3::new(0.0, 0.0, h),
            normal: z,
            u_axis: x,
            v_axis: y,
            half_u: hl,
            half_v: hw,
        },
        Face {
            center: Vector3::zeros(),
            normal: -z,
            u_axis: x,
            v_axis: y,
            half_u: hl,
            half_v: hw,
        },
    ]
}

fn sample_box_surface<R: Rng>(
    b: &Box3D,
    sensor_pos: &Vector3<f64>,
    section: &SceneSection,
    rng: &mut R,
    out: &mut Vec<Vector3<f64>>,
) {
    let rot = crate::se3::Rotation::from_yaw(b.yaw);
    let to_world = |local: &Vector3<f64>| rot.rotate(local) + b.center;
    let dist = (sensor_pos - b.center).norm();
    if dist > section.max_range {
        return;
    }
    let falloff = (section.falloff_range / dist.max(1.0)).powi(2).min(1.0);
    for face in faces_of(&b.size) {
        let center_w = to_world(&face.center);
        let normal_w = rot.rotate(&face.normal);
        if normal_w.dot(&(sensor_pos - center_w)) <= 0.0 {
            continue;
        }
        let area = 4.0 * face.half_u * face.half_v;
        let n = (area * section.surface_density * falloff).ceil() as usize;
        for _ in 0..n {
            let u = rng.random_range(-face.half_u..face.half_u);
            let v = rng.random_range(-face.half_v..face.half_v);
            let local = face.center + face.u_axis * u + face.v_axis * v;
            out.push(to_world(&local));
        }
    }
}

fn sample_ground<R: Rng>(
    sensor_pos: &Vector3<f64>,
    section: &SceneSection,
    rng: &mut R,
    out: &mut Vec<Vector3<f64>>,
) {
    let n = (std::f64::consts::PI * section.max_range * section.max_range * section.ground_density)
        .ceil() as usize;
    for _ in 0..n {
        // Uniform in the visibility disc around the sensor's BEV position.
        let r = section.max_range * rng.random::<f64>().sqrt();
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let p = Vector2::new(
            sensor_pos.x + r * angle.cos(),
            sensor_pos.y + r * angle.sin(),
        );
        if p.x.abs() <= section.ground_extent && p.y.abs() <= section.ground_extent {
            out.push(Vector3::new(p.x, p.y, 0.0));
        }
    }
}

/// Generates one scene. Deterministic in `(section, extrinsics, seed)`.
pub fn generate_scene(
    section: &SceneSection,
    extrinsics: &[RigidTransform],
    seed: u64,
) -> Result<Scene> {
    if extrinsics.is_empty() {
        return Err(Error::InvalidArgument("need at least one sensor".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt_boxes = place_boxes(section, &mut rng)?;
    let mut sensor_clouds = Vec::with_capacity(extrinsics.len());
    for transform in extrinsics {
        let sensor_pos = transform.translation;
        let mut cloud_base = Vec::new();
        for b in &gt_boxes {
            sample_box_surface(b, &sensor_pos, section, &mut rng, &mut cloud_base);
        }
        sample_ground(&sensor_pos, section, &mut rng, &mut cloud_base);
        let inv = transform.inverse();
        sensor_clouds.push(cloud_base.iter().map(|p| inv.apply(p)).collect());
    }
    Ok(Scene {
        gt_boxes,
        sensor_clouds,
    })
}
