//! Yaw-rotated 3D boxes: IoU, greedy NMS, regression-residual encoding,
//! and proposal-frame point handling.
//!
//! Boxes use a bottom-center origin: `center.z` is the base of the box
//! and the box spans `[z, z + h]` vertically. Yaw rotates about +z.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::propagation::TaggedPointCloud;

/// 8-vector of dimensionless box residuals; the last two components are
/// `(sin, cos)` of the yaw residual.
pub type Residual8 = nalgebra::SVector<f64, 8>;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let wrapped = yaw.rem_euclid(std::f64::consts::TAU);
    if wrapped > std::f64::consts::PI {
        wrapped - std::f64::consts::TAU
    } else {
        wrapped
    }
}

/// Yaw-rotated 3D bounding box with class and confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub class_id: u32,
    /// Confidence in [0, 1].
    pub score: f64,
    /// Bottom-center position (m).
    pub center: Vector3<f64>,
    /// Extents (l, w, h), each > 0 (m). l runs along the box x axis.
    pub size: Vector3<f64>,
    /// Rotation about +z (rad).
    pub yaw: f64,
}

impl Box3D {
    pub fn new(
        class_id: u32,
        score: f64,
        center: Vector3<f64>,
        size: Vector3<f64>,
        yaw: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidArgument(format!(
                "score must be in [0,1], got {score}"
            )));
        }
        if size.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "box size must be strictly positive, got {:?}",
                size
            )));
        }
        if !center.iter().all(|c| c.is_finite()) || !yaw.is_finite() {
            return Err(Error::InvalidArgument("box pose must be finite".into()));
        }
        Ok(Box3D {
            class_id,
            score,
            center,
            size,
            yaw,
        })
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }

    /// BEV footprint corners, counterclockwise.
    pub fn bev_corners(&self) -> [Vector2<f64>; 4] {
        let (s, c) = self.yaw.sin_cos();
        let rot = |x: f64, y: f64| {
            Vector2::new(self.center.x + c * x - s * y, self.center.y + s * x + c * y)
        };
        let (hl, hw) = (self.size.x / 2.0, self.size.y / 2.0);
        [rot(hl, hw), rot(-hl, hw), rot(-hl, -hw), rot(hl, -hw)]
    }

    /// Vertical extent `[z, z + h]`.
    pub fn z_interval(&self) -> (f64, f64) {
        (self.center.z, self.center.z + self.size.z)
    }

    /// All eight corners.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let bev = self.bev_corners();
        let (z0, z1) = self.z_interval();
        let mut out = [Vector3::zeros(); 8];
        for (i, b) in bev.iter().enumerate() {
            out[i] = Vector3::new(b.x, b.y, z0);
            out[i + 4] = Vector3::new(b.x, b.y, z1);
        }
        out
    }
}

fn polygon_area(poly: &[Vector2<f64>]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        twice += a.x * b.y - a.y * b.x;
    }
    twice.abs() / 2.0
}

fn segment_line_intersection(
    p1: Vector2<f64>,
    p2: Vector2<f64>,
    a: Vector2<f64>,
    b: Vector2<f64>,
) -> Vector2<f64> {
    let d = p2 - p1;
    let e = b - a;
    // Caller guarantees p1, p2 straddle line ab, so d and e are not parallel.
    let den = d.x * e.y - d.y * e.x;
    let t = ((a.x - p1.x) * e.y - (a.y - p1.y) * e.x) / den;
    p1 + d * t
}

/// Sutherland-Hodgman clip of a convex subject polygon against a convex
/// counterclockwise clip polygon.
fn clip_convex(subject: &[Vector2<f64>], clip: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut output: Vec<Vector2<f64>> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = b - a;
        let inside = |p: &Vector2<f64>| edge.x * (p.y - a.y) - edge.y * (p.x - a.x) >= 0.0;
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur = input[j];
            match (inside(&prev), inside(&cur)) {
                (true, true) => output.push(cur),
                (true, false) => output.push(segment_line_intersection(prev, cur, a, b)),
                (false, true) => {
                    output.push(segment_line_intersection(prev, cur, a, b));
                    output.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    output
}

/// BEV footprint intersection area of two boxes.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    polygon_area(&clip_convex(&a.bev_corners(), &b.bev_corners()))
}

/// 3D IoU: BEV polygon intersection area times vertical interval overlap,
/// over the union volume. Degenerate overlap yields 0.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let (az0, az1) = a.z_interval();
    let (bz0, bz1) = b.z_interval();
    let dz = (az1.min(bz1) - az0.max(bz0)).max(0.0);
    if dz == 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy NMS returning indices into `boxes` in kept order (descending
/// score, ties by input index). A box is kept iff its IoU with every
/// already-kept box is at or below `iou_threshold`.
pub fn nms_indices(boxes: &[Box3D], iou_threshold: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::InvalidArgument(format!(
            "NMS IoU threshold must be in [0,1], got {iou_threshold}"
        )));
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| {
        boxes[j]
            .score
            .partial_cmp(&boxes[i].score)
            .expect("box scores are finite")
            .then(i.cmp(&j))
    });
    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        if kept
            .iter()
            .all(|&k| iou_3d(&boxes[idx], &boxes[k]) <= iou_threshold)
        {
            kept.push(idx);
        }
    }
    Ok(kept)
}

/// Greedy NMS over boxes; see [`nms_indices`].
pub fn nms(boxes: &[Box3D], iou_threshold: f64) -> Result<Vec<Box3D>> {
    Ok(nms_indices(boxes, iou_threshold)?
        .into_iter()
        .map(|i| boxes[i])
        .collect())
}

/// Encodes the ground-truth box against a proposal as the 8-vector
/// `[(x-xp)/lp, (y-yp)/wp, (z-zp)/hp, (l-lp)/lp, (w-wp)/wp, (h-hp)/hp,
/// sin(g-gp), cos(g-gp)]`.
pub fn encode_residual(gt: &Box3D, proposal: &Box3D) -> Result<Residual8> {
    let s = proposal.size;
    if s.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "proposal size must be strictly positive".into(),
        ));
    }
    let dyaw = gt.yaw - proposal.yaw;
    Ok(Residual8::from_column_slice(&[
        (gt.center.x - proposal.center.x) / s.x,
        (gt.center.y - proposal.center.y) / s.y,
        (gt.center.z - proposal.center.z) / s.z,
        (gt.size.x - s.x) / s.x,
        (gt.size.y - s.y) / s.y,
        (gt.size.z - s.z) / s.z,
        dyaw.sin(),
        dyaw.cos(),
    ]))
}

/// Algebraic inverse of [`encode_residual`]. Yaw is recovered via
/// `atan2(u7, u8)` and wrapped into `(-pi, pi]`; class and score carry
/// over from the proposal.
pub fn decode_residual(u: &Residual8, proposal: &Box3D) -> Result<Box3D> {
    if u[6] * u[6] + u[7] * u[7] <= 1e-12 {
        return Err(Error::InvalidArgument(
            "degenerate sin/cos yaw residual".into(),
        ));
    }
    let s = proposal.size;
    Box3D::new(
        proposal.class_id,
        proposal.score,
        Vector3::new(
            proposal.center.x + u[0] * s.x,
            proposal.center.y + u[1] * s.y,
            proposal.center.z + u[2] * s.z,
        ),
        Vector3::new(s.x * (1.0 + u[3]), s.y * (1.0 + u[4]), s.z * (1.0 + u[5])),
        normalize_yaw(proposal.yaw + u[6].atan2(u[7])),
    )
}

/// Rotates each point by `-yaw`, centers it on the proposal, and scales
/// by `(1/l, 1/w, 1/h)`. Points inside the box land in
/// `|x|, |y| <= 0.5`, `z in [0, 1]` (bottom-center convention).
pub fn normalize_points(proposal: &Box3D, points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let (s, c) = proposal.yaw.sin_cos();
    let inv = Vector3::new(
        1.0 / proposal.size.x,
        1.0 / proposal.size.y,
        1.0 / proposal.size.z,
    );
    points
        .iter()
        .map(|p| {
            let d = p - proposal.center;
            Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z).component_mul(&inv)
        })
        .collect()
}

/// Keeps the points inside the proposal enlarged by `margin` on every
/// side (so each extent grows by `2 * margin`). Membership is evaluated
/// in the proposal's yaw frame; points are returned unchanged, traces
/// carried along. Boundary points are included.
pub fn crop_with_margin(
    proposal: &Box3D,
    cloud: &TaggedPointCloud,
    margin: f64,
) -> Result<TaggedPointCloud> {
    if margin < 0.0 || !margin.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "crop margin must be non-negative, got {margin}"
        )));
    }
    let bx = 0.5 + margin / proposal.size.x;
    let by = 0.5 + margin / proposal.size.y;
    let bz = margin / proposal.size.z;
    let normalized = normalize_points(proposal, cloud.points());
    let mut points = Vec::new();
    let mut traces = Vec::new();
    for (i, q) in normalized.iter().enumerate() {
        if q.x.abs() <= bx && q.y.abs() <= by && q.z >= -bz && q.z <= 1.0 + bz {
            points.push(cloud.points()[i]);
            traces.push(cloud.traces()[i]);
        }
    }
    TaggedPointCloud::new(points, traces)
}
