//! Geometric detector stand-in: ground removal, BEV Euclidean clustering,
//! and a minimum-area rotated rectangle per cluster.
//!
//! The score is monotone in cluster size, so denser (better-observed)
//! objects rank higher. Output order follows the first point of each
//! cluster in input order, which makes detection deterministic for a
//! given cloud.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};

use crate::boxes::{normalize_yaw, Box3D};
use crate::config::DetectSection;

/// Smallest emitted box extent; guards degenerate (collinear) clusters.
const MIN_EXTENT: f64 = 0.05;

/// Andrew's monotone chain; returns the hull in counterclockwise order.
fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(pts.len() * 2);
    for p in pts.iter().chain(pts.iter().rev().skip(1)) {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

struct Rect {
    center: Vector2<f64>,
    length: f64,
    width: f64,
    yaw: f64,
}

/// Rotating calipers over hull edge directions. Falls back to an
/// axis-aligned rectangle for degenerate hulls.
fn min_area_rect(points: &[Vector2<f64>]) -> Rect {
    let hull = convex_hull(points);
    let mut best: Option<(f64, Rect)> = None;
    let candidates: Vec<Vector2<f64>> = if hull.len() >= 3 {
        (0..hull.len())
            .map(|i| hull[(i + 1) % hull.len()] - hull[i])
            .collect()
    } else {
        vec![Vector2::x()]
    };
    for edge in candidates {
        let norm = edge.norm();
        if norm < 1e-12 {
            continue;
        }
        let dir = edge / norm;
        let perp = Vector2::new(-dir.y, dir.x);
        let (mut smin, mut smax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            let s = p.dot(&dir);
            let t = p.dot(&perp);
            smin = smin.min(s);
            smax = smax.max(s);
            tmin = tmin.min(t);
            tmax = tmax.max(t);
        }
        let extent_s = (smax - smin).max(MIN_EXTENT);
        let extent_t = (tmax - tmin).max(MIN_EXTENT);
        let area = extent_s * extent_t;
        if best.as_ref().map(|(a, _)| area < *a).unwrap_or(true) {
            let mid = dir * (smin + smax) / 2.0 + perp * (tmin + tmax) / 2.0;
            let (length, width, yaw) = if extent_s >= extent_t {
                (extent_s, extent_t, dir.y.atan2(dir.x))
            } else {
                (extent_t, extent_s, perp.y.atan2(perp.x))
            };
            best = Some((
                area,
                Rect {
                    center: mid,
                    length,
                    width,
                    yaw: normalize_yaw(yaw),
                },
            ));
        }
    }
    best.expect("at least the fallback direction yields a rectangle")
        .1
}

fn cluster_bev(points: &[Vector3<f64>], radius: f64) -> Vec<Vec<usize>> {
    let cell_of = |p: &Vector3<f64>| [(p.x / radius).floor() as i64, (p.y / radius).floor() as i64];
    let mut grid: BTreeMap<[i64; 2], Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell_of(p)).or_default().push(i);
    }
    let mut visited = vec![false; points.len()];
    let mut clusters = Vec::new();
    let r2 = radius * radius;
    for start in 0..points.len() {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut cluster = vec![start];
        let mut frontier = vec![start];
        while let Some(i) = frontier.pop() {
            let cell = cell_of(&points[i]);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(bucket) = grid.get(&[cell[0] + dx, cell[1] + dy]) else {
                        continue;
                    };
                    for &j in bucket {
                        if visited[j] {
                            continue;
                        }
                        let d = points[i].xy() - points[j].xy();
                        if d.norm_squared() <= r2 {
                            visited[j] = true;
                            cluster.push(j);
                            frontier.push(j);
                        }
                    }
                }
            }
        }
        clusters.push(cluster);
    }
    clusters
}

/// Detects boxes in `points`, assuming objects rest on a flat ground at
/// height `ground_level` in this frame. Emitted boxes sit on that ground.
pub fn detect(points: &[Vector3<f64>], ground_level: f64, params: &DetectSection) -> Vec<Box3D> {
    let kept: Vec<Vector3<f64>> = points
        .iter()
        .filter(|p| p.z > ground_level + params.ground_margin)
        .copied()
        .collect();
    let mut boxes = Vec::new();
    for cluster in cluster_bev(&kept, params.cluster_radius) {
        if cluster.len() < params.min_points {
            continue;
        }
        let bev: Vec<Vector2<f64>> = cluster.iter().map(|&i| kept[i].xy()).collect();
        let rect = min_area_rect(&bev);
        let top = cluster
            .iter()
            .map(|&i| kept[i].z)
            .fold(f64::NEG_INFINITY, f64::max);
        let height = (top - ground_level).max(MIN_EXTENT);
        let n = cluster.len() as f64;
        let score = n / (n + params.score_halfway);
        let b = Box3D::new(
            0,
            score,
            Vector3::new(rect.center.x, rect.center.y, ground_level),
            Vector3::new(rect.length, rect.width, height),
            rect.yaw,
        )
        .expect("detector output satisfies box invariants");
        boxes.push(b);
    }
    boxes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::iou_3d;
    use crate::config::{RigConfig, SceneSection};
    use crate::scene::generate_scene;
    use crate::se3::RigidTransform;
    use nalgebra::Vector3;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn params() -> DetectSection {
        DetectSection::default()
    }

    fn box_cloud(b: &Box3D, density: f64, rng: &mut StdRng) -> Vec<Vector3<f64>> {
        // Dense sampling on all faces: an idealized fully-observed object.
        let section = SceneSection {
            surface_density: density,
            max_range: 1e6,
            falloff_range: 1e6,
            ground_density: 0.0,
            ..SceneSection::default()
        };
        let mut scene_section = section;
        scene_section.n_boxes = 0;
        let mut out = Vec::new();
        // Sample from four sides by placing virtual sensors around the box.
        for view in [
            Vector3::new(50.0, 0.0, 30.0),
            Vector3::new(-50.0, 0.0, 30.0),
            Vector3::new(0.0, 50.0, 30.0),
            Vector3::new(0.0, -50.0, 30.0),
        ] {
            crate::scene::test_support::sample_surface(b, &view, &scene_section, rng, &mut out);
        }
        out
    }

    #[test]
    fn recovers_an_isolated_box() {
        let mut rng = StdRng::seed_from_u64(5);
        let gt = Box3D::new(
            0,
            1.0,
            Vector3::new(8.0, -3.0, 0.0),
            Vector3::new(4.2, 1.8, 1.6),
            0.6,
        )
        .unwrap();
        let cloud = box_cloud(&gt, 12.0, &mut rng);
        let dets = detect(&cloud, 0.0, &params());
        assert_eq!(dets.len(), 1);
        let d = &dets[0];
        assert!(iou_3d(d, &gt) > 0.75, "IoU {}", iou_3d(d, &gt));
        assert!((d.center.xy() - gt.center.xy()).norm() < 0.2);
        assert!((d.size.z - gt.size.z).abs() < 0.1);
    }

    #[test]
    fn separates_two_boxes_and_ranks_by_point_count() {
        let mut rng = StdRng::seed_from_u64(9);
        let a = Box3D::new(
            0,
            1.0,
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(4.0, 2.0, 1.5),
            0.0,
        )
        .unwrap();
        let b = Box3D::new(
            0,
            1.0,
            Vector3::new(12.0, 0.0, 0.0),
            Vector3::new(4.0, 2.0, 1.5),
            1.0,
        )
        .unwrap();
        let mut cloud = box_cloud(&a, 16.0, &mut rng);
        cloud.extend(box_cloud(&b, 4.0, &mut rng));
        let dets = detect(&cloud, 0.0, &params());
        assert_eq!(dets.len(), 2);
        let near_a = dets.iter().find(|d| d.center.x.abs() < 2.0).unwrap();
        let near_b = dets
            .iter()
            .find(|d| (d.center.x - 12.0).abs() < 2.0)
            .unwrap();
        assert!(near_a.score > near_b.score);
    }

    #[test]
    fn ground_only_cloud_yields_nothing() {
        let mut rng = StdRng::seed_from_u64(2);
        let cloud: Vec<Vector3<f64>> = (0..5000)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-0.02..0.02),
                )
            })
            .collect();
        assert!(detect(&cloud, 0.0, &params()).is_empty());
    }

    #[test]
    fn clusters_below_min_points_dropped() {
        let cloud: Vec<Vector3<f64>> = (0..5)
            .map(|i| Vector3::new(i as f64 * 0.1, 0.0, 1.0))
            .collect();
        assert!(detect(&cloud, 0.0, &params()).is_empty());
    }

    #[test]
    fn honors_nonzero_ground_level() {
        let mut rng = StdRng::seed_from_u64(4);
        let gt = Box3D::new(
            0,
            1.0,
            Vector3::new(5.0, 5.0, -2.0),
            Vector3::new(4.0, 2.0, 1.5),
            -0.4,
        )
        .unwrap();
        let cloud = box_cloud(&gt, 12.0, &mut rng);
        let dets = detect(&cloud, -2.0, &params());
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].center.z, -2.0);
        assert!(iou_3d(&dets[0], &gt) > 0.7);
    }

    #[test]
    fn deterministic_for_identical_input() {
        let config = RigConfig::default();
        let ext: Vec<RigidTransform> = config.sensor.iter().map(|s| s.extrinsics()).collect();
        let scene = generate_scene(&config.scene, &ext, 21).unwrap();
        let a = detect(&scene.sensor_clouds[0], -ext[0].translation.z, &params());
        let b = detect(&scene.sensor_clouds[0], -ext[0].translation.z, &params());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.center, y.center);
            assert_eq!(x.score, y.score);
        }
        assert!(!a.is_empty());
    }

    #[test]
    fn min_area_rect_recovers_rotated_rectangle() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..20 {
            let yaw: f64 = rng.random_range(-1.5..1.5);
            let (l, w) = (4.0, 2.0);
            let rot = crate::se3::Rotation::from_yaw(yaw);
            // Boundary points of the rectangle, rotated.
            let pts: Vec<Vector2<f64>> = (0..200)
                .map(|_| {
                    let (u, v): (f64, f64) = if rng.random_bool(0.5) {
                        (
                            rng.random_range(-0.5..0.5) * l,
                            if rng.random_bool(0.5) {
                                w / 2.0
                            } else {
                                -w / 2.0
                            },
                        )
                    } else {
                        (
                            if rng.random_bool(0.5) {
                                l / 2.0
                            } else {
                                -l / 2.0
                            },
                            rng.random_range(-0.5..0.5) * w,
                        )
                    };
                    rot.rotate(&Vector3::new(u, v, 0.0)).xy()
                })
                .collect();
            let rect = min_area_rect(&pts);
            assert!((rect.length - l).abs() < 0.1, "length {}", rect.length);
            assert!((rect.width - w).abs() < 0.1, "width {}", rect.width);
            let mut dyaw = (rect.yaw - yaw).abs() % std::f64::consts::PI;
            dyaw = dyaw.min(std::f64::consts::PI - dyaw);
            assert!(dyaw < 0.05, "yaw {} vs {}", rect.yaw, yaw);
            assert!(rect.center.norm() < 0.1);
        }
    }
}
