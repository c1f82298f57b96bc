//! Detection evaluation: KITTI-style greedy matching, 11-point
//! interpolated average precision with distance-based difficulty tiers,
//! and the uncertain-point fraction statistic.

use crate::boxes::{iou_3d, Box3D};
use crate::error::{Error, Result};
use crate::propagation::TaggedPointCloud;

/// Difficulty tiers by ground-truth BEV center distance from the base
/// origin. Tiers nest: easy subsets moderate subsets hard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn max_distance(self) -> f64 {
        match self {
            Difficulty::Easy => 20.0,
            Difficulty::Moderate => 30.0,
            Difficulty::Hard => 50.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "moderate" => Ok(Difficulty::Moderate),
            "hard" => Ok(Difficulty::Hard),
            other => Err(Error::InvalidArgument(format!(
                "unknown difficulty `{other}` (expected easy|moderate|hard)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub difficulty: Difficulty,
}

impl EvalConfig {
    pub fn new(iou_threshold: f64, difficulty: Difficulty) -> Result<Self> {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "IoU threshold must be in (0,1], got {iou_threshold}"
            )));
        }
        Ok(EvalConfig {
            iou_threshold,
            difficulty,
        })
    }
}

/// Precision-recall curve with its 11-point interpolated area.
#[derive(Debug, Clone, PartialEq)]
pub struct PRCurve {
    /// (recall, precision) after each detection, in descending-score order.
    pub points: Vec<(f64, f64)>,
    pub ap: f64,
}

/// Greedy matching by descending detection score (ties by index): a
/// detection is a true positive iff its best-IoU still-unmatched ground
/// truth reaches the threshold. Returns `(det_index, matched)` in
/// processing order.
pub fn match_detections(dets: &[Box3D], gts: &[Box3D], iou_threshold: f64) -> Vec<(usize, bool)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        dets[j]
            .score
            .partial_cmp(&dets[i].score)
            .expect("box scores are finite")
            .then(i.cmp(&j))
    });
    let mut gt_taken = vec![false; gts.len()];
    let mut out = Vec::with_capacity(dets.len());
    for det_idx in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_taken[gi] {
                continue;
            }
            let iou = iou_3d(&dets[det_idx], gt);
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        let matched = match best {
            Some((gi, iou)) if iou >= iou_threshold => {
                gt_taken[gi] = true;
                true
            }
            _ => false,
        };
        out.push((det_idx, matched));
    }
    out
}

/// 11-point interpolated AP over the recall grid 0, 0.1, ..., 1.0:
/// precision at each grid recall is the maximum precision achieved at
/// any recall at or beyond it. `matches` must be in descending-score
/// order, as produced by [`match_detections`].
pub fn average_precision(matches: &[(usize, bool)], n_gt: usize) -> PRCurve {
    let mut points = Vec::with_capacity(matches.len());
    let mut tp = 0usize;
    for (rank, &(_, matched)) in matches.iter().enumerate() {
        tp += matched as usize;
        let recall = if n_gt == 0 {
            0.0
        } else {
            tp as f64 / n_gt as f64
        };
        let precision = tp as f64 / (rank + 1) as f64;
        points.push((recall, precision));
    }
    let mut sum = 0.0;
    for k in 0..=10 {
        let grid = k as f64 / 10.0;
        let best = points
            .iter()
            .filter(|(r, _)| *r >= grid - 1e-12)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += best;
    }
    PRCurve {
        points,
        ap: sum / 11.0,
    }
}

/// Result of one evaluation pass at a difficulty tier.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub difficulty: Difficulty,
    pub iou_threshold: f64,
    pub curve: PRCurve,
    pub n_gt: usize,
    pub n_det: usize,
}

fn bev_distance(b: &Box3D) -> f64 {
    (b.center.x * b.center.x + b.center.y * b.center.y).sqrt()
}

/// Filters both detections and ground truths to the tier's distance
/// bound, then matches and integrates AP.
pub fn evaluate(dets: &[Box3D], gts: &[Box3D], config: &EvalConfig) -> EvalReport {
    let limit = config.difficulty.max_distance();
    let dets_in: Vec<Box3D> = dets
        .iter()
        .filter(|b| bev_distance(b) <= limit)
        .copied()
        .collect();
    let gts_in: Vec<Box3D> = gts
        .iter()
        .filter(|b| bev_distance(b) <= limit)
        .copied()
        .collect();
    let matches = match_detections(&dets_in, &gts_in, config.iou_threshold);
    let curve = average_precision(&matches, gts_in.len());
    EvalReport {
        difficulty: config.difficulty,
        iou_threshold: config.iou_threshold,
        curve,
        n_gt: gts_in.len(),
        n_det: dets_in.len(),
    }
}

/// Fraction of points whose trace exceeds the threshold; 0 for an empty
/// cloud.
pub fn uncertain_fraction(cloud: &TaggedPointCloud, threshold: f64) -> Result<f64> {
    if threshold < 0.0 || !threshold.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "threshold must be finite and non-negative, got {threshold}"
        )));
    }
    if cloud.is_empty() {
        return Ok(0.0);
    }
    let n = cloud.traces().iter().filter(|t| **t > threshold).count();
    Ok(n as f64 / cloud.len() as f64)
}
