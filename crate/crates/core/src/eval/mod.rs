//! Evaluation protocols: precision-recall AP machinery, person-detection
//! AP, APK for keypoints, action classification AP on ground-truth boxes,
//! and action-detection AP, plus non-maximum suppression.
//!
//! All overlap and distance tests use strict inequalities: a detection
//! needs IoU strictly above the threshold, a keypoint must land strictly
//! inside `alpha * H`.

mod action;
mod apk;
mod nms;

pub use action::{evaluate_action_classification, evaluate_action_detection, ActionDetPrediction};
pub use apk::evaluate_apk;
pub use nms::{nms_indices, non_max_suppression};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BBox};

pub const DEFAULT_DET_IOU: f64 = 0.5;
pub const DEFAULT_APK_ALPHA: f64 = 0.2;
pub const DEFAULT_NMS_IOU: f64 = 0.3;

/// A scored box prediction attached to an image.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScoredBox {
    pub image_id: usize,
    pub score: f64,
    pub bbox: BBox,
}

/// A scored keypoint-location prediction attached to an image.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScoredKeypoint {
    pub image_id: usize,
    pub score: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall points ordered by descending score threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PRCurve {
    pub points: Vec<PRPoint>,
    pub num_positives: usize,
}

impl PRCurve {
    /// Build a curve from true/false-positive flags given in descending
    /// score order.
    pub fn from_outcomes(outcomes: &[bool], num_positives: usize) -> Self {
        let mut points = Vec::with_capacity(outcomes.len());
        let mut tp = 0usize;
        for (rank, &hit) in outcomes.iter().enumerate() {
            if hit {
                tp += 1;
            }
            let precision = tp as f64 / (rank + 1) as f64;
            let recall = if num_positives == 0 {
                0.0
            } else {
                tp as f64 / num_positives as f64
            };
            points.push(PRPoint { recall, precision });
        }
        Self {
            points,
            num_positives,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    /// All-points area under the precision envelope (VOC 2010+).
    ContinuousEnvelope,
    /// Mean of max precision at recalls {0, 0.1, ..., 1.0}.
    ElevenPoint,
}

/// Area under the precision envelope of a PR curve. Zero positives give
/// an AP of 0.
pub fn average_precision(curve: &PRCurve, interpolation: Interpolation) -> f64 {
    if curve.num_positives == 0 || curve.points.is_empty() {
        return 0.0;
    }
    // Precision envelope: max precision at recall >= r.
    let n = curve.points.len();
    let mut envelope = vec![0.0; n];
    let mut running = 0.0_f64;
    for i in (0..n).rev() {
        running = running.max(curve.points[i].precision);
        envelope[i] = running;
    }
    match interpolation {
        Interpolation::ContinuousEnvelope => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (i, p) in curve.points.iter().enumerate() {
                if p.recall > prev_recall {
                    ap += (p.recall - prev_recall) * envelope[i];
                    prev_recall = p.recall;
                }
            }
            ap
        }
        Interpolation::ElevenPoint => {
            let mut sum = 0.0;
            for step in 0..=10 {
                let r = step as f64 / 10.0;
                let best = curve
                    .points
                    .iter()
                    .zip(&envelope)
                    .find(|(p, _)| p.recall >= r - 1e-12)
                    .map_or(0.0, |(_, &e)| e);
                sum += best;
            }
            sum / 11.0
        }
    }
}

/// Per-class AP values plus their mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct APResult {
    /// AP per class; classes with zero ground-truth positives report 0
    /// here but do not enter the mean.
    pub per_class: Vec<f64>,
    pub mean: f64,
    /// Classes with zero ground-truth positives (excluded from the mean).
    pub zero_positive_classes: usize,
    /// Ground-truth instances dropped for lacking a torso height (APK only).
    pub excluded_instances: usize,
}

impl APResult {
    /// `per_class[i] = None` marks a class with no ground-truth
    /// positives: its AP is undefined, so it is left out of the mean.
    pub fn from_per_class(per_class: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = per_class.iter().filter_map(|&a| a).collect();
        let mean = if defined.is_empty() {
            0.0
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        };
        Self {
            zero_positive_classes: per_class.iter().filter(|a| a.is_none()).count(),
            per_class: per_class.into_iter().map(|a| a.unwrap_or(0.0)).collect(),
            mean,
            excluded_instances: 0,
        }
    }
}

/// Indices of `scores` in descending order; ties keep input order.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    idx
}

/// Greedy detection matching: process predictions in descending score
/// order, each consuming at most one unmatched ground truth; a
/// prediction is a true positive iff its best unmatched overlap is
/// strictly above `iou_threshold`.
pub fn match_detections(
    preds: &[ScoredBox],
    gts: &BTreeMap<usize, Vec<BBox>>,
    iou_threshold: f64,
) -> PRCurve {
    let num_positives: usize = gts.values().map(Vec::len).sum();
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let order = rank_by_score(&scores);
    let mut matched: BTreeMap<usize, Vec<bool>> = gts
        .iter()
        .map(|(&img, boxes)| (img, vec![false; boxes.len()]))
        .collect();
    let mut outcomes = Vec::with_capacity(preds.len());
    for &pi in &order {
        let p = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        if let Some(boxes) = gts.get(&p.image_id) {
            let taken = matched.get(&p.image_id).expect("image present");
            for (gi, g) in boxes.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                let v = iou(&p.bbox, g);
                match best {
                    Some((_, bv)) if v <= bv => {}
                    _ => best = Some((gi, v)),
                }
            }
        }
        match best {
            Some((gi, v)) if v > iou_threshold => {
                matched.get_mut(&p.image_id).expect("image present")[gi] = true;
                outcomes.push(true);
            }
            _ => outcomes.push(false),
        }
    }
    PRCurve::from_outcomes(&outcomes, num_positives)
}

/// AP spread under random permutations of score-tied groups: returns
/// (min, mean, max) over `n_perms` seeded shuffles. Useful for bounding
/// tie sensitivity of a ranking.
pub fn ap_tie_spread(
    scores: &[f64],
    positives: &[bool],
    num_positives: usize,
    interpolation: Interpolation,
    n_perms: usize,
    seed: u64,
) -> (f64, f64, f64) {
    use rand::seq::SliceRandom;
    use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

    assert_eq!(scores.len(), positives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for _ in 0..n_perms.max(1) {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.shuffle(&mut rng);
        // Stable sort on shuffled order resolves ties randomly.
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
        let outcomes: Vec<bool> = idx.iter().map(|&i| positives[i]).collect();
        let ap = average_precision(
            &PRCurve::from_outcomes(&outcomes, num_positives),
            interpolation,
        );
        lo = lo.min(ap);
        hi = hi.max(ap);
        sum += ap;
    }
    (lo, sum / n_perms.max(1) as f64, hi)
}
