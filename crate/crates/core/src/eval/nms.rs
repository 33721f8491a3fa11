//! Greedy non-maximum suppression.

use crate::geometry::{iou, BBox};

use super::{rank_by_score, ScoredBox};

/// Indices of kept boxes: descending-score greedy, suppressing any box
/// whose IoU with an already kept box is strictly above `iou_threshold`.
pub fn nms_indices(boxes: &[BBox], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len());
    let order = rank_by_score(scores);
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed = kept.iter().any(|&k| iou(&boxes[i], &boxes[k]) > iou_threshold);
        if !suppressed {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// NMS over scored boxes, applied independently per image. Returns the
/// surviving predictions in input order.
pub fn non_max_suppression(preds: &[ScoredBox], iou_threshold: f64) -> Vec<ScoredBox> {
    use std::collections::BTreeMap;
    let mut by_image: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in preds.iter().enumerate() {
        by_image.entry(p.image_id).or_default().push(i);
    }
    let mut keep = vec![false; preds.len()];
    for indices in by_image.values() {
        let boxes: Vec<BBox> = indices.iter().map(|&i| preds[i].bbox).collect();
        let scores: Vec<f64> = indices.iter().map(|&i| preds[i].score).collect();
        for k in nms_indices(&boxes, &scores, iou_threshold) {
            keep[indices[k]] = true;
        }
    }
    preds
        .iter()
        .zip(&keep)
        .filter_map(|(p, &k)| k.then_some(*p))
        .collect()
}
