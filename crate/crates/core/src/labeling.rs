//! Conversion of (proposal, ground truth) pairs into per-task training
//! labels, plus the jitter augmentation used for action training.
//!
//! Thresholds follow strict inequalities: a region is a detection
//! positive above 0.5 IoU, a negative below 0.3, and action supervision
//! requires more than 0.7. Overlap exactly at a threshold falls into the
//! ignore band.

use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_keypoints, BBox, Keypoint, NormalizedKeypoint, NUM_KEYPOINTS};

pub const DET_POSITIVE_IOU: f64 = 0.5;
pub const DET_NEGATIVE_IOU: f64 = 0.3;
pub const POSE_IOU: f64 = 0.5;
pub const ACTION_IOU: f64 = 0.7;

/// A ground-truth person: box plus optional keypoints and action label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub bbox: BBox,
    pub keypoints: Option<Vec<Keypoint>>,
    pub action: Option<usize>,
}

impl Instance {
    pub fn new(bbox: BBox, keypoints: Option<Vec<Keypoint>>, action: Option<usize>) -> Self {
        if let Some(kps) = &keypoints {
            assert_eq!(kps.len(), NUM_KEYPOINTS, "expected the 13-keypoint schema");
        }
        Self {
            bbox,
            keypoints,
            action,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetLabel {
    Positive,
    Negative,
    Ignore,
}

/// A proposal box with per-task training labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSample {
    pub region: BBox,
    pub det_label: DetLabel,
    pub pose_targets: Option<Vec<NormalizedKeypoint>>,
    pub action_label: Option<usize>,
    pub matched_instance: Option<usize>,
}

impl RegionSample {
    pub fn pose_active(&self) -> bool {
        self.pose_targets.is_some()
    }

    pub fn action_active(&self) -> bool {
        self.action_label.is_some()
    }

    /// A sample that supervises nothing (pure background candidate).
    pub fn background(region: BBox) -> Self {
        Self {
            region,
            det_label: DetLabel::Negative,
            pose_targets: None,
            action_label: None,
            matched_instance: None,
        }
    }
}

/// Max-IoU instance with lowest-index tie-break. `None` for an empty list.
fn best_match(region: &BBox, instances: &[Instance]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, inst) in instances.iter().enumerate() {
        let v = region.iou(&inst.bbox);
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

pub fn label_detection(region: &BBox, instances: &[Instance]) -> DetLabel {
    let max_iou = best_match(region, instances).map_or(0.0, |(_, v)| v);
    if max_iou > DET_POSITIVE_IOU {
        DetLabel::Positive
    } else if max_iou < DET_NEGATIVE_IOU {
        DetLabel::Negative
    } else {
        DetLabel::Ignore
    }
}

/// Keypoint targets for a region: the max-IoU instance's keypoints
/// normalized against the region, if the overlap exceeds 0.5 and that
/// instance carries keypoints.
pub fn label_pose(
    region: &BBox,
    instances: &[Instance],
) -> Option<(usize, Vec<NormalizedKeypoint>)> {
    let (idx, v) = best_match(region, instances)?;
    if v <= POSE_IOU {
        return None;
    }
    let kps = instances[idx].keypoints.as_ref()?;
    Some((idx, normalize_keypoints(kps, region)))
}

/// Action label for a region: the max-IoU instance's action if the
/// overlap exceeds 0.7 and that instance is annotated with an action.
pub fn label_action(region: &BBox, instances: &[Instance]) -> Option<usize> {
    let (idx, v) = best_match(region, instances)?;
    if v <= ACTION_IOU {
        return None;
    }
    instances[idx].action
}

pub fn build_sample(region: BBox, instances: &[Instance]) -> RegionSample {
    let det_label = label_detection(&region, instances);
    let pose = label_pose(&region, instances);
    let action_label = label_action(&region, instances);
    let matched_instance = if pose.is_some() || action_label.is_some() || det_label == DetLabel::Positive
    {
        best_match(&region, instances).map(|(i, _)| i)
    } else {
        None
    };
    RegionSample {
        region,
        det_label,
        pose_targets: pose.map(|(_, t)| t),
        action_label,
        matched_instance,
    }
}

/// One `RegionSample` per proposal.
pub fn build_samples(proposals: &[BBox], instances: &[Instance]) -> Vec<RegionSample> {
    proposals
        .iter()
        .map(|p| build_sample(*p, instances))
        .collect()
}

/// Perturbation ranges for [`jitter_augment`]: center offsets are uniform
/// in ±`center_frac` of the box width/height, scale is uniform in
/// log-space over ±`scale_frac`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JitterParams {
    pub center_frac: f64,
    pub scale_frac: f64,
}

impl Default for JitterParams {
    fn default() -> Self {
        Self {
            center_frac: 0.2,
            scale_frac: 0.2,
        }
    }
}

const JITTER_ATTEMPT_FACTOR: usize = 10_000;

/// Rejection-sample `count` perturbed copies of `instance_box`, each with
/// IoU at least `min_iou` against the original. Deterministic per seed.
pub fn jitter_augment(
    instance_box: &BBox,
    count: usize,
    min_iou: f64,
    seed: u64,
) -> Result<Vec<BBox>> {
    jitter_augment_with(instance_box, count, min_iou, seed, JitterParams::default())
}

pub fn jitter_augment_with(
    instance_box: &BBox,
    count: usize,
    min_iou: f64,
    seed: u64,
    params: JitterParams,
) -> Result<Vec<BBox>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let budget = JITTER_ATTEMPT_FACTOR.saturating_mul(count.max(1));
    let mut attempts = 0usize;
    let (cx, cy) = instance_box.center();
    let (w, h) = (instance_box.width(), instance_box.height());
    let log_range = (1.0 + params.scale_frac).ln();
    while out.len() < count {
        if attempts >= budget {
            return Err(Error::JitterExhausted {
                attempts,
                min_iou,
            });
        }
        attempts += 1;
        let candidate = if params.center_frac == 0.0 && params.scale_frac == 0.0 {
            *instance_box
        } else {
            let dx = rng.gen_range(-params.center_frac..=params.center_frac) * w;
            let dy = rng.gen_range(-params.center_frac..=params.center_frac) * h;
            let sw = w * rng.gen_range(-log_range..=log_range).exp();
            let sh = h * rng.gen_range(-log_range..=log_range).exp();
            match BBox::new(
                cx + dx - 0.5 * sw,
                cy + dy - 0.5 * sh,
                cx + dx + 0.5 * sw,
                cy + dy + 0.5 * sh,
            ) {
                Ok(b) => b,
                Err(_) => continue,
            }
        };
        if candidate.iou(instance_box) >= min_iou {
            out.push(candidate);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::kp;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn person_keypoints(bbox: &BBox) -> Vec<Keypoint> {
        let (cx, cy) = bbox.center();
        let mut kps = vec![Keypoint::new(cx, cy, true); NUM_KEYPOINTS];
        kps[kp::R_SHOULDER] = Keypoint::new(cx - 1.0, cy - 2.0, true);
        kps[kp::L_SHOULDER] = Keypoint::new(cx + 1.0, cy - 2.0, true);
        kps[kp::R_HIP] = Keypoint::new(cx - 1.0, cy + 2.0, true);
        kps[kp::L_HIP] = Keypoint::new(cx + 1.0, cy + 2.0, true);
        kps
    }

    fn instance(bbox: BBox, action: Option<usize>) -> Instance {
        let kps = person_keypoints(&bbox);
        Instance::new(bbox, Some(kps), action)
    }

    /// Contained box whose IoU against the 10x10 base at (0,0) is exactly
    /// `fl(target)`: intersection = own area = 100*target, union = 100,
    /// and the division rounds once, matching the threshold literal.
    fn box_with_iou(base: &BBox, target: f64) -> BBox {
        assert_eq!(*base, b(0.0, 0.0, 10.0, 10.0));
        let y0 = match target {
            t if t == 0.3 => 7.0,
            t if t == 0.4 => 6.0,
            t if t == 0.5 => 5.0,
            t if t == 0.6 => 4.0,
            t if t == 0.7 => 3.0,
            t if t == 0.75 => 2.5,
            _ => panic!("no exact fixture for {target}"),
        };
        b(0.0, y0, 10.0, 10.0)
    }

    #[test]
    fn detection_labels() {
        let inst = vec![instance(b(0.0, 0.0, 10.0, 10.0), Some(0))];
        assert_eq!(label_detection(&inst[0].bbox, &inst), DetLabel::Positive);
        assert_eq!(
            label_detection(&b(50.0, 50.0, 60.0, 60.0), &inst),
            DetLabel::Negative
        );
        let mid = box_with_iou(&inst[0].bbox, 0.4);
        assert!((mid.iou(&inst[0].bbox) - 0.4).abs() < 1e-12);
        assert_eq!(label_detection(&mid, &inst), DetLabel::Ignore);
    }

    #[test]
    fn detection_boundary_is_ignore() {
        let inst = vec![instance(b(0.0, 0.0, 10.0, 10.0), None)];
        for t in [0.3, 0.5] {
            let region = box_with_iou(&inst[0].bbox, t);
            assert!((region.iou(&inst[0].bbox) - t).abs() < 1e-12);
            assert_eq!(label_detection(&region, &inst), DetLabel::Ignore);
        }
    }

    #[test]
    fn empty_instances_are_negative() {
        assert_eq!(label_detection(&b(0.0, 0.0, 1.0, 1.0), &[]), DetLabel::Negative);
    }

    #[test]
    fn pose_labels() {
        let inst = vec![instance(b(0.0, 0.0, 10.0, 10.0), None)];
        let (idx, targets) = label_pose(&inst[0].bbox, &inst).unwrap();
        assert_eq!(idx, 0);
        assert_eq!(targets.len(), NUM_KEYPOINTS);
        for t in &targets {
            assert!(t.x.abs() <= 0.5 && t.y.abs() <= 0.5);
        }
        let low = box_with_iou(&inst[0].bbox, 0.4);
        assert!(label_pose(&low, &inst).is_none());
    }

    #[test]
    fn pose_picks_max_iou_instance() {
        let a = instance(b(0.0, 0.0, 10.0, 10.0), None);
        let second = instance(b(1.5, 0.0, 11.5, 10.0), None);
        let region = b(0.5, 0.0, 10.5, 10.0);
        let iou_a = region.iou(&a.bbox);
        let iou_b = region.iou(&second.bbox);
        assert!(iou_a > iou_b && iou_b > 0.5);
        let (idx, _) = label_pose(&region, &[a, second]).unwrap();
        assert_eq!(idx, 0);
    }

    #[test]
    fn action_labels() {
        let inst = vec![instance(b(0.0, 0.0, 10.0, 10.0), Some(3))];
        assert_eq!(label_action(&inst[0].bbox, &inst), Some(3));
        let mid = box_with_iou(&inst[0].bbox, 0.6);
        assert_eq!(label_action(&mid, &inst), None);
        // Exactly 0.7 is not enough.
        let boundary = box_with_iou(&inst[0].bbox, 0.7);
        assert!((boundary.iou(&inst[0].bbox) - 0.7).abs() < 1e-12);
        assert_eq!(label_action(&boundary, &inst), None);
    }

    #[test]
    fn unactioned_instance_gives_no_action_label() {
        let inst = vec![instance(b(0.0, 0.0, 10.0, 10.0), None)];
        let region = box_with_iou(&inst[0].bbox, 0.75);
        assert_eq!(label_action(&region, &inst), None);
    }

    #[test]
    fn build_samples_threshold_band() {
        let inst = vec![instance(b(0.0, 0.0, 10.0, 10.0), Some(2))];
        let region = box_with_iou(&inst[0].bbox, 0.6);
        let samples = build_samples(&[region], &inst);
        assert_eq!(samples[0].det_label, DetLabel::Positive);
        assert!(samples[0].pose_active());
        assert!(!samples[0].action_active());
        assert_eq!(samples[0].matched_instance, Some(0));
    }

    #[test]
    fn build_samples_perfect_and_empty() {
        let inst = vec![instance(b(0.0, 0.0, 10.0, 10.0), Some(1))];
        let perfect = build_samples(&[inst[0].bbox], &inst);
        assert_eq!(perfect[0].det_label, DetLabel::Positive);
        assert!(perfect[0].pose_active() && perfect[0].action_active());

        let empty = build_samples(&[b(0.0, 0.0, 1.0, 1.0)], &[]);
        assert_eq!(empty[0].det_label, DetLabel::Negative);
        assert!(!empty[0].pose_active() && !empty[0].action_active());
        assert!(empty[0].matched_instance.is_none());
    }

    #[test]
    fn jitter_respects_iou_floor() {
        let base = b(10.0, 10.0, 30.0, 50.0);
        let boxes = jitter_augment(&base, 100, 0.7, 7).unwrap();
        assert_eq!(boxes.len(), 100);
        for jb in &boxes {
            assert!(jb.iou(&base) >= 0.7);
        }
    }

    #[test]
    fn jitter_zero_range_returns_instance_box() {
        let base = b(0.0, 0.0, 4.0, 8.0);
        let params = JitterParams {
            center_frac: 0.0,
            scale_frac: 0.0,
        };
        let boxes = jitter_augment_with(&base, 1, 0.999_999, 0, params).unwrap();
        assert_eq!(boxes, vec![base]);
    }

    #[test]
    fn jitter_deterministic() {
        let base = b(0.0, 0.0, 20.0, 40.0);
        let a = jitter_augment(&base, 50, 0.7, 42).unwrap();
        let b2 = jitter_augment(&base, 50, 0.7, 42).unwrap();
        assert_eq!(a, b2);
    }

    #[test]
    fn jitter_unreachable_floor_errors() {
        let base = b(0.0, 0.0, 10.0, 10.0);
        let params = JitterParams {
            center_frac: 0.2,
            scale_frac: 0.0,
        };
        // Center always shifted, scale fixed; IoU 1.0 requires the exact box.
        let err = jitter_augment_with(&base, 1, 1.0, 3, params);
        assert!(matches!(err, Err(Error::JitterExhausted { .. })));
    }

    #[test]
    fn labeling_permutation_invariant_up_to_tiebreak() {
        let a = instance(b(0.0, 0.0, 10.0, 10.0), Some(0));
        let c = instance(b(20.0, 0.0, 30.0, 10.0), Some(1));
        let region = b(0.5, 0.0, 10.5, 10.0);
        let fwd = build_sample(region, &[a.clone(), c.clone()]);
        let rev = build_sample(region, &[c, a]);
        assert_eq!(fwd.det_label, rev.det_label);
        assert_eq!(fwd.action_label, rev.action_label);
        assert_eq!(fwd.pose_targets.is_some(), rev.pose_targets.is_some());
    }
}
