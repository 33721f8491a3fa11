//! Randomized invariants for the geometric primitives, region labeling
//! and non-maximum suppression.

use detkit::eval::nms_indices;
use detkit::geometry::{
    denormalize_keypoints, iou, normalize_keypoints, BBox, Keypoint, NUM_KEYPOINTS,
};
use detkit::labeling::{
    label_action, label_detection, label_pose, DetLabel, Instance, ACTION_IOU,
    DET_NEGATIVE_IOU, DET_POSITIVE_IOU, POSE_IOU,
};
use proptest::prelude::*;

fn arb_bbox() -> impl Strategy<Value = BBox> {
    (0.0..50.0f64, 0.0..50.0f64, 0.1..30.0f64, 0.1..30.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn arb_keypoints() -> impl Strategy<Value = Vec<Keypoint>> {
    proptest::collection::vec(
        (0.0..64.0f64, 0.0..64.0f64, proptest::bool::ANY)
            .prop_map(|(x, y, v)| Keypoint::new(x, y, v)),
        NUM_KEYPOINTS,
    )
}

fn arb_instance() -> impl Strategy<Value = Instance> {
    (
        arb_bbox(),
        proptest::option::of(arb_keypoints()),
        proptest::option::of(0usize..10),
    )
        .prop_map(|(bbox, kps, action)| Instance::new(bbox, kps, action))
}

proptest! {
    #[test]
    fn iou_is_symmetric_bounded_and_one_on_self(a in arb_bbox(), b in arb_bbox()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_is_translation_invariant(a in arb_bbox(), b in arb_bbox(),
                                    dx in -20.0..20.0f64, dy in -20.0..20.0f64) {
        let shift = |r: &BBox| BBox::new(
            r.x_min + dx, r.y_min + dy, r.x_max + dx, r.y_max + dy,
        ).unwrap();
        prop_assert!((iou(&a, &b) - iou(&shift(&a), &shift(&b))).abs() < 1e-9);
    }

    #[test]
    fn intersection_never_exceeds_either_area(a in arb_bbox(), b in arb_bbox()) {
        let inter = a.intersection_area(&b);
        prop_assert!(inter <= a.area() + 1e-12);
        prop_assert!(inter <= b.area() + 1e-12);
        prop_assert!(inter >= 0.0);
    }

    #[test]
    fn keypoint_normalization_round_trips(region in arb_bbox(), kps in arb_keypoints()) {
        let normalized = normalize_keypoints(&kps, &region);
        let restored = denormalize_keypoints(&normalized, &region);
        for (orig, back) in kps.iter().zip(&restored) {
            prop_assert_eq!(orig.visible, back.visible);
            prop_assert!((orig.x - back.x).abs() < 1e-9);
            prop_assert!((orig.y - back.y).abs() < 1e-9);
        }
    }

    #[test]
    fn detection_labels_respect_strict_iou_thresholds(
        region in arb_bbox(),
        instances in proptest::collection::vec(arb_instance(), 0..5),
    ) {
        let max_iou = instances
            .iter()
            .map(|i| iou(&region, &i.bbox))
            .fold(0.0f64, f64::max);
        match label_detection(&region, &instances) {
            DetLabel::Positive => prop_assert!(max_iou > DET_POSITIVE_IOU),
            DetLabel::Negative => prop_assert!(max_iou < DET_NEGATIVE_IOU),
            DetLabel::Ignore => prop_assert!(
                (DET_NEGATIVE_IOU..=DET_POSITIVE_IOU).contains(&max_iou)
            ),
        }
    }

    #[test]
    fn head_labels_imply_detection_positive(
        region in arb_bbox(),
        instances in proptest::collection::vec(arb_instance(), 0..5),
    ) {
        // Pose needs IoU > 0.5 and action IoU > 0.7, both stricter than
        // the detection-positive threshold.
        let max_iou = instances
            .iter()
            .map(|i| iou(&region, &i.bbox))
            .fold(0.0f64, f64::max);
        if label_pose(&region, &instances).is_some() {
            prop_assert!(max_iou > POSE_IOU);
            prop_assert_eq!(label_detection(&region, &instances), DetLabel::Positive);
        }
        if label_action(&region, &instances).is_some() {
            prop_assert!(max_iou > ACTION_IOU);
            prop_assert_eq!(label_detection(&region, &instances), DetLabel::Positive);
        }
    }

    #[test]
    fn nms_kept_set_is_valid(
        boxes in proptest::collection::vec(arb_bbox(), 1..12),
        threshold in 0.1..0.9f64,
        score_seed in 0u64..1000,
    ) {
        // Quantized scores so ties are exercised.
        let scores: Vec<f64> = (0..boxes.len())
            .map(|i| ((score_seed as usize * 7 + i * 13) % 20) as f64 / 20.0)
            .collect();
        let kept = nms_indices(&boxes, &scores, threshold);

        // Within bounds, unique, sorted.
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(kept.iter().all(|&i| i < boxes.len()));
        prop_assert!(!kept.is_empty());

        // A suppressed box must overlap some kept box with a higher-or-tied
        // score above the threshold.
        for i in 0..boxes.len() {
            if !kept.contains(&i) {
                let justified = kept.iter().any(|&k| {
                    scores[k] >= scores[i] && iou(&boxes[i], &boxes[k]) > threshold
                });
                prop_assert!(justified);
            }
        }

        // The globally highest-scoring box always survives (first in rank
        // order, nothing can suppress it).
        let best = (0..boxes.len())
            .max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap())
            .unwrap();
        prop_assert!(kept.iter().any(|&k| scores[k] == scores[best]));

        // Idempotence: running NMS on the survivors keeps all of them.
        let kept_boxes: Vec<BBox> = kept.iter().map(|&i| boxes[i]).collect();
        let kept_scores: Vec<f64> = kept.iter().map(|&i| scores[i]).collect();
        let again = nms_indices(&kept_boxes, &kept_scores, threshold);
        prop_assert_eq!(again.len(), kept.len());
    }
}
