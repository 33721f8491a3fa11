//! APK: detection-style average precision per keypoint type.
//!
//! A scored keypoint prediction is correct iff it lies strictly within
//! `alpha * H` of the visible matching keypoint of an unmatched ground
//! truth instance, where `H` is that instance's own torso height.
//! Instances without a defined torso height cannot anchor matches and
//! are excluded from the positives (the count is reported).

use std::collections::BTreeMap;

use crate::geometry::{torso_height, NUM_KEYPOINTS};
use crate::labeling::Instance;

use super::{average_precision, rank_by_score, APResult, Interpolation, PRCurve, ScoredKeypoint};

/// Evaluate keypoint predictions. `preds[k]` holds the scored
/// predictions for keypoint type `k` across all images.
pub fn evaluate_apk(
    preds: &[Vec<ScoredKeypoint>],
    gts: &BTreeMap<usize, Vec<Instance>>,
    alpha: f64,
) -> APResult {
    assert_eq!(preds.len(), NUM_KEYPOINTS);
    assert!(alpha > 0.0);

    // Instances usable as APK anchors: keypoints present and torso
    // height defined.
    let mut anchors: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    let mut excluded = 0usize;
    for (&img, instances) in gts {
        let mut list = Vec::new();
        for (i, inst) in instances.iter().enumerate() {
            match inst.keypoints.as_deref().and_then(torso_height) {
                Some(h) => list.push((i, h)),
                None => excluded += 1,
            }
        }
        anchors.insert(img, list);
    }

    let mut per_class = Vec::with_capacity(NUM_KEYPOINTS);
    for (k, kp_preds) in preds.iter().enumerate() {
        let num_positives: usize = anchors
            .iter()
            .map(|(&img, list)| {
                list.iter()
                    .filter(|&&(i, _)| {
                        gts[&img][i].keypoints.as_ref().map_or(false, |kps| kps[k].visible)
                    })
                    .count()
            })
            .sum();
        if num_positives == 0 {
            per_class.push(None);
            continue;
        }
        let scores: Vec<f64> = kp_preds.iter().map(|p| p.score).collect();
        let order = rank_by_score(&scores);
        let mut matched: BTreeMap<usize, Vec<bool>> = anchors
            .iter()
            .map(|(&img, list)| (img, vec![false; list.len()]))
            .collect();
        let mut outcomes = Vec::with_capacity(kp_preds.len());
        for &pi in &order {
            let p = &kp_preds[pi];
            let mut best: Option<(usize, f64)> = None;
            if let Some(list) = anchors.get(&p.image_id) {
                let taken = &matched[&p.image_id];
                for (ai, &(inst_idx, h)) in list.iter().enumerate() {
                    if taken[ai] {
                        continue;
                    }
                    let kps = gts[&p.image_id][inst_idx]
                        .keypoints
                        .as_ref()
                        .expect("anchor has keypoints");
                    if !kps[k].visible {
                        continue;
                    }
                    let d = ((p.x - kps[k].x).powi(2) + (p.y - kps[k].y).powi(2)).sqrt();
                    if d < alpha * h {
                        match best {
                            Some((_, bd)) if d >= bd => {}
                            _ => best = Some((ai, d)),
                        }
                    }
                }
            }
            match best {
                Some((ai, _)) => {
                    matched.get_mut(&p.image_id).expect("image present")[ai] = true;
                    outcomes.push(true);
                }
                None => outcomes.push(false),
            }
        }
        per_class.push(Some(average_precision(
            &PRCurve::from_outcomes(&outcomes, num_positives),
            Interpolation::ContinuousEnvelope,
        )));
    }
    let mut result = APResult::from_per_class(per_class);
    result.excluded_instances = excluded;
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{kp, BBox, Keypoint};

    fn instance_at(cx: f64, cy: f64) -> Instance {
        // Torso height 4: shoulders at cy-2, hips at cy+2.
        let mut kps = vec![Keypoint::new(cx, cy, true); NUM_KEYPOINTS];
        kps[kp::R_SHOULDER] = Keypoint::new(cx - 1.0, cy - 2.0, true);
        kps[kp::L_SHOULDER] = Keypoint::new(cx + 1.0, cy - 2.0, true);
        kps[kp::R_HIP] = Keypoint::new(cx - 1.0, cy + 2.0, true);
        kps[kp::L_HIP] = Keypoint::new(cx + 1.0, cy + 2.0, true);
        Instance::new(
            BBox::new(cx - 3.0, cy - 4.0, cx + 3.0, cy + 4.0).unwrap(),
            Some(kps),
            None,
        )
    }

    fn perfect_preds(gts: &BTreeMap<usize, Vec<Instance>>) -> Vec<Vec<ScoredKeypoint>> {
        let mut preds = vec![Vec::new(); NUM_KEYPOINTS];
        let mut score = 1000.0;
        for (&img, instances) in gts {
            for inst in instances {
                for (k, kpnt) in inst.keypoints.as_ref().unwrap().iter().enumerate() {
                    preds[k].push(ScoredKeypoint {
                        image_id: img,
                        score,
                        x: kpnt.x,
                        y: kpnt.y,
                    });
                }
                score -= 1.0;
            }
        }
        preds
    }

    #[test]
    fn exact_predictions_score_one() {
        let gts = BTreeMap::from([(0, vec![instance_at(10.0, 10.0)]), (1, vec![instance_at(30.0, 20.0)])]);
        let result = evaluate_apk(&perfect_preds(&gts), &gts, 0.2);
        for ap in &result.per_class {
            assert!((ap - 1.0).abs() < 1e-12);
        }
        assert!((result.mean - 1.0).abs() < 1e-12);
        assert_eq!(result.excluded_instances, 0);
    }

    #[test]
    fn distance_exactly_alpha_h_is_incorrect() {
        let gts = BTreeMap::from([(0, vec![instance_at(10.0, 10.0)])]);
        // Torso height 4, alpha 0.2 => radius 0.8. Place the nose
        // prediction exactly at distance 0.8.
        let mut preds = vec![Vec::new(); NUM_KEYPOINTS];
        preds[kp::NOSE].push(ScoredKeypoint {
            image_id: 0,
            score: 1.0,
            x: 10.0 + 0.8,
            y: 10.0,
        });
        let result = evaluate_apk(&preds, &gts, 0.2);
        assert_eq!(result.per_class[kp::NOSE], 0.0);

        // Strictly inside passes.
        preds[kp::NOSE][0].x = 10.0 + 0.7999;
        let result = evaluate_apk(&preds, &gts, 0.2);
        assert!((result.per_class[kp::NOSE] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn second_prediction_on_same_keypoint_is_fp() {
        let gts = BTreeMap::from([(0, vec![instance_at(10.0, 10.0)])]);
        let mut preds = vec![Vec::new(); NUM_KEYPOINTS];
        preds[kp::NOSE].push(ScoredKeypoint {
            image_id: 0,
            score: 0.9,
            x: 10.0,
            y: 10.0,
        });
        preds[kp::NOSE].push(ScoredKeypoint {
            image_id: 0,
            score: 0.5,
            x: 10.1,
            y: 10.0,
        });
        let result = evaluate_apk(&preds, &gts, 0.2);
        // One positive, outcomes (TP, FP): AP 1.0 under the envelope.
        assert!((result.per_class[kp::NOSE] - 1.0).abs() < 1e-12);
        // Reverse the scores: the near-miss consumes nothing first; the
        // exact one still matches, so AP drops to 1/2 lifted... enumerate:
        preds[kp::NOSE][0].score = 0.5;
        preds[kp::NOSE][1].score = 0.9;
        let result = evaluate_apk(&preds, &gts, 0.2);
        // Higher-scored (10.1, 10.0) is within 0.8 so it matches first and
        // the exact prediction becomes the FP.
        assert!((result.per_class[kp::NOSE] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn instances_without_torso_height_are_excluded() {
        let mut inst = instance_at(10.0, 10.0);
        inst.keypoints.as_mut().unwrap()[kp::L_HIP].visible = false;
        let gts = BTreeMap::from([(0, vec![inst])]);
        let preds = vec![Vec::new(); NUM_KEYPOINTS];
        let result = evaluate_apk(&preds, &gts, 0.2);
        assert_eq!(result.excluded_instances, 1);
        assert_eq!(result.zero_positive_classes, NUM_KEYPOINTS);
    }

    #[test]
    fn invisible_keypoints_are_not_positives() {
        let mut inst = instance_at(10.0, 10.0);
        inst.keypoints.as_mut().unwrap()[kp::NOSE].visible = false;
        let gts = BTreeMap::from([(0, vec![inst])]);
        let mut preds = vec![Vec::new(); NUM_KEYPOINTS];
        preds[kp::NOSE].push(ScoredKeypoint {
            image_id: 0,
            score: 1.0,
            x: 10.0,
            y: 10.0,
        });
        let result = evaluate_apk(&preds, &gts, 0.2);
        assert_eq!(result.per_class[kp::NOSE], 0.0);
        assert_eq!(result.zero_positive_classes, 1);
    }
}
