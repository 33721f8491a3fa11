//! Action classification AP (ground-truth boxes known at test time) and
//! action detection AP (joint localization and labeling).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::labeling::Instance;

use super::{
    average_precision, match_detections, rank_by_score, APResult, Interpolation, PRCurve,
    ScoredBox,
};

/// Per-action AP over ground-truth boxes: for each action, rank all
/// boxes by that action's score; positives are the boxes whose true
/// action matches.
pub fn evaluate_action_classification(
    gt_actions: &[usize],
    scores: &[Vec<f64>],
    num_actions: usize,
) -> APResult {
    assert_eq!(gt_actions.len(), scores.len());
    let mut per_class = Vec::with_capacity(num_actions);
    for action in 0..num_actions {
        let num_positives = gt_actions.iter().filter(|&&a| a == action).count();
        if num_positives == 0 {
            per_class.push(None);
            continue;
        }
        let class_scores: Vec<f64> = scores.iter().map(|s| s[action]).collect();
        let order = rank_by_score(&class_scores);
        let outcomes: Vec<bool> = order.iter().map(|&i| gt_actions[i] == action).collect();
        per_class.push(Some(average_precision(
            &PRCurve::from_outcomes(&outcomes, num_positives),
            Interpolation::ContinuousEnvelope,
        )));
    }
    APResult::from_per_class(per_class)
}

/// A scored (box, action) prediction for action detection.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ActionDetPrediction {
    pub image_id: usize,
    pub bbox: BBox,
    pub action: usize,
    pub score: f64,
}

/// Action detection AP: each (person, action) pair is treated as a
/// detection class matched greedily at IoU strictly above
/// `iou_threshold` against ground-truth instances with that action.
pub fn evaluate_action_detection(
    preds: &[ActionDetPrediction],
    gts: &BTreeMap<usize, Vec<Instance>>,
    num_actions: usize,
    iou_threshold: f64,
) -> APResult {
    let mut per_class = Vec::with_capacity(num_actions);
    for action in 0..num_actions {
        let class_gts: BTreeMap<usize, Vec<BBox>> = gts
            .iter()
            .map(|(&img, instances)| {
                (
                    img,
                    instances
                        .iter()
                        .filter(|i| i.action == Some(action))
                        .map(|i| i.bbox)
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let num_positives: usize = class_gts.values().map(Vec::len).sum();
        if num_positives == 0 {
            per_class.push(None);
            continue;
        }
        let class_preds: Vec<ScoredBox> = preds
            .iter()
            .filter(|p| p.action == action)
            .map(|p| ScoredBox {
                image_id: p.image_id,
                score: p.score,
                bbox: p.bbox,
            })
            .collect();
        let curve = match_detections(&class_preds, &class_gts, iou_threshold);
        per_class.push(Some(average_precision(
            &curve,
            Interpolation::ContinuousEnvelope,
        )));
    }
    APResult::from_per_class(per_class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn one_hot_scores_give_perfect_map() {
        let gt_actions = vec![0, 1, 2, 1];
        let scores: Vec<Vec<f64>> = gt_actions
            .iter()
            .map(|&a| {
                let mut s = vec![0.0; 3];
                s[a] = 1.0;
                s
            })
            .collect();
        let result = evaluate_action_classification(&gt_actions, &scores, 3);
        assert_relative_eq!(result.mean, 1.0);
    }

    #[test]
    fn single_box_correct_argmax() {
        let result =
            evaluate_action_classification(&[2], &[vec![0.1, 0.2, 0.7]], 3);
        assert_relative_eq!(result.per_class[2], 1.0);
        assert_eq!(result.zero_positive_classes, 2);
    }

    #[test]
    fn absent_class_counts_as_zero_positive() {
        let result = evaluate_action_classification(&[0, 0], &[vec![1.0, 0.0], vec![1.0, 0.0]], 2);
        assert_eq!(result.zero_positive_classes, 1);
        assert_eq!(result.per_class[1], 0.0);
    }

    fn gt_with_actions() -> BTreeMap<usize, Vec<Instance>> {
        BTreeMap::from([(
            0,
            vec![
                Instance::new(b(0.0, 0.0, 10.0, 10.0), None, Some(0)),
                Instance::new(b(20.0, 0.0, 30.0, 10.0), None, Some(1)),
            ],
        )])
    }

    #[test]
    fn perfect_action_detection() {
        let gts = gt_with_actions();
        let preds = vec![
            ActionDetPrediction {
                image_id: 0,
                bbox: b(0.0, 0.0, 10.0, 10.0),
                action: 0,
                score: 0.9,
            },
            ActionDetPrediction {
                image_id: 0,
                bbox: b(20.0, 0.0, 30.0, 10.0),
                action: 1,
                score: 0.8,
            },
        ];
        let result = evaluate_action_detection(&preds, &gts, 2, 0.5);
        assert_relative_eq!(result.mean, 1.0);
    }

    #[test]
    fn correct_box_wrong_action_is_fp() {
        let gts = gt_with_actions();
        let preds = vec![ActionDetPrediction {
            image_id: 0,
            bbox: b(0.0, 0.0, 10.0, 10.0),
            action: 1, // true action is 0
            score: 0.9,
        }];
        let result = evaluate_action_detection(&preds, &gts, 2, 0.5);
        assert_eq!(result.per_class[0], 0.0);
        assert_eq!(result.per_class[1], 0.0);
    }

    #[test]
    fn collapsing_actions_reduces_to_plain_detection() {
        let gts = gt_with_actions();
        let preds = vec![
            ActionDetPrediction {
                image_id: 0,
                bbox: b(0.5, 0.0, 10.5, 10.0),
                action: 0,
                score: 0.9,
            },
            ActionDetPrediction {
                image_id: 0,
                bbox: b(21.0, 0.0, 31.0, 10.0),
                action: 0,
                score: 0.7,
            },
            ActionDetPrediction {
                image_id: 0,
                bbox: b(50.0, 0.0, 60.0, 10.0),
                action: 0,
                score: 0.5,
            },
        ];
        // Collapse all ground-truth actions into class 0.
        let collapsed: BTreeMap<usize, Vec<Instance>> = gts
            .iter()
            .map(|(&img, instances)| {
                (
                    img,
                    instances
                        .iter()
                        .map(|i| Instance::new(i.bbox, None, Some(0)))
                        .collect(),
                )
            })
            .collect();
        let ad = evaluate_action_detection(&preds, &collapsed, 1, 0.5);
        let plain_gts: BTreeMap<usize, Vec<BBox>> = collapsed
            .iter()
            .map(|(&img, ins)| (img, ins.iter().map(|i| i.bbox).collect()))
            .collect();
        let boxes: Vec<ScoredBox> = preds
            .iter()
            .map(|p| ScoredBox {
                image_id: p.image_id,
                score: p.score,
                bbox: p.bbox,
            })
            .collect();
        let direct = average_precision(
            &match_detections(&boxes, &plain_gts, 0.5),
            Interpolation::ContinuousEnvelope,
        );
        assert_relative_eq!(ad.mean, direct);
    }
}
