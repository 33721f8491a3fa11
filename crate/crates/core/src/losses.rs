//! The three task losses and their weighted combination, with analytic
//! gradients taken with respect to pre-softmax logits (softmax folded
//! into the log losses) and raw coordinates for the pose head.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::geometry::NormalizedKeypoint;
use crate::labeling::{DetLabel, RegionSample};

/// Probabilities are clamped at this floor before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of times a probability hit the log clamp since startup (or the
/// last reset). Diagnostic only.
pub fn clamp_event_count() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

pub fn reset_clamp_events() {
    CLAMP_EVENTS.store(0, Ordering::Relaxed);
}

fn clamped_ln(p: f64) -> f64 {
    if p < LOG_CLAMP {
        CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
        LOG_CLAMP.ln()
    } else {
        p.ln()
    }
}

/// Per-task weights of the total objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights {
    pub lambda_det: f64,
    pub lambda_pose: f64,
    pub lambda_action: f64,
}

impl TaskWeights {
    pub fn new(lambda_det: f64, lambda_pose: f64, lambda_action: f64) -> Self {
        assert!(
            lambda_det >= 0.0 && lambda_pose >= 0.0 && lambda_action >= 0.0,
            "task weights must be non-negative"
        );
        Self {
            lambda_det,
            lambda_pose,
            lambda_action,
        }
    }
}

/// Forward result of the network for one region.
#[derive(Debug, Clone)]
pub struct HeadOutputs {
    /// (background, person) probabilities; sums to 1.
    pub det_probs: [f64; 2],
    /// Interleaved normalized keypoint coordinates (x0, y0, x1, y1, ...).
    pub pose_coords: Vec<f64>,
    /// Per-action probabilities; sums to 1.
    pub action_probs: Vec<f64>,
    /// Penultimate shared-layer activation (SVM feature).
    pub fc6: Vec<f64>,
    /// Last shared-layer activation (SVM feature).
    pub fc7: Vec<f64>,
}

/// Detection log loss. Returns the value and the gradient with respect
/// to the two pre-softmax logits.
pub fn loss_detection(det_probs: [f64; 2], label: u8) -> (f64, [f64; 2]) {
    debug_assert!(label <= 1);
    let value = -(1.0 - label as f64) * clamped_ln(det_probs[0]) - label as f64 * clamped_ln(det_probs[1]);
    let mut grad = det_probs;
    grad[label as usize] -= 1.0;
    (value, grad)
}

/// Keypoint MSE over visible keypoints, divided by the total keypoint
/// count |K| (not the visible count). Gradient is with respect to the
/// predicted coordinates.
pub fn loss_pose(pose_coords: &[f64], targets: &[NormalizedKeypoint]) -> (f64, Vec<f64>) {
    assert_eq!(pose_coords.len(), 2 * targets.len());
    let k = targets.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pose_coords.len()];
    for (i, t) in targets.iter().enumerate() {
        if !t.visible {
            continue;
        }
        let dx = pose_coords[2 * i] - t.x;
        let dy = pose_coords[2 * i + 1] - t.y;
        value += dx * dx + dy * dy;
        grad[2 * i] = 2.0 * dx / k;
        grad[2 * i + 1] = 2.0 * dy / k;
    }
    (value / k, grad)
}

/// Action log loss. Returns the value and the gradient with respect to
/// the pre-softmax logits.
pub fn loss_action(action_probs: &[f64], label: usize) -> (f64, Vec<f64>) {
    assert!(label < action_probs.len());
    let value = -clamped_ln(action_probs[label]);
    let mut grad = action_probs.to_vec();
    grad[label] -= 1.0;
    (value, grad)
}

/// Per-sample loss breakdown with per-head gradients already scaled by
/// their task weights. Inactive heads contribute exactly zero.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: f64,
    pub det: f64,
    pub pose: f64,
    pub action: f64,
    pub det_grad: [f64; 2],
    pub pose_grad: Vec<f64>,
    pub action_grad: Vec<f64>,
}

pub fn loss_total(outputs: &HeadOutputs, sample: &RegionSample, w: &TaskWeights) -> LossBreakdown {
    let mut det = 0.0;
    let mut det_grad = [0.0; 2];
    if w.lambda_det > 0.0 {
        match sample.det_label {
            DetLabel::Positive | DetLabel::Negative => {
                let label = u8::from(sample.det_label == DetLabel::Positive);
                let (v, g) = loss_detection(outputs.det_probs, label);
                det = v;
                det_grad = [w.lambda_det * g[0], w.lambda_det * g[1]];
            }
            DetLabel::Ignore => {}
        }
    }

    let mut pose = 0.0;
    let mut pose_grad = vec![0.0; outputs.pose_coords.len()];
    if w.lambda_pose > 0.0 {
        if let Some(targets) = &sample.pose_targets {
            let (v, g) = loss_pose(&outputs.pose_coords, targets);
            pose = v;
            for (out, gi) in pose_grad.iter_mut().zip(&g) {
                *out = w.lambda_pose * gi;
            }
        }
    }

    let mut action = 0.0;
    let mut action_grad = vec![0.0; outputs.action_probs.len()];
    if w.lambda_action > 0.0 {
        if let Some(label) = sample.action_label {
            let (v, g) = loss_action(&outputs.action_probs, label);
            action = v;
            for (out, gi) in action_grad.iter_mut().zip(&g) {
                *out = w.lambda_action * gi;
            }
        }
    }

    LossBreakdown {
        total: w.lambda_det * det + w.lambda_pose * pose + w.lambda_action * action,
        det,
        pose,
        action,
        det_grad,
        pose_grad,
        action_grad,
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, NUM_KEYPOINTS};
    use crate::labeling::DetLabel;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

    fn nk(x: f64, y: f64, visible: bool) -> NormalizedKeypoint {
        NormalizedKeypoint { x, y, visible }
    }

    #[test]
    fn detection_loss_values() {
        let (v, _) = loss_detection([0.0, 1.0], 1);
        assert_eq!(v, 0.0);
        let (v, _) = loss_detection([0.5, 0.5], 0);
        assert_relative_eq!(v, std::f64::consts::LN_2, epsilon = 1e-9);
    }

    /// Finite-difference oracle in logit space: evaluates the loss as a
    /// function of logits via softmax.
    fn fd_logit_grad(logits: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..logits.len())
            .map(|i| {
                let mut plus = logits.to_vec();
                plus[i] += h;
                let mut minus = logits.to_vec();
                minus[i] -= h;
                (f(&plus) - f(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn detection_gradient_matches_finite_differences() {
        let logits = [0.3_f64, -0.2];
        let probs = softmax(&logits);
        let (_, grad) = loss_detection([probs[0], probs[1]], 1);
        let fd = fd_logit_grad(&logits, |z| {
            let p = softmax(z);
            loss_detection([p[0], p[1]], 1).0
        });
        for i in 0..2 {
            assert_relative_eq!(grad[i], fd[i], max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn pose_loss_values() {
        let targets: Vec<_> = (0..NUM_KEYPOINTS).map(|_| nk(0.1, -0.1, true)).collect();
        let preds: Vec<f64> = targets.iter().flat_map(|t| [t.x, t.y]).collect();
        assert_eq!(loss_pose(&preds, &targets).0, 0.0);

        let invisible: Vec<_> = (0..NUM_KEYPOINTS).map(|_| nk(0.0, 0.0, false)).collect();
        let (v, g) = loss_pose(&vec![5.0; 26], &invisible);
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));

        // One visible keypoint with residual (0.3, 0.4), rest invisible.
        let mut targets: Vec<_> = (0..NUM_KEYPOINTS).map(|_| nk(0.0, 0.0, false)).collect();
        targets[4] = nk(0.0, 0.0, true);
        let mut preds = vec![0.0; 26];
        preds[8] = 0.3;
        preds[9] = 0.4;
        let (v, _) = loss_pose(&preds, &targets);
        assert_relative_eq!(v, 0.25 / 13.0, epsilon = 1e-9);
    }

    #[test]
    fn pose_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let targets: Vec<_> = (0..NUM_KEYPOINTS)
            .map(|i| nk(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), i % 3 != 0))
            .collect();
        let preds: Vec<f64> = (0..26).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, grad) = loss_pose(&preds, &targets);
        let h = 1e-6;
        for i in 0..preds.len() {
            let mut plus = preds.clone();
            plus[i] += h;
            let mut minus = preds.clone();
            minus[i] -= h;
            let fd = (loss_pose(&plus, &targets).0 - loss_pose(&minus, &targets).0) / (2.0 * h);
            assert_relative_eq!(grad[i], fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn action_loss_values() {
        let mut one_hot = vec![0.0; 10];
        one_hot[3] = 1.0;
        assert_eq!(loss_action(&one_hot, 3).0, 0.0);
        let uniform = vec![0.1; 10];
        assert_relative_eq!(loss_action(&uniform, 7).0, 10.0_f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn action_gradient_matches_finite_differences() {
        let logits = vec![0.0; 10];
        let probs = softmax(&logits);
        let (_, grad) = loss_action(&probs, 2);
        let fd = fd_logit_grad(&logits, |z| loss_action(&softmax(z), 2).0);
        for i in 0..10 {
            assert_relative_eq!(grad[i], fd[i], max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    fn full_sample() -> RegionSample {
        RegionSample {
            region: BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            det_label: DetLabel::Positive,
            pose_targets: Some((0..NUM_KEYPOINTS).map(|_| nk(0.1, 0.1, true)).collect()),
            action_label: Some(2),
            matched_instance: Some(0),
        }
    }

    fn outputs() -> HeadOutputs {
        HeadOutputs {
            det_probs: [0.4, 0.6],
            pose_coords: vec![0.05; 26],
            action_probs: vec![0.1; 10],
            fc6: vec![],
            fc7: vec![],
        }
    }

    #[test]
    fn total_loss_weighting() {
        let sample = full_sample();
        let out = outputs();
        let d = loss_detection(out.det_probs, 1).0;
        let p = loss_pose(&out.pose_coords, sample.pose_targets.as_ref().unwrap()).0;
        let a = loss_action(&out.action_probs, 2).0;

        let pose_only = loss_total(&out, &sample, &TaskWeights::new(0.0, 1.0, 0.0));
        assert_relative_eq!(pose_only.total, p, epsilon = 1e-12);
        assert!(pose_only.det_grad.iter().all(|&x| x == 0.0));
        assert!(pose_only.action_grad.iter().all(|&x| x == 0.0));

        let det_action = loss_total(&out, &sample, &TaskWeights::new(1.0, 0.0, 1.0));
        assert_relative_eq!(det_action.total, d + a, epsilon = 1e-12);

        let joint = loss_total(&out, &sample, &TaskWeights::new(1.0, 1.0, 2.0));
        assert_relative_eq!(joint.total, d + p + 2.0 * a, epsilon = 1e-12);
    }

    #[test]
    fn total_loss_linear_in_lambda() {
        let sample = full_sample();
        let out = outputs();
        let base = loss_total(&out, &sample, &TaskWeights::new(1.0, 0.5, 2.0));
        let scaled = loss_total(&out, &sample, &TaskWeights::new(3.0, 1.5, 6.0));
        assert_relative_eq!(scaled.total, 3.0 * base.total, epsilon = 1e-12);
    }

    #[test]
    fn masking_gives_exact_zero() {
        let mut sample = full_sample();
        sample.det_label = DetLabel::Ignore;
        sample.pose_targets = None;
        sample.action_label = None;
        let breakdown = loss_total(&outputs(), &sample, &TaskWeights::new(1.0, 1.0, 1.0));
        assert_eq!(breakdown.total, 0.0);
        assert!(breakdown.det_grad.iter().all(|&x| x == 0.0));
        assert!(breakdown.pose_grad.iter().all(|&x| x == 0.0));
        assert!(breakdown.action_grad.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn clamp_counter_increments() {
        reset_clamp_events();
        let before = clamp_event_count();
        let (v, _) = loss_detection([1.0, 0.0], 1);
        assert!(v.is_finite());
        assert!(clamp_event_count() > before);
    }
}
