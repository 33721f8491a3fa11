//! Linear-SVM machinery: per-keypoint confidence classifiers over
//! network features, per-action classifiers, and context rescoring with
//! a composite (own score, other instances, context objects) feature.
//!
//! Training minimizes `0.5*||w||^2 + C * sum hinge(y_i (w.x_i + b))` by
//! deterministic full-batch subgradient descent with suffix-averaged
//! iterates; the bias of the returned model is refit exactly by a
//! breakpoint scan. The emitted objective trace is the running best of
//! the averaged iterates and is therefore monotone non-increasing.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Keypoint, NUM_KEYPOINTS};
use crate::labeling::Instance;

pub const DEFAULT_SVM_C: f64 = 1.0;
pub const SVM_ITERATIONS: usize = 10_000;
/// Strict lower bound on region overlap for a context object to count.
pub const CONTEXT_OBJECT_IOU: f64 = 0.1;

/// Context object vocabulary (synthetic stand-ins for the four context
/// detector classes).
pub const CONTEXT_OBJECT_CLASSES: [&str; 4] = ["horse", "bike", "motorcycle", "tvmonitor"];
pub const NUM_CONTEXT_OBJECTS: usize = CONTEXT_OBJECT_CLASSES.len();

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub seed: u64,
}

/// Hinge objective `0.5*||w||^2 + C * sum hinge`.
pub fn svm_objective(w: &[f64], b: f64, features: &[Vec<f64>], labels: &[f64], c: f64) -> f64 {
    let reg: f64 = 0.5 * w.iter().map(|x| x * x).sum::<f64>();
    let hinge: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let margin = y * (dot(w, x) + b);
            (1.0 - margin).max(0.0)
        })
        .sum();
    reg + c * hinge
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact 1-D bias fit for fixed weights: the hinge sum is piecewise
/// linear in b, so the optimum sits on a breakpoint.
fn refit_bias(w: &[f64], features: &[Vec<f64>], labels: &[f64], c: f64, current: f64) -> f64 {
    let margins: Vec<f64> = features.iter().map(|x| dot(w, x)).collect();
    let mut best_b = current;
    let mut best_obj = svm_objective(w, current, features, labels, c);
    for (&s, &y) in margins.iter().zip(labels) {
        let b = y - s;
        let obj = svm_objective(w, b, features, labels, c);
        if obj < best_obj {
            best_obj = obj;
            best_b = b;
        }
    }
    best_b
}

/// Train a linear SVM. Deterministic given (data, C, seed). Returns the
/// model and the (monotone) objective trace of the averaged iterates.
pub fn svm_train_traced(
    features: &[Vec<f64>],
    labels: &[f64],
    c: f64,
    seed: u64,
) -> Result<(LinearSvm, Vec<f64>)> {
    assert!(c > 0.0);
    assert_eq!(features.len(), labels.len());
    if features.is_empty()
        || !labels.iter().any(|&y| y > 0.0)
        || !labels.iter().any(|&y| y < 0.0)
    {
        return Err(Error::SingleClassSvm);
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: features.iter().map(Vec::len).find(|&l| l != dim).unwrap_or(dim),
        });
    }

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut w_sum = vec![0.0; dim];
    let mut b_sum = 0.0;
    let mut avg_count = 0usize;
    let half = SVM_ITERATIONS / 2;
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut trace = Vec::new();

    for t in 1..=SVM_ITERATIONS {
        // Subgradient of the hinge sum at the current iterate.
        let mut push = vec![0.0; dim];
        let mut push_b = 0.0;
        for (x, &y) in features.iter().zip(labels) {
            if y * (dot(&w, x) + b) < 1.0 {
                for (p, &xi) in push.iter_mut().zip(x) {
                    *p += y * xi;
                }
                push_b += y;
            }
        }
        let step = 1.0 / t as f64;
        for (wi, &pi) in w.iter_mut().zip(&push) {
            *wi = (1.0 - step) * *wi + step * c * pi;
        }
        b += step * c * push_b;

        if t > half {
            for (s, &wi) in w_sum.iter_mut().zip(&w) {
                *s += wi;
            }
            b_sum += b;
            avg_count += 1;
            if t % 100 == 0 || t == SVM_ITERATIONS {
                let n = avg_count as f64;
                let w_avg: Vec<f64> = w_sum.iter().map(|s| s / n).collect();
                let b_avg = b_sum / n;
                let obj = svm_objective(&w_avg, b_avg, features, labels, c);
                let better = best.as_ref().map_or(true, |&(_, _, bo)| obj < bo);
                if better {
                    best = Some((w_avg, b_avg, obj));
                }
                trace.push(best.as_ref().expect("set above").2);
            }
        }
    }

    let (w_best, b_best, _) = best.expect("at least one averaged evaluation");
    let bias = refit_bias(&w_best, features, labels, c, b_best);
    Ok((
        LinearSvm {
            weights: w_best,
            bias,
            c,
            seed,
        },
        trace,
    ))
}

pub fn svm_train(features: &[Vec<f64>], labels: &[f64], c: f64, seed: u64) -> Result<LinearSvm> {
    svm_train_traced(features, labels, c, seed).map(|(m, _)| m)
}

/// Uncalibrated margin `w.x + b`.
pub fn svm_score(model: &LinearSvm, feature: &[f64]) -> Result<f64> {
    if feature.len() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            got: feature.len(),
        });
    }
    Ok(dot(&model.weights, feature) + model.bias)
}

const SVM_MAGIC: &[u8; 4] = b"DKSV";
const SVM_VERSION: u32 = 1;

pub fn save_svm(model: &LinearSvm, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SVM_MAGIC)?;
    w.write_u32::<LittleEndian>(SVM_VERSION)?;
    w.write_u64::<LittleEndian>(model.weights.len() as u64)?;
    for &v in &model.weights {
        w.write_u64::<LittleEndian>(v.to_bits())?;
    }
    w.write_u64::<LittleEndian>(model.bias.to_bits())?;
    w.write_u64::<LittleEndian>(model.c.to_bits())?;
    w.write_u64::<LittleEndian>(model.seed)?;
    w.flush()?;
    Ok(())
}

pub fn load_svm(path: &Path) -> Result<LinearSvm> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SVM_MAGIC {
        return Err(Error::Corrupt(format!("bad SVM magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != SVM_VERSION {
        return Err(Error::Corrupt(format!("unsupported SVM version {version}")));
    }
    let dim = r.read_u64::<LittleEndian>()? as usize;
    let mut weights = Vec::with_capacity(dim);
    for _ in 0..dim {
        weights.push(f64::from_bits(r.read_u64::<LittleEndian>()?));
    }
    let bias = f64::from_bits(r.read_u64::<LittleEndian>()?);
    let c = f64::from_bits(r.read_u64::<LittleEndian>()?);
    let seed = r.read_u64::<LittleEndian>()?;
    Ok(LinearSvm {
        weights,
        bias,
        c,
        seed,
    })
}

/// One evaluated region: its predicted keypoints in image coordinates
/// plus the feature vector the keypoint SVMs train on.
#[derive(Debug, Clone)]
pub struct RegionRecord {
    pub image_id: usize,
    pub region: BBox,
    pub feature: Vec<f64>,
    pub keypoints: Vec<Keypoint>,
}

/// Per-keypoint train split: indices into the region list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeypointSvmSet {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Partition regions per keypoint type: a region is a positive for
/// keypoint k iff its predicted keypoint k lands strictly within
/// `alpha * H` of a visible ground-truth keypoint k (APK correctness);
/// all other regions are negatives.
pub fn build_keypoint_svm_sets(
    regions: &[RegionRecord],
    gts: &BTreeMap<usize, Vec<Instance>>,
    alpha: f64,
) -> Vec<KeypointSvmSet> {
    let anchors: BTreeMap<usize, Vec<(&Instance, f64)>> = gts
        .iter()
        .map(|(&img, instances)| {
            (
                img,
                instances
                    .iter()
                    .filter_map(|i| {
                        i.keypoints
                            .as_deref()
                            .and_then(crate::geometry::torso_height)
                            .map(|h| (i, h))
                    })
                    .collect(),
            )
        })
        .collect();

    (0..NUM_KEYPOINTS)
        .map(|k| {
            let mut set = KeypointSvmSet {
                positives: Vec::new(),
                negatives: Vec::new(),
            };
            for (ri, r) in regions.iter().enumerate() {
                let pred = &r.keypoints[k];
                let correct = anchors.get(&r.image_id).map_or(false, |list| {
                    list.iter().any(|(inst, h)| {
                        let kps = inst.keypoints.as_ref().expect("anchor has keypoints");
                        kps[k].visible && pred.distance(&kps[k]) < alpha * h
                    })
                });
                if correct {
                    set.positives.push(ri);
                } else {
                    set.negatives.push(ri);
                }
            }
            set
        })
        .collect()
}

/// A context object detection (from a detection-only scorer).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectDetection {
    pub bbox: BBox,
    pub class: usize,
    pub score: f64,
}

/// Composite rescoring feature: own action score, per-action maxima over
/// the other instances in the image, and per-class maxima of context
/// objects overlapping the region by strictly more than 0.1 IoU.
/// Missing components are filled with 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFeature {
    pub own_score: f64,
    pub others_max: Vec<f64>,
    pub object_max: Vec<f64>,
}

impl ContextFeature {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.others_max.len() + self.object_max.len());
        v.push(self.own_score);
        v.extend_from_slice(&self.others_max);
        v.extend_from_slice(&self.object_max);
        v
    }
}

pub fn build_context_feature(
    region: &BBox,
    own_score: f64,
    other_instance_scores: &[Vec<f64>],
    objects: &[ObjectDetection],
    num_actions: usize,
    num_object_classes: usize,
) -> ContextFeature {
    let mut others_max = vec![0.0; num_actions];
    for scores in other_instance_scores {
        for (m, &s) in others_max.iter_mut().zip(scores) {
            if s > *m {
                *m = s;
            }
        }
    }
    let mut object_max = vec![0.0; num_object_classes];
    for obj in objects {
        if obj.class < num_object_classes
            && region.iou(&obj.bbox) > CONTEXT_OBJECT_IOU
            && obj.score > object_max[obj.class]
        {
            object_max[obj.class] = obj.score;
        }
    }
    ContextFeature {
        own_score,
        others_max,
        object_max,
    }
}

/// Replace each action score with the corresponding SVM margin.
/// `features[i][a]` is the context feature of box i for action a;
/// `models[a]` is the per-action SVM.
pub fn rescore_actions(
    features: &[Vec<ContextFeature>],
    models: &[LinearSvm],
) -> Result<Vec<Vec<f64>>> {
    features
        .iter()
        .map(|per_action| {
            per_action
                .iter()
                .zip(models)
                .map(|(f, m)| svm_score(m, &f.to_vec()))
                .collect()
        })
        .collect()
}
