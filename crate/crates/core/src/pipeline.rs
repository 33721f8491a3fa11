//! Experiment orchestration: presets for the task-weight combinations,
//! lazy training sets over generated scenes, and the prediction and
//! evaluation drivers for detection, pose, action classification and
//! action detection, including SVM rescoring and context features.

use std::collections::BTreeMap;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    average_precision, match_detections, non_max_suppression, APResult, Interpolation, PRCurve,
    ScoredBox, ScoredKeypoint, DEFAULT_DET_IOU,
};
use crate::eval::{evaluate_action_detection, evaluate_apk, ActionDetPrediction};
use crate::geometry::{denormalize_keypoints, BBox, NormalizedKeypoint};
use crate::labeling::{
    build_samples, jitter_augment, DetLabel, Instance, RegionSample, ACTION_IOU,
};
use crate::losses::{HeadOutputs, TaskWeights};
use crate::network::{
    score_action_detection, ActionScoreMode, Network, NetworkConfig, TrainSet,
};
use crate::rescore::{
    build_context_feature, build_keypoint_svm_sets, svm_score, svm_train, ContextFeature,
    LinearSvm, ObjectDetection, RegionRecord, NUM_CONTEXT_OBJECTS,
};
use crate::synthdata::{region_tensor, Scene};

/// Task-weight presets for the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentPreset {
    Pose,
    Action,
    Detection,
    DetectionAction,
    DetectionPoseAction,
}

impl ExperimentPreset {
    pub const ALL: [ExperimentPreset; 5] = [
        ExperimentPreset::Pose,
        ExperimentPreset::Action,
        ExperimentPreset::Detection,
        ExperimentPreset::DetectionAction,
        ExperimentPreset::DetectionPoseAction,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentPreset::Pose => "pose",
            ExperimentPreset::Action => "action",
            ExperimentPreset::Detection => "detection",
            ExperimentPreset::DetectionAction => "detection-action",
            ExperimentPreset::DetectionPoseAction => "detection-pose-action",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset '{name}'; expected one of: {}",
                    Self::ALL.map(|p| p.name()).join(", ")
                ))
            })
    }

    /// (lambda_det, lambda_pose, lambda_action).
    pub fn weights(&self) -> TaskWeights {
        match self {
            ExperimentPreset::Pose => TaskWeights::new(0.0, 1.0, 0.0),
            ExperimentPreset::Action => TaskWeights::new(0.0, 0.0, 1.0),
            ExperimentPreset::Detection => TaskWeights::new(1.0, 0.0, 0.0),
            ExperimentPreset::DetectionAction => TaskWeights::new(1.0, 0.0, 1.0),
            ExperimentPreset::DetectionPoseAction => TaskWeights::new(1.0, 1.0, 2.0),
        }
    }
}

/// Render the region crop a network consumes.
pub fn region_input(scene: &Scene, bbox: &BBox, shape: (usize, usize, usize)) -> Array3<f64> {
    debug_assert_eq!(shape.0, scene.canvas.dim().0);
    region_tensor(&scene.canvas.view(), bbox, shape.1, shape.2)
}

/// Jitter augmentation applied while building a training set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Extra jittered copies of each ground-truth box.
    pub jitter_per_instance: usize,
    /// IoU floor the jittered boxes must keep against the original.
    pub min_iou: f64,
    /// When set, augmented regions supervise only the pose and action
    /// heads (their detection label is forced to the ignore band).
    pub restrict_to_pose_action: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            jitter_per_instance: 0,
            min_iou: ACTION_IOU,
            restrict_to_pose_action: false,
        }
    }
}

/// Training set over scenes; region tensors are rendered on demand.
pub struct SceneTrainSet<'a> {
    scenes: &'a [Scene],
    entries: Vec<(usize, RegionSample)>,
    input_shape: (usize, usize, usize),
}

impl SceneTrainSet<'_> {
    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, RegionSample)] {
        &self.entries
    }
}

impl TrainSet for SceneTrainSet<'_> {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn item(&self, index: usize) -> (Array3<f64>, RegionSample) {
        let (scene_idx, sample) = &self.entries[index];
        let input = region_input(&self.scenes[*scene_idx], &sample.region, self.input_shape);
        (input, sample.clone())
    }

    fn det_label(&self, index: usize) -> DetLabel {
        self.entries[index].1.det_label
    }
}

pub fn build_training_set<'a>(
    scenes: &'a [Scene],
    input_shape: (usize, usize, usize),
    augment: &AugmentConfig,
) -> Result<SceneTrainSet<'a>> {
    let mut entries = Vec::new();
    for (si, scene) in scenes.iter().enumerate() {
        for sample in build_samples(&scene.proposals, &scene.instances) {
            entries.push((si, sample));
        }
    }
    if augment.jitter_per_instance > 0 {
        for (si, scene) in scenes.iter().enumerate() {
            for (ii, inst) in scene.instances.iter().enumerate() {
                let seed = (scene.image_id as u64)
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(ii as u64);
                let boxes = jitter_augment(
                    &inst.bbox,
                    augment.jitter_per_instance,
                    augment.min_iou,
                    seed,
                )?;
                for b in boxes {
                    let mut sample = crate::labeling::build_sample(b, &scene.instances);
                    if augment.restrict_to_pose_action {
                        sample.det_label = DetLabel::Ignore;
                    }
                    entries.push((si, sample));
                }
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(SceneTrainSet {
        scenes,
        entries,
        input_shape,
    })
}

pub fn detection_gts(scenes: &[Scene]) -> BTreeMap<usize, Vec<BBox>> {
    scenes
        .iter()
        .map(|s| (s.image_id, s.instances.iter().map(|i| i.bbox).collect()))
        .collect()
}

pub fn instance_gts(scenes: &[Scene]) -> BTreeMap<usize, Vec<Instance>> {
    scenes
        .iter()
        .map(|s| (s.image_id, s.instances.clone()))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionEval {
    pub ap: f64,
    pub curve: PRCurve,
    pub detections: Vec<ScoredBox>,
}

/// Score every proposal with the detection head, run per-image NMS, and
/// evaluate person-detection AP.
pub fn evaluate_detection(
    net: &Network,
    scenes: &[Scene],
    nms_iou: f64,
    interpolation: Interpolation,
) -> Result<DetectionEval> {
    let shape = net.config.input_shape;
    let mut preds = Vec::new();
    for scene in scenes {
        for p in &scene.proposals {
            let out = net.forward(&region_input(scene, p, shape))?;
            preds.push(ScoredBox {
                image_id: scene.image_id,
                score: out.det_probs[1],
                bbox: *p,
            });
        }
    }
    let detections = non_max_suppression(&preds, nms_iou);
    let curve = match_detections(&detections, &detection_gts(scenes), DEFAULT_DET_IOU);
    let ap = average_precision(&curve, interpolation);
    Ok(DetectionEval {
        ap,
        curve,
        detections,
    })
}

/// Interpret the raw pose outputs of one forward pass as keypoints in
/// image coordinates for the given region.
pub fn predicted_keypoints(outputs: &HeadOutputs, region: &BBox) -> Vec<crate::geometry::Keypoint> {
    let normalized: Vec<NormalizedKeypoint> = outputs
        .pose_coords
        .chunks_exact(2)
        .map(|xy| NormalizedKeypoint {
            x: xy[0],
            y: xy[1],
            visible: true,
        })
        .collect();
    denormalize_keypoints(&normalized, region)
}

/// One record per proposal: predicted keypoints plus the fc7 feature the
/// keypoint SVMs consume.
pub fn predict_regions(net: &Network, scenes: &[Scene]) -> Result<Vec<RegionRecord>> {
    let shape = net.config.input_shape;
    let mut records = Vec::new();
    for scene in scenes {
        for p in &scene.proposals {
            let out = net.forward(&region_input(scene, p, shape))?;
            records.push(RegionRecord {
                image_id: scene.image_id,
                region: *p,
                feature: out.fc7.clone(),
                keypoints: predicted_keypoints(&out, p),
            });
        }
    }
    Ok(records)
}

/// Per-keypoint confidence SVMs over region features. A keypoint type
/// whose training split is single-class gets no model (`None`).
pub fn train_keypoint_svms(
    regions: &[RegionRecord],
    gts: &BTreeMap<usize, Vec<Instance>>,
    alpha: f64,
    c: f64,
    seed: u64,
) -> Result<Vec<Option<LinearSvm>>> {
    let sets = build_keypoint_svm_sets(regions, gts, alpha);
    sets.iter()
        .map(|set| {
            let mut features = Vec::with_capacity(set.positives.len() + set.negatives.len());
            let mut labels = Vec::with_capacity(features.capacity());
            for &i in &set.positives {
                features.push(regions[i].feature.clone());
                labels.push(1.0);
            }
            for &i in &set.negatives {
                features.push(regions[i].feature.clone());
                labels.push(-1.0);
            }
            match svm_train(&features, &labels, c, seed) {
                Ok(m) => Ok(Some(m)),
                Err(Error::SingleClassSvm) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Scored keypoint predictions: one prediction per region per keypoint
/// type, scored by the keypoint SVM margin (0 when no model exists).
pub fn keypoint_predictions(
    regions: &[RegionRecord],
    models: &[Option<LinearSvm>],
) -> Result<Vec<Vec<ScoredKeypoint>>> {
    models
        .iter()
        .enumerate()
        .map(|(k, model)| {
            regions
                .iter()
                .map(|r| {
                    let score = match model {
                        Some(m) => svm_score(m, &r.feature)?,
                        None => 0.0,
                    };
                    Ok(ScoredKeypoint {
                        image_id: r.image_id,
                        score,
                        x: r.keypoints[k].x,
                        y: r.keypoints[k].y,
                    })
                })
                .collect()
        })
        .collect()
}

/// Suppress near-duplicate regions per image, keeping the ones with the
/// highest aggregate keypoint confidence. Mirrors running the keypoint
/// predictor on non-maximum-suppressed person detections.
pub fn suppress_duplicate_regions(
    regions: Vec<RegionRecord>,
    models: &[Option<LinearSvm>],
    nms_iou: f64,
) -> Result<Vec<RegionRecord>> {
    let mut scored = Vec::with_capacity(regions.len());
    for r in &regions {
        let mut total = 0.0;
        for model in models.iter().flatten() {
            total += svm_score(model, &r.feature)?;
        }
        scored.push(ScoredBox {
            image_id: r.image_id,
            score: total,
            bbox: r.region,
        });
    }
    let kept = non_max_suppression(&scored, nms_iou);
    // Recover which inputs survived: NMS preserves input order.
    let mut out = Vec::with_capacity(kept.len());
    let mut cursor = 0usize;
    for (r, s) in regions.into_iter().zip(scored) {
        if cursor < kept.len()
            && kept[cursor].image_id == s.image_id
            && kept[cursor].score == s.score
            && kept[cursor].bbox == s.bbox
        {
            cursor += 1;
            out.push(r);
        }
    }
    Ok(out)
}

/// Full APK pipeline: keypoint SVMs fit on the training scenes; on the
/// evaluation scenes, regions are deduplicated by NMS on the aggregate
/// keypoint confidence before emitting scored keypoint predictions.
pub fn evaluate_pose(
    net: &Network,
    train_scenes: &[Scene],
    eval_scenes: &[Scene],
    alpha: f64,
    svm_c: f64,
    seed: u64,
) -> Result<APResult> {
    let train_regions = predict_regions(net, train_scenes)?;
    let models = train_keypoint_svms(
        &train_regions,
        &instance_gts(train_scenes),
        alpha,
        svm_c,
        seed,
    )?;
    let eval_regions = predict_regions(net, eval_scenes)?;
    let eval_regions =
        suppress_duplicate_regions(eval_regions, &models, crate::eval::DEFAULT_NMS_IOU)?;
    let preds = keypoint_predictions(&eval_regions, &models)?;
    Ok(evaluate_apk(&preds, &instance_gts(eval_scenes), alpha))
}

/// Per-ground-truth-instance action scores: (image_id, instance index,
/// per-action scores).
pub type GtActionScores = Vec<(usize, usize, Vec<f64>)>;

/// Softmax action probabilities evaluated on the ground-truth boxes.
pub fn action_scores_on_gt(net: &Network, scenes: &[Scene]) -> Result<GtActionScores> {
    let shape = net.config.input_shape;
    let mut rows = Vec::new();
    for scene in scenes {
        for (ii, inst) in scene.instances.iter().enumerate() {
            let out = net.forward(&region_input(scene, &inst.bbox, shape))?;
            rows.push((scene.image_id, ii, out.action_probs));
        }
    }
    Ok(rows)
}

/// fc6 features of the ground-truth boxes plus jittered copies, paired
/// with the instance actions. Used to fit the per-action SVMs.
pub fn gt_action_features(
    net: &Network,
    scenes: &[Scene],
    jitter_per_instance: usize,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let shape = net.config.input_shape;
    let mut features = Vec::new();
    let mut actions = Vec::new();
    for scene in scenes {
        for (ii, inst) in scene.instances.iter().enumerate() {
            let action = match inst.action {
                Some(a) => a,
                None => continue,
            };
            let mut boxes = vec![inst.bbox];
            if jitter_per_instance > 0 {
                let seed = (scene.image_id as u64)
                    .wrapping_mul(0x517C_C1B7_2722_0A95)
                    .wrapping_add(ii as u64);
                boxes.extend(jitter_augment(
                    &inst.bbox,
                    jitter_per_instance,
                    ACTION_IOU,
                    seed,
                )?);
            }
            for b in boxes {
                let out = net.forward(&region_input(scene, &b, shape))?;
                features.push(out.fc6);
                actions.push(action);
            }
        }
    }
    Ok((features, actions))
}

/// One linear SVM per action over fc6 features (one-vs-rest).
pub fn train_action_svms(
    features: &[Vec<f64>],
    actions: &[usize],
    num_actions: usize,
    c: f64,
    seed: u64,
) -> Result<Vec<LinearSvm>> {
    (0..num_actions)
        .map(|a| {
            let labels: Vec<f64> = actions
                .iter()
                .map(|&act| if act == a { 1.0 } else { -1.0 })
                .collect();
            svm_train(features, &labels, c, seed)
        })
        .collect()
}

/// Score ground-truth boxes with the per-action SVMs over fc6 features.
pub fn action_svm_scores_on_gt(
    net: &Network,
    scenes: &[Scene],
    svms: &[LinearSvm],
) -> Result<GtActionScores> {
    let shape = net.config.input_shape;
    let mut rows = Vec::new();
    for scene in scenes {
        for (ii, inst) in scene.instances.iter().enumerate() {
            let out = net.forward(&region_input(scene, &inst.bbox, shape))?;
            let scores: Result<Vec<f64>> =
                svms.iter().map(|m| svm_score(m, &out.fc6)).collect();
            rows.push((scene.image_id, ii, scores?));
        }
    }
    Ok(rows)
}

/// Ground-truth actions aligned with score rows.
pub fn gt_actions_for_rows(rows: &GtActionScores, gts: &BTreeMap<usize, Vec<Instance>>) -> Vec<usize> {
    rows.iter()
        .map(|&(img, ii, _)| gts[&img][ii].action.expect("scored instances carry actions"))
        .collect()
}

/// A context-object scorer is an ordinary network whose action head
/// ranges over the object vocabulary instead of person actions.
pub fn object_scorer_config(input_shape: (usize, usize, usize)) -> NetworkConfig {
    NetworkConfig {
        input_shape,
        num_actions: NUM_CONTEXT_OBJECTS,
        ..NetworkConfig::default()
    }
}

/// Training set for the object scorer: scene proposals plus jittered
/// object boxes, labeled against the objects instead of the persons.
pub fn build_object_training_set<'a>(
    scenes: &'a [Scene],
    input_shape: (usize, usize, usize),
    jitter_per_object: usize,
) -> Result<ObjectTrainSet<'a>> {
    let mut entries = Vec::new();
    for (si, scene) in scenes.iter().enumerate() {
        let object_instances: Vec<Instance> = scene
            .objects
            .iter()
            .map(|(b, class)| Instance::new(*b, None, Some(*class)))
            .collect();
        for sample in build_samples(&scene.proposals, &object_instances) {
            entries.push((si, sample));
        }
        for (oi, (obox, _)) in scene.objects.iter().enumerate() {
            entries.push((si, crate::labeling::build_sample(*obox, &object_instances)));
            if jitter_per_object > 0 {
                let seed = (scene.image_id as u64)
                    .wrapping_mul(0xD1B5_4A32_D192_ED03)
                    .wrapping_add(oi as u64);
                for b in jitter_augment(obox, jitter_per_object, ACTION_IOU, seed)? {
                    entries.push((si, crate::labeling::build_sample(b, &object_instances)));
                }
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(ObjectTrainSet {
        scenes,
        entries,
        input_shape,
    })
}

/// Same lazy layout as [`SceneTrainSet`], but labeled against objects.
pub struct ObjectTrainSet<'a> {
    scenes: &'a [Scene],
    entries: Vec<(usize, RegionSample)>,
    input_shape: (usize, usize, usize),
}

impl TrainSet for ObjectTrainSet<'_> {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn item(&self, index: usize) -> (Array3<f64>, RegionSample) {
        let (scene_idx, sample) = &self.entries[index];
        let input = region_input(&self.scenes[*scene_idx], &sample.region, self.input_shape);
        (input, sample.clone())
    }

    fn det_label(&self, index: usize) -> DetLabel {
        self.entries[index].1.det_label
    }
}

/// Run the object scorer over scene proposals, producing per-class
/// object detections after per-class NMS.
pub fn detect_objects(
    net: &Network,
    scenes: &[Scene],
    nms_iou: f64,
) -> Result<BTreeMap<usize, Vec<ObjectDetection>>> {
    let shape = net.config.input_shape;
    let num_classes = net.config.num_actions;
    let mut per_image: BTreeMap<usize, Vec<ObjectDetection>> = BTreeMap::new();
    for scene in scenes {
        let mut outputs = Vec::with_capacity(scene.proposals.len());
        for p in &scene.proposals {
            outputs.push(net.forward(&region_input(scene, p, shape))?);
        }
        let mut detections = Vec::new();
        for class in 0..num_classes {
            let candidates: Vec<ScoredBox> = scene
                .proposals
                .iter()
                .zip(&outputs)
                .map(|(p, out)| ScoredBox {
                    image_id: scene.image_id,
                    score: out.det_probs[1] * out.action_probs[class],
                    bbox: *p,
                })
                .collect();
            for kept in non_max_suppression(&candidates, nms_iou) {
                detections.push(ObjectDetection {
                    bbox: kept.bbox,
                    class,
                    score: kept.score,
                });
            }
        }
        per_image.insert(scene.image_id, detections);
    }
    Ok(per_image)
}

/// Context features for each scored ground-truth instance: own score per
/// action, maxima over the other instances of the image, and maxima of
/// the overlapping object detections.
pub fn build_gt_context_features(
    rows: &GtActionScores,
    gts: &BTreeMap<usize, Vec<Instance>>,
    objects: &BTreeMap<usize, Vec<ObjectDetection>>,
    num_actions: usize,
) -> Vec<Vec<ContextFeature>> {
    let empty: Vec<ObjectDetection> = Vec::new();
    rows.iter()
        .map(|(img, ii, scores)| {
            let region = gts[img][*ii].bbox;
            let others: Vec<Vec<f64>> = rows
                .iter()
                .filter(|(oimg, oii, _)| oimg == img && oii != ii)
                .map(|(_, _, s)| s.clone())
                .collect();
            let objs = objects.get(img).unwrap_or(&empty);
            (0..num_actions)
                .map(|a| {
                    build_context_feature(
                        &region,
                        scores[a],
                        &others,
                        objs,
                        num_actions,
                        NUM_CONTEXT_OBJECTS,
                    )
                })
                .collect()
        })
        .collect()
}

/// One rescoring SVM per action over context features: an instance is a
/// positive for action `a` iff its ground-truth action is `a`.
pub fn train_context_svms(
    features: &[Vec<ContextFeature>],
    gt_actions: &[usize],
    num_actions: usize,
    c: f64,
    seed: u64,
) -> Result<Vec<LinearSvm>> {
    assert_eq!(features.len(), gt_actions.len());
    (0..num_actions)
        .map(|a| {
            let feats: Vec<Vec<f64>> = features.iter().map(|f| f[a].to_vec()).collect();
            let labels: Vec<f64> = gt_actions
                .iter()
                .map(|&act| if act == a { 1.0 } else { -1.0 })
                .collect();
            if labels.iter().all(|&y| y < 0.0) || labels.iter().all(|&y| y > 0.0) {
                // Action absent from (or covering all of) the training
                // split: a constant scorer keeps the rescored list total.
                let dim = feats.first().map_or(0, Vec::len);
                return Ok(LinearSvm {
                    weights: vec![0.0; dim],
                    bias: if labels.first().copied().unwrap_or(-1.0) > 0.0 { 1.0 } else { -1.0 },
                    c,
                    seed,
                });
            }
            svm_train(&feats, &labels, c, seed)
        })
        .collect()
}

/// Score all proposals for action detection and apply per-action NMS.
pub fn predict_action_detections(
    net: &Network,
    scenes: &[Scene],
    mode: ActionScoreMode,
    nms_iou: f64,
) -> Result<Vec<ActionDetPrediction>> {
    let shape = net.config.input_shape;
    let num_actions = net.config.num_actions;
    let mut preds = Vec::new();
    for scene in scenes {
        let mut scored: Vec<(BBox, Vec<f64>)> = Vec::with_capacity(scene.proposals.len());
        for p in &scene.proposals {
            let out = net.forward(&region_input(scene, p, shape))?;
            scored.push((*p, score_action_detection(&out, mode)));
        }
        for action in 0..num_actions {
            let candidates: Vec<ScoredBox> = scored
                .iter()
                .map(|(b, s)| ScoredBox {
                    image_id: scene.image_id,
                    score: s[action],
                    bbox: *b,
                })
                .collect();
            for kept in non_max_suppression(&candidates, nms_iou) {
                preds.push(ActionDetPrediction {
                    image_id: kept.image_id,
                    bbox: kept.bbox,
                    action,
                    score: kept.score,
                });
            }
        }
    }
    Ok(preds)
}

/// Action detection with SVM scoring: every proposal is scored per action
/// by the SVM margin over the network's fc6 features, then suppressed per
/// action. Used for the single-task baselines that lack a trained action
/// softmax head (detection-only) or detection head (action-only).
pub fn svm_action_detections(
    net: &Network,
    scenes: &[Scene],
    svms: &[LinearSvm],
    nms_iou: f64,
) -> Result<Vec<ActionDetPrediction>> {
    let shape = net.config.input_shape;
    let mut preds = Vec::new();
    for scene in scenes {
        let mut scored: Vec<(BBox, Vec<f64>)> = Vec::with_capacity(scene.proposals.len());
        for p in &scene.proposals {
            let out = net.forward(&region_input(scene, p, shape))?;
            let margins: Result<Vec<f64>> = svms.iter().map(|m| svm_score(m, &out.fc6)).collect();
            scored.push((*p, margins?));
        }
        for action in 0..svms.len() {
            let candidates: Vec<ScoredBox> = scored
                .iter()
                .map(|(b, s)| ScoredBox {
                    image_id: scene.image_id,
                    score: s[action],
                    bbox: *b,
                })
                .collect();
            for kept in non_max_suppression(&candidates, nms_iou) {
                preds.push(ActionDetPrediction {
                    image_id: kept.image_id,
                    bbox: kept.bbox,
                    action,
                    score: kept.score,
                });
            }
        }
    }
    Ok(preds)
}

/// Action-detection AP for a single-task network rescored with fc6-feature
/// action SVMs fit on the training scenes.
pub fn evaluate_action_det_svm(
    net: &Network,
    train_scenes: &[Scene],
    eval_scenes: &[Scene],
    jitter_per_instance: usize,
    svm_c: f64,
    seed: u64,
    nms_iou: f64,
    iou_threshold: f64,
) -> Result<APResult> {
    let (features, actions) = gt_action_features(net, train_scenes, jitter_per_instance)?;
    let svms = train_action_svms(
        &features,
        &actions,
        net.config.num_actions,
        svm_c,
        seed,
    )?;
    let preds = svm_action_detections(net, eval_scenes, &svms, nms_iou)?;
    Ok(evaluate_action_detection(
        &preds,
        &instance_gts(eval_scenes),
        net.config.num_actions,
        iou_threshold,
    ))
}

/// Action-detection AP over scenes.
pub fn evaluate_action_det(
    net: &Network,
    scenes: &[Scene],
    mode: ActionScoreMode,
    nms_iou: f64,
    iou_threshold: f64,
) -> Result<APResult> {
    let preds = predict_action_detections(net, scenes, mode, nms_iou)?;
    Ok(evaluate_action_detection(
        &preds,
        &instance_gts(scenes),
        net.config.num_actions,
        iou_threshold,
    ))
}
