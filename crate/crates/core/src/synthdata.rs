//! Deterministic synthetic scene generator: procedural canvases with
//! person instances (boxes, 13-keypoint skeletons, action labels),
//! co-occurring context objects, and stratified region proposals.
//!
//! Scenes render person appearance, keypoint markers and object blobs
//! into a 3-channel canvas; region inputs are bilinear crops of that
//! canvas, so no image decoding is involved anywhere.

use ndarray::{Array3, ArrayView3};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, Keypoint, NUM_KEYPOINTS};
use crate::labeling::{jitter_augment_with, Instance, JitterParams};
use crate::rescore::NUM_CONTEXT_OBJECTS;

/// The ten action names used in reports.
pub const ACTION_NAMES: [&str; 10] = [
    "Jumping",
    "Phoning",
    "Playing Instrument",
    "Reading",
    "Riding Bike",
    "Riding Horse",
    "Running",
    "Taking Photo",
    "Using Computer",
    "Walking",
];
pub const NUM_ACTIONS: usize = ACTION_NAMES.len();

/// Unit-box skeleton template (x right, y down, both in [0, 1]).
const SKELETON_TEMPLATE: [(f64, f64); NUM_KEYPOINTS] = [
    (0.50, 0.06), // Nose
    (0.30, 0.20), // R_Shoulder
    (0.20, 0.40), // R_Elbow
    (0.16, 0.56), // R_Wrist
    (0.70, 0.20), // L_Shoulder
    (0.80, 0.40), // L_Elbow
    (0.84, 0.56), // L_Wrist
    (0.36, 0.64), // R_Hip
    (0.34, 0.80), // R_Knee
    (0.32, 0.96), // R_Ankle
    (0.64, 0.64), // L_Hip
    (0.66, 0.80), // L_Knee
    (0.68, 0.96), // L_Ankle
];

/// Action -> (context object class, co-occurrence probability).
pub type CoOccurrence = Vec<Option<(usize, f64)>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    /// (height, width) of the canvas.
    pub canvas_size: (usize, usize),
    pub persons_min: usize,
    pub persons_max: usize,
    pub actions: Vec<String>,
    pub co_occurrence: CoOccurrence,
    /// Scale of the per-action limb deformation, in unit-box coordinates.
    pub pose_amplitude: f64,
    /// Probability each keypoint is marked invisible.
    pub occlusion_rate: f64,
    /// Amplitude of the uniform background noise.
    pub noise_level: f64,
    /// When false, persons are drawn identically regardless of action, so
    /// only context objects carry the action signal.
    pub appearance_encodes_action: bool,
    pub proposals_per_instance: usize,
    pub background_proposals: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let mut co_occurrence: CoOccurrence = vec![None; NUM_ACTIONS];
        co_occurrence[5] = Some((0, 0.8)); // Riding Horse -> horse
        co_occurrence[4] = Some((1, 0.8)); // Riding Bike -> bike
        co_occurrence[1] = Some((2, 0.5)); // Phoning -> motorcycle blob as distractor-free prop
        co_occurrence[8] = Some((3, 0.8)); // Using Computer -> tv monitor
        Self {
            canvas_size: (64, 64),
            persons_min: 1,
            persons_max: 2,
            actions: ACTION_NAMES.iter().map(|s| s.to_string()).collect(),
            co_occurrence,
            pose_amplitude: 0.08,
            occlusion_rate: 0.05,
            noise_level: 0.05,
            appearance_encodes_action: true,
            proposals_per_instance: 8,
            background_proposals: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub image_id: usize,
    pub canvas: Array3<f32>,
    pub instances: Vec<Instance>,
    /// Context objects as (box, class index into the object vocabulary).
    pub objects: Vec<(BBox, usize)>,
    pub proposals: Vec<BBox>,
}

fn scene_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mixed = master_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x1234_5678_9ABC_DEF1);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Per-action deterministic limb deformation of the template.
fn action_skeleton(action: usize, amplitude: f64) -> [(f64, f64); NUM_KEYPOINTS] {
    let mut kps = SKELETON_TEMPLATE;
    let phase = action as f64 * std::f64::consts::TAU / NUM_ACTIONS as f64;
    // Arms swing with the action phase, legs counter-swing.
    for &(i, scale) in &[(2usize, 0.6), (3, 1.0), (5, 0.6), (6, 1.0)] {
        kps[i].0 += amplitude * scale * phase.cos();
        kps[i].1 += amplitude * scale * phase.sin();
    }
    for &(i, scale) in &[(8usize, 0.5), (9, 1.0), (11, 0.5), (12, 1.0)] {
        kps[i].0 -= amplitude * scale * phase.sin();
        kps[i].1 += amplitude * scale * (phase * 0.5).cos() - amplitude * scale;
    }
    kps
}

fn person_keypoints(
    bbox: &BBox,
    action: usize,
    spec: &SceneSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<Keypoint> {
    let template = action_skeleton(action, spec.pose_amplitude);
    let (w, h) = (bbox.width(), bbox.height());
    template
        .iter()
        .map(|&(ux, uy)| {
            let jx = rng.gen_range(-0.015..0.015) * w;
            let jy = rng.gen_range(-0.015..0.015) * h;
            let visible = rng.gen_range(0.0..1.0) >= spec.occlusion_rate;
            Keypoint::new(bbox.x_min + ux * w + jx, bbox.y_min + uy * h + jy, visible)
        })
        .collect()
}

fn fill_rect(canvas: &mut Array3<f32>, ch: usize, bbox: &BBox, value: f32) {
    let (_, h, w) = canvas.dim();
    let x0 = bbox.x_min.floor().max(0.0) as usize;
    let y0 = bbox.y_min.floor().max(0.0) as usize;
    let x1 = (bbox.x_max.ceil() as usize).min(w);
    let y1 = (bbox.y_max.ceil() as usize).min(h);
    for y in y0..y1 {
        for x in x0..x1 {
            canvas[[ch, y, x]] = value;
        }
    }
}

fn fill_disc(canvas: &mut Array3<f32>, ch: usize, cx: f64, cy: f64, radius: f64, value: f32) {
    let (_, h, w) = canvas.dim();
    let x0 = (cx - radius).floor().max(0.0) as usize;
    let y0 = (cy - radius).floor().max(0.0) as usize;
    let x1 = ((cx + radius).ceil() as usize).min(w);
    let y1 = ((cy + radius).ceil() as usize).min(h);
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= radius * radius {
                canvas[[ch, y, x]] = canvas[[ch, y, x]].max(value);
            }
        }
    }
}

fn render_scene(spec: &SceneSpec, scene: &mut Scene, rng: &mut ChaCha8Rng) {
    let (h, w) = spec.canvas_size;
    let mut canvas = Array3::zeros((3, h, w));
    for v in canvas.iter_mut() {
        *v = rng.gen_range(0.0..spec.noise_level) as f32;
    }

    // Objects first so persons draw over them where they overlap. The
    // class identity lives only in channel 1, which person rectangles
    // overwrite: a crop of a person box reveals that an object overlaps
    // (the channel-0 marker) but not which class it is, so the object
    // class must be read from the object's own box.
    for (bbox, class) in &scene.objects {
        let tone = 0.35 + 0.15 * *class as f32;
        fill_rect(&mut canvas, 0, bbox, 0.4);
        fill_rect(&mut canvas, 1, bbox, tone);
    }

    for inst in &scene.instances {
        let bbox = &inst.bbox;
        let action = inst.action.unwrap_or(0);
        let appearance = if spec.appearance_encodes_action {
            0.15 + 0.8 * action as f32 / (NUM_ACTIONS.max(2) - 1) as f32
        } else {
            0.5
        };
        fill_rect(&mut canvas, 1, bbox, appearance);
        // Torso slab and head disc give the silhouette channel.
        let torso = BBox::new(
            bbox.x_min + 0.28 * bbox.width(),
            bbox.y_min + 0.18 * bbox.height(),
            bbox.x_min + 0.72 * bbox.width(),
            bbox.y_min + 0.66 * bbox.height(),
        )
        .expect("torso inside person box");
        fill_rect(&mut canvas, 0, &torso, 0.85);
        let (cx, _) = bbox.center();
        fill_disc(
            &mut canvas,
            0,
            cx,
            bbox.y_min + 0.08 * bbox.height(),
            0.12 * bbox.width(),
            0.85,
        );
        // Keypoint markers with per-type intensity.
        if let Some(kps) = &inst.keypoints {
            for (k, kpnt) in kps.iter().enumerate() {
                if !kpnt.visible {
                    continue;
                }
                let tone = 0.3 + 0.7 * k as f32 / (NUM_KEYPOINTS - 1) as f32;
                fill_disc(&mut canvas, 2, kpnt.x, kpnt.y, 1.6, tone);
            }
        }
    }
    scene.canvas = canvas;
}

fn place_person(spec: &SceneSpec, existing: &[Instance], rng: &mut ChaCha8Rng) -> BBox {
    let (ch, cw) = (spec.canvas_size.0 as f64, spec.canvas_size.1 as f64);
    let mut fallback = None;
    for _ in 0..50 {
        let height = rng.gen_range(0.38..0.62) * ch;
        let width = height * rng.gen_range(0.42..0.58);
        let x0 = rng.gen_range(0.0..(cw - width));
        let y0 = rng.gen_range(0.0..(ch - height));
        let bbox = BBox::new(x0, y0, x0 + width, y0 + height).expect("positive extents");
        if fallback.is_none() {
            fallback = Some(bbox);
        }
        if existing.iter().all(|i| i.bbox.iou(&bbox) < 0.25) {
            return bbox;
        }
    }
    fallback.expect("at least one candidate")
}

fn place_object(person: &BBox, spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Option<BBox> {
    let (ch, cw) = (spec.canvas_size.0 as f64, spec.canvas_size.1 as f64);
    let ow = 0.7 * person.width();
    let oh = 0.5 * person.height();
    // Centered on the person's right edge (wrapped to the left edge when
    // it would leave the canvas) so it overlaps the person region.
    let (pcx, pcy) = person.center();
    let cx = if person.x_max + 0.5 * ow <= cw {
        person.x_max
    } else {
        person.x_min
    };
    let cy = (pcy + rng.gen_range(-0.1..0.1) * person.height()).clamp(0.5 * oh, ch - 0.5 * oh);
    let _ = pcx;
    let bbox = BBox::new(
        (cx - 0.5 * ow).max(0.0),
        (cy - 0.5 * oh).max(0.0),
        (cx + 0.5 * ow).min(cw),
        (cy + 0.5 * oh).min(ch),
    )
    .ok()?;
    (bbox.iou(person) > 0.1).then_some(bbox)
}

pub fn generate_scene(spec: &SceneSpec, image_id: usize) -> Scene {
    let mut rng = scene_rng(spec.seed, image_id);
    let n_persons = rng.gen_range(spec.persons_min..=spec.persons_max);
    let mut instances: Vec<Instance> = Vec::with_capacity(n_persons);
    let mut objects = Vec::new();
    for _ in 0..n_persons {
        let bbox = place_person(spec, &instances, &mut rng);
        let action = rng.gen_range(0..spec.actions.len());
        let kps = person_keypoints(&bbox, action, spec, &mut rng);
        if let Some(Some((class, prob))) = spec.co_occurrence.get(action) {
            if rng.gen_range(0.0..1.0) < *prob {
                if let Some(obox) = place_object(&bbox, spec, &mut rng) {
                    assert!(*class < NUM_CONTEXT_OBJECTS);
                    objects.push((obox, *class));
                }
            }
        }
        instances.push(Instance::new(bbox, Some(kps), Some(action)));
    }
    let mut scene = Scene {
        image_id,
        canvas: Array3::zeros((3, 1, 1)),
        instances,
        objects,
        proposals: Vec::new(),
    };
    render_scene(spec, &mut scene, &mut rng);
    scene.proposals = generate_proposals(
        &scene,
        spec.proposals_per_instance,
        spec.background_proposals,
        spec.canvas_size,
        rng.gen(),
    );
    scene
}

/// Deterministic per master seed; scenes derive independent per-index
/// seeds so generation order is irrelevant.
pub fn generate_dataset(spec: &SceneSpec, n_scenes: usize) -> Vec<Scene> {
    assert!(n_scenes >= 1);
    (0..n_scenes).map(|i| generate_scene(spec, i)).collect()
}

const IOU_BANDS: [(f64, f64); 4] = [(0.0, 0.3), (0.3, 0.5), (0.5, 0.7), (0.7, 1.0)];

/// Proposals stratified across IoU bands per instance plus uniform
/// background boxes.
pub fn generate_proposals(
    scene: &Scene,
    n_per_instance: usize,
    n_background: usize,
    canvas_size: (usize, usize),
    seed: u64,
) -> Vec<BBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ch, cw) = (canvas_size.0 as f64, canvas_size.1 as f64);
    let mut proposals = Vec::new();
    for inst in &scene.instances {
        for j in 0..n_per_instance {
            let (lo, hi) = IOU_BANDS[j % IOU_BANDS.len()];
            proposals.push(sample_in_band(&inst.bbox, lo, hi, &mut rng));
        }
    }
    // A class-agnostic proposal source covers every object, not just the
    // persons; without these the context-object scorer has nothing to rank.
    for (obox, _) in &scene.objects {
        proposals.push(sample_in_band(obox, 0.7, 1.0, &mut rng));
        proposals.push(sample_in_band(obox, 0.5, 0.7, &mut rng));
    }
    for _ in 0..n_background {
        let mut accepted = None;
        for _ in 0..100 {
            let w = rng.gen_range(0.2..0.5) * cw;
            let h = rng.gen_range(0.2..0.5) * ch;
            let x0 = rng.gen_range(0.0..(cw - w));
            let y0 = rng.gen_range(0.0..(ch - h));
            let bbox = BBox::new(x0, y0, x0 + w, y0 + h).expect("positive extents");
            if accepted.is_none() {
                accepted = Some(bbox);
            }
            if scene.instances.iter().all(|i| i.bbox.iou(&bbox) < 0.3) {
                accepted = Some(bbox);
                break;
            }
        }
        proposals.push(accepted.expect("at least one candidate"));
    }
    proposals
}

fn sample_in_band(base: &BBox, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> BBox {
    // Tight bands use small perturbations, loose bands large ones.
    let spread = 1.2 * (1.0 - lo).max(0.15);
    let params = JitterParams {
        center_frac: 0.5 * spread,
        scale_frac: 0.4 * spread,
    };
    for _ in 0..2000 {
        let candidate = match jitter_augment_with(base, 1, 0.0, rng.gen(), params) {
            Ok(v) => v[0],
            Err(_) => continue,
        };
        let v = candidate.iou(base);
        if v >= lo && v < hi {
            return candidate;
        }
    }
    // Band proved hard to hit; fall back to the nearest in-band
    // deterministic construction (a contained scaled copy).
    let target = 0.5 * (lo + hi).max(lo + 1e-3);
    let (cx, cy) = base.center();
    let s = target.sqrt();
    BBox::new(
        cx - 0.5 * s * base.width(),
        cy - 0.5 * s * base.height(),
        cx + 0.5 * s * base.width(),
        cy + 0.5 * s * base.height(),
    )
    .expect("scaled copy is valid")
}

/// Bilinear crop of the canvas over `bbox`, resampled to
/// `(channels, out_h, out_w)`. Samples outside the canvas read as 0.
pub fn region_tensor(canvas: &ArrayView3<f32>, bbox: &BBox, out_h: usize, out_w: usize) -> Array3<f64> {
    let (c, h, w) = canvas.dim();
    let mut out = Array3::zeros((c, out_h, out_w));
    let sample = |ch: usize, x: f64, y: f64| -> f64 {
        // Pixel centers sit at integer+0.5 coordinates.
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let mut acc = 0.0;
        for (dy, wy) in [(0i64, 1.0 - ty), (1, ty)] {
            for (dx, wx) in [(0i64, 1.0 - tx), (1, tx)] {
                let xi = x0 as i64 + dx;
                let yi = y0 as i64 + dy;
                if xi >= 0 && yi >= 0 && (xi as usize) < w && (yi as usize) < h {
                    acc += wx * wy * canvas[[ch, yi as usize, xi as usize]] as f64;
                }
            }
        }
        acc
    };
    for ch in 0..c {
        for oy in 0..out_h {
            let y = bbox.y_min + (oy as f64 + 0.5) / out_h as f64 * bbox.height();
            for ox in 0..out_w {
                let x = bbox.x_min + (ox as f64 + 0.5) / out_w as f64 * bbox.width();
                out[[ch, oy, ox]] = sample(ch, x, y);
            }
        }
    }
    out
}
