//! Boxes, overlap computation and keypoint coordinate normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in continuous image coordinates.
///
/// Area is `(x_max - x_min) * (y_max - y_min)`; there is no +1 pixel
/// convention. Degenerate rectangles are rejected at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let all_finite =
            x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite();
        if !all_finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }
}

/// Intersection over union of two valid boxes. Symmetric, in [0, 1].
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    inter / union
}

/// A keypoint in image coordinates with a visibility flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, visible: bool) -> Self {
        Self { x, y, visible }
    }

    pub fn distance(&self, other: &Keypoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// A keypoint expressed relative to a region: offsets from the region
/// center divided by region width and height. For a keypoint inside the
/// region both coordinates land in [-0.5, 0.5]; keypoints outside may
/// exceed that range (no clamp).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedKeypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// Normalize keypoints against a region: `(x - cx) / w`, `(y - cy) / h`.
/// Visibility passes through unchanged.
pub fn normalize_keypoints(kps: &[Keypoint], region: &BBox) -> Vec<NormalizedKeypoint> {
    let (cx, cy) = region.center();
    let (w, h) = (region.width(), region.height());
    kps.iter()
        .map(|k| NormalizedKeypoint {
            x: (k.x - cx) / w,
            y: (k.y - cy) / h,
            visible: k.visible,
        })
        .collect()
}

/// Inverse of [`normalize_keypoints`], placing predictions back in image
/// coordinates.
pub fn denormalize_keypoints(nkps: &[NormalizedKeypoint], region: &BBox) -> Vec<Keypoint> {
    let (cx, cy) = region.center();
    let (w, h) = (region.width(), region.height());
    nkps.iter()
        .map(|k| Keypoint {
            x: k.x * w + cx,
            y: k.y * h + cy,
            visible: k.visible,
        })
        .collect()
}

/// Number of keypoints in the canonical schema.
pub const NUM_KEYPOINTS: usize = 13;

/// Canonical keypoint order.
pub const KEYPOINT_NAMES: [&str; NUM_KEYPOINTS] = [
    "Nose",
    "R_Shoulder",
    "R_Elbow",
    "R_Wrist",
    "L_Shoulder",
    "L_Elbow",
    "L_Wrist",
    "R_Hip",
    "R_Knee",
    "R_Ankle",
    "L_Hip",
    "L_Knee",
    "L_Ankle",
];

/// Indices into the canonical keypoint schema.
pub mod kp {
    pub const NOSE: usize = 0;
    pub const R_SHOULDER: usize = 1;
    pub const R_ELBOW: usize = 2;
    pub const R_WRIST: usize = 3;
    pub const L_SHOULDER: usize = 4;
    pub const L_ELBOW: usize = 5;
    pub const L_WRIST: usize = 6;
    pub const R_HIP: usize = 7;
    pub const R_KNEE: usize = 8;
    pub const R_ANKLE: usize = 9;
    pub const L_HIP: usize = 10;
    pub const L_KNEE: usize = 11;
    pub const L_ANKLE: usize = 12;
}

/// Torso height: Euclidean distance between the shoulder midpoint and the
/// hip midpoint. `None` if any of the four anchor keypoints is invisible
/// or the distance is not strictly positive.
pub fn torso_height(kps: &[Keypoint]) -> Option<f64> {
    assert_eq!(kps.len(), NUM_KEYPOINTS, "expected the 13-keypoint schema");
    let anchors = [kp::R_SHOULDER, kp::L_SHOULDER, kp::R_HIP, kp::L_HIP];
    if anchors.iter().any(|&i| !kps[i].visible) {
        return None;
    }
    let mid = |a: usize, b: usize| {
        (
            0.5 * (kps[a].x + kps[b].x),
            0.5 * (kps[a].y + kps[b].y),
        )
    };
    let (sx, sy) = mid(kp::R_SHOULDER, kp::L_SHOULDER);
    let (hx, hy) = mid(kp::R_HIP, kp::L_HIP);
    let h = ((sx - hx).powi(2) + (sy - hy).powi(2)).sqrt();
    (h > 0.0).then_some(h)
}
