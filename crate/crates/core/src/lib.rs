//! Multitask person detection, pose estimation and action recognition
//! toolkit: region labeling, a three-headed convolutional network with a
//! weighted multitask objective, linear-SVM rescoring, detection-style
//! evaluation metrics (AP, APK, action detection AP), and a deterministic
//! synthetic scene generator for end-to-end experiments.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod labeling;
pub mod losses;
pub mod network;
pub mod pipeline;
pub mod report;
pub mod rescore;
pub mod synthdata;

pub use error::{Error, Result};
