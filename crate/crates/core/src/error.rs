use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box ({x_min}, {y_min}, {x_max}, {y_max}): corners must be finite with x_min < x_max and y_min < y_max")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("jitter sampling gave up after {attempts} attempts; min_iou {min_iou} is unreachable for the configured perturbation ranges")]
    JitterExhausted { attempts: usize, min_iou: f64 },
    #[error("SVM training needs at least one example of each class")]
    SingleClassSvm,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training diverged at iteration {iteration}: total loss {loss}")]
    Diverged { iteration: usize, loss: f64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("config error: {0}")]
    Config(String),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error("dataset hash mismatch: {0} vs {1}")]
    DatasetHashMismatch(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
