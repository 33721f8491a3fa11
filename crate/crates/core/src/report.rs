//! Evaluation reports: JSON artifacts that pin the dataset and config
//! they were computed on, plus merging and plain-text tables for
//! side-by-side comparisons.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{APResult, PRPoint};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    /// Which metric this report carries: "detection", "apk",
    /// "action-classification" or "action-detection".
    pub task: String,
    /// A label for the run (usually the experiment preset name).
    pub label: String,
    pub dataset_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub per_class_ap: Vec<f64>,
    pub mean_ap: f64,
    pub zero_positive_classes: usize,
    pub excluded_instances: usize,
    /// Optional PR points for plotting (single-class tasks).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pr_points: Vec<PRPoint>,
}

impl Report {
    pub fn from_ap_result(
        task: &str,
        label: &str,
        dataset_hash: &str,
        config_hash: &str,
        seed: u64,
        class_names: Vec<String>,
        result: &APResult,
    ) -> Self {
        assert_eq!(class_names.len(), result.per_class.len());
        Self {
            version: REPORT_VERSION,
            task: task.to_string(),
            label: label.to_string(),
            dataset_hash: dataset_hash.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            class_names,
            per_class_ap: result.per_class.clone(),
            mean_ap: result.mean,
            zero_positive_classes: result.zero_positive_classes,
            excluded_instances: result.excluded_instances,
            pr_points: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let report: Report = serde_json::from_str(&fs::read_to_string(path)?)?;
        if report.version != REPORT_VERSION {
            return Err(Error::Corrupt(format!(
                "unsupported report version {}",
                report.version
            )));
        }
        Ok(report)
    }

    /// Plain-text per-class table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "task: {}  label: {}  seed: {}\n",
            self.task, self.label, self.seed
        ));
        out.push_str(&format!("dataset: {}\n", self.dataset_hash));
        let width = self
            .class_names
            .iter()
            .map(|n| n.len())
            .max()
            .unwrap_or(5)
            .max(5);
        for (name, ap) in self.class_names.iter().zip(&self.per_class_ap) {
            out.push_str(&format!("  {name:width$}  {ap:8.4}\n"));
        }
        out.push_str(&format!("  {:width$}  {:8.4}\n", "mean", self.mean_ap));
        if self.zero_positive_classes > 0 {
            out.push_str(&format!(
                "  ({} classes had no positives)\n",
                self.zero_positive_classes
            ));
        }
        if self.excluded_instances > 0 {
            out.push_str(&format!(
                "  ({} instances excluded for missing torso height)\n",
                self.excluded_instances
            ));
        }
        out
    }
}

/// Side-by-side comparison of reports over the same task and dataset.
/// Refuses to merge reports computed on different datasets.
pub fn merge_reports(reports: &[Report]) -> Result<String> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Config("no reports to merge".into()))?;
    for r in reports {
        if r.dataset_hash != first.dataset_hash {
            return Err(Error::DatasetHashMismatch(
                first.dataset_hash.clone(),
                r.dataset_hash.clone(),
            ));
        }
        if r.task != first.task {
            return Err(Error::Incompatible(format!(
                "cannot merge tasks '{}' and '{}'",
                first.task, r.task
            )));
        }
        if r.class_names != first.class_names {
            return Err(Error::Incompatible(
                "reports disagree on class names".into(),
            ));
        }
    }
    let name_width = first
        .class_names
        .iter()
        .map(|n| n.len())
        .max()
        .unwrap_or(5)
        .max(5);
    let mut out = String::new();
    out.push_str(&format!(
        "task: {}  dataset: {}\n",
        first.task, first.dataset_hash
    ));
    out.push_str(&format!("  {:name_width$}", ""));
    for r in reports {
        out.push_str(&format!("  {:>12}", truncate(&r.label, 12)));
    }
    out.push('\n');
    for (ci, name) in first.class_names.iter().enumerate() {
        out.push_str(&format!("  {name:name_width$}"));
        for r in reports {
            out.push_str(&format!("  {:12.4}", r.per_class_ap[ci]));
        }
        out.push('\n');
    }
    out.push_str(&format!("  {:name_width$}", "mean"));
    for r in reports {
        out.push_str(&format!("  {:12.4}", r.mean_ap));
    }
    out.push('\n');
    Ok(out)
}

fn truncate(s: &str, n: usize) -> &str {
    if s.len() <= n {
        s
    } else {
        &s[..n]
    }
}

/// Stable hash of any serializable configuration value.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}
