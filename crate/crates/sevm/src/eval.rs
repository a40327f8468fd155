//! Labeling-accuracy evaluation.
//!
//! A function's assigned label comes from a simple string comparison between
//! its name and the names in the assigned equivalence class: a match keeps
//! the function's own name, otherwise the first class member's name is used,
//! and functions without a confirmed leaf are labeled "Unknown". The ground
//! truth is the function's name when that name was classified in the tree,
//! "Unknown" otherwise. Accuracy is macro-averaged F1 over the union of
//! ground-truth and assigned labels, with "Unknown" as an ordinary class.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::coalesce::{DecisionTree, FunctionKey};

/// Label given to functions without a confirmed leaf, and ground truth of
/// functions that were never classified.
pub const UNKNOWN_LABEL: &str = "Unknown";

/// Documentation string embedded in every report header.
pub const F1_AVERAGING: &str =
    "macro-averaged F1 over the union of ground-truth and assigned labels; \
     Unknown is a class; per-label precision/recall of 0/0 count as 0";

/// Assigned label of one identification.
pub fn assigned_label(fut_name: &str, class: Option<&[FunctionKey]>) -> String {
    match class {
        None => UNKNOWN_LABEL.to_string(),
        Some(members) => {
            if members.iter().any(|k| k.name == fut_name) {
                fut_name.to_string()
            } else {
                members
                    .first()
                    .map(|k| k.name.clone())
                    .unwrap_or_else(|| UNKNOWN_LABEL.to_string())
            }
        }
    }
}

/// Ground-truth label: the function's (possibly aliased) name when trained,
/// otherwise "Unknown".
pub fn ground_truth_label(effective_name: &str, classified_names: &BTreeSet<String>) -> String {
    if classified_names.contains(effective_name) {
        effective_name.to_string()
    } else {
        UNKNOWN_LABEL.to_string()
    }
}

/// Macro-averaged F1 over `(ground_truth, assigned)` pairs.
pub fn macro_f1(pairs: &[(String, String)]) -> f64 {
    let labels: BTreeSet<&str> = pairs
        .iter()
        .flat_map(|(gt, pred)| [gt.as_str(), pred.as_str()])
        .collect();
    if labels.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for label in &labels {
        let tp = pairs
            .iter()
            .filter(|(gt, pred)| gt == label && pred == label)
            .count() as f64;
        let fp = pairs
            .iter()
            .filter(|(gt, pred)| gt != label && pred == label)
            .count() as f64;
        let fn_ = pairs
            .iter()
            .filter(|(gt, pred)| gt == label && pred != label)
            .count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        sum += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    sum / labels.len() as f64
}

/// Equivalence-class size histogram bucket; sizes 1..=9 then "10+".
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub bucket: String,
    pub count: usize,
}

/// Per-tree class statistics: the count of classified functions, the mean
/// class size, and the class-size histogram.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ClassStats {
    pub n_classified: usize,
    pub class_count: usize,
    pub mean_class_size: f64,
    pub histogram: Vec<HistogramBucket>,
}

pub fn class_stats(tree: &DecisionTree) -> ClassStats {
    let sizes: Vec<usize> = tree.leaves().iter().map(|(class, _)| class.len()).collect();
    histogram_stats(&sizes)
}

fn histogram_stats(sizes: &[usize]) -> ClassStats {
    let n_classified: usize = sizes.iter().sum();
    let class_count = sizes.len();
    let mean = if class_count == 0 {
        0.0
    } else {
        n_classified as f64 / class_count as f64
    };
    let mut buckets: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in sizes {
        *buckets.entry(s.min(10)).or_default() += 1;
    }
    let histogram = (1..=10)
        .map(|i| HistogramBucket {
            bucket: if i == 10 { "10+".into() } else { i.to_string() },
            count: buckets.get(&i).copied().unwrap_or(0),
        })
        .collect();
    ClassStats {
        n_classified,
        class_count,
        mean_class_size: mean,
        histogram,
    }
}

/// One evaluated function.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct PerFunction {
    pub name: String,
    pub variant: String,
    pub assigned: String,
    pub ground_truth: String,
}

/// The full evaluation report.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    /// How the score below was averaged.
    pub f1_averaging: String,
    pub macro_f1: f64,
    pub n_classified: usize,
    pub class_count: usize,
    pub mean_class_size: f64,
    pub histogram: Vec<HistogramBucket>,
    pub unclassifiable: Vec<FunctionKey>,
    pub per_function: Vec<PerFunction>,
    pub timing_seconds: f64,
}
