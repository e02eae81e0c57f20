use std::collections::BTreeMap;

use super::DatasetError;
use crate::polar::{Cell, PolarGrid};
use crate::spn::{Assignment, VariableId};

/// ROC curve as `(false positive rate, true positive rate)` points from
/// `(0, 0)` to `(1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Roc {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Inliers are positives; a higher score means more inlier-like. Each
/// distinct score is one threshold step, so tied positives and negatives
/// move the curve diagonally.
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<Roc, DatasetError> {
    let pos = scores.iter().filter(|s| s.1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(DatasetError::SingleClass);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let (x, y) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x - x0) * (y + y0) / 2.0;
        points.push((x, y));
    }
    Ok(Roc { points, auc })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Confusion {
    pub classes: Vec<String>,
    /// `matrix[i][j]` = P(predicted j | true i).
    pub matrix: Vec<Vec<f64>>,
    pub per_class: Vec<f64>,
    pub mean_accuracy: f64,
}

pub fn confusion<S: AsRef<str>>(truth: &[S], predicted: &[S], classes: &[String]) -> Result<Confusion, DatasetError> {
    if truth.len() != predicted.len() {
        return Err(DatasetError::LengthMismatch(truth.len(), predicted.len()));
    }
    let index = |l: &str| {
        classes.iter().position(|c| c == l).ok_or_else(|| DatasetError::UnknownLabel(l.to_string()))
    };
    let k = classes.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (t, p) in truth.iter().zip(predicted) {
        counts[index(t.as_ref())?][index(p.as_ref())?] += 1;
    }
    let mut matrix = Vec::with_capacity(k);
    for (i, row) in counts.iter().enumerate() {
        let n: usize = row.iter().sum();
        if n == 0 {
            return Err(DatasetError::EmptyClass(classes[i].clone()));
        }
        matrix.push(row.iter().map(|&c| c as f64 / n as f64).collect::<Vec<_>>());
    }
    let per_class: Vec<f64> = (0..k).map(|i| matrix[i][i]).collect();
    let mean_accuracy = per_class.iter().sum::<f64>() / k as f64;
    Ok(Confusion { classes: classes.to_vec(), matrix, per_class, mean_accuracy })
}

/// Fraction of masked cells whose inferred state equals the truth.
pub fn completion_accuracy(truth: &PolarGrid, inferred: &Assignment, masked: &[VariableId]) -> Result<f64, DatasetError> {
    if masked.is_empty() {
        return Err(DatasetError::CoverageMismatch("empty mask".into()));
    }
    let mut hits = 0usize;
    for v in masked {
        let &value = inferred.get(v).ok_or_else(|| DatasetError::CoverageMismatch(format!("{v} not inferred")))?;
        let t = truth.cells.get(v.0).ok_or_else(|| DatasetError::CoverageMismatch(format!("{v} outside the grid")))?;
        if Cell::from_index(value) == Some(*t) {
            hits += 1;
        }
    }
    Ok(hits as f64 / masked.len() as f64)
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-fold results of an experiment. Fields are `None` for tasks that
/// were not run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub fold: usize,
    pub model_hash: String,
    pub confusion: Option<Confusion>,
    pub roc: Option<Roc>,
    pub completion: Option<f64>,
    /// Completion accuracy per class label of the test samples.
    pub completion_by_class: BTreeMap<String, f64>,
}
