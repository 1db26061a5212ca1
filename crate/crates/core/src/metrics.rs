//! Confusion-matrix classification metrics and median aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{KknnError, Result};

/// Counts indexed `[true class][predicted class]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if c == 0 {
            return Err(KknnError::Empty("confusion matrix has no classes".into()));
        }
        if counts.iter().any(|r| r.len() != c) {
            return Err(KknnError::InvalidDataset("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, t: usize) -> u64 {
        self.counts[t].iter().sum()
    }

    pub fn col_sum(&self, p: usize) -> u64 {
        self.counts.iter().map(|r| r[p]).sum()
    }

    fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }
}

/// Tallies `(truth, prediction)` pairs over `class_count` classes.
pub fn confusion(truth: &[usize], predicted: &[usize], class_count: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(KknnError::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(KknnError::Empty("no labels to compare".into()));
    }
    let mut counts = vec![vec![0u64; class_count]; class_count];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= class_count || p >= class_count {
            return Err(KknnError::out_of_range(
                "label",
                t.max(p),
                format!("0..{class_count}"),
            ));
        }
        counts[t][p] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

/// Mean per-class recall over classes present in the truth.
///
/// Errors when any class row is empty; use [`balanced_accuracy_present`]
/// for partitions where some classes may be absent.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    if let Some(t) = (0..cm.classes()).find(|&t| cm.row_sum(t) == 0) {
        return Err(KknnError::InvalidDataset(format!("class {t} has no true samples")));
    }
    balanced_accuracy_present(cm)
}

/// Mean recall over the classes that occur in the truth.
pub fn balanced_accuracy_present(cm: &ConfusionMatrix) -> Result<f64> {
    let recalls: Vec<f64> = (0..cm.classes())
        .filter(|&t| cm.row_sum(t) > 0)
        .map(|t| cm.get(t, t) as f64 / cm.row_sum(t) as f64)
        .collect();
    if recalls.is_empty() {
        return Err(KknnError::Empty("confusion matrix is empty".into()));
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Cohen's kappa `(p_o − p_e) / (1 − p_e)`.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(KknnError::Empty("confusion matrix is empty".into()));
    }
    let n = total as f64;
    let p_o = cm.trace() as f64 / n;
    let p_e = (0..cm.classes())
        .map(|t| cm.row_sum(t) as f64 * cm.col_sum(t) as f64)
        .sum::<f64>()
        / (n * n);
    if p_e >= 1.0 {
        return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Averaging of per-class scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Weighted by true-class support.
    #[default]
    Weighted,
    /// Unweighted mean over classes with non-zero support.
    Macro,
}

impl std::str::FromStr for Averaging {
    type Err = KknnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weighted" => Ok(Averaging::Weighted),
            "macro" => Ok(Averaging::Macro),
            other => Err(KknnError::out_of_range("averaging", other, "weighted or macro")),
        }
    }
}

fn averaged(cm: &ConfusionMatrix, averaging: Averaging, per_class: impl Fn(u64, u64, u64) -> Option<f64>) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(KknnError::Empty("confusion matrix is empty".into()));
    }
    let mut acc = 0.0;
    let mut classes = 0usize;
    let mut zero_denominators = 0usize;
    for t in 0..cm.classes() {
        let support = cm.row_sum(t);
        let tp = cm.get(t, t);
        let fn_ = support - tp;
        let fp = cm.col_sum(t) - tp;
        let score = per_class(tp, fp, fn_).unwrap_or_else(|| {
            zero_denominators += 1;
            0.0
        });
        match averaging {
            Averaging::Weighted => acc += score * support as f64 / total as f64,
            Averaging::Macro if support > 0 => {
                acc += score;
                classes += 1;
            }
            Averaging::Macro => {}
        }
    }
    if zero_denominators > 0 {
        log::debug!("{zero_denominators} class(es) with a zero denominator scored as 0");
    }
    Ok(match averaging {
        Averaging::Weighted => acc,
        Averaging::Macro => acc / classes.max(1) as f64,
    })
}

/// Per-class `TP / (TP + FP + FN)`, averaged.
pub fn jaccard(cm: &ConfusionMatrix, averaging: Averaging) -> Result<f64> {
    averaged(cm, averaging, |tp, fp, fn_| {
        let denom = tp + fp + fn_;
        (denom > 0).then(|| tp as f64 / denom as f64)
    })
}

/// Per-class `2PR / (P + R)`, averaged.
pub fn f1(cm: &ConfusionMatrix, averaging: Averaging) -> Result<f64> {
    averaged(cm, averaging, |tp, fp, fn_| {
        let denom = 2 * tp + fp + fn_;
        (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
    })
}

/// Middle order statistic; mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(KknnError::Empty("no values to take the median of".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// The four reported scores for one evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub balanced_accuracy: f64,
    pub kappa: f64,
    pub jaccard: f64,
    pub f1: f64,
}

impl Scores {
    pub const NAMES: [&'static str; 4] = ["balanced_accuracy", "kappa", "jaccard", "f1"];

    pub fn from_confusion(cm: &ConfusionMatrix, averaging: Averaging) -> Result<Self> {
        Ok(Scores {
            balanced_accuracy: balanced_accuracy_present(cm)?,
            kappa: kappa(cm)?,
            jaccard: jaccard(cm, averaging)?,
            f1: f1(cm, averaging)?,
        })
    }

    pub fn values(&self) -> [f64; 4] {
        [self.balanced_accuracy, self.kappa, self.jaccard, self.f1]
    }

    /// Per-metric medians over a set of evaluations.
    pub fn median_of(all: &[Scores]) -> Result<Scores> {
        let col = |f: fn(&Scores) -> f64| median(&all.iter().map(f).collect::<Vec<_>>());
        Ok(Scores {
            balanced_accuracy: col(|s| s.balanced_accuracy)?,
            kappa: col(|s| s.kappa)?,
            jaccard: col(|s| s.jaccard)?,
            f1: col(|s| s.f1)?,
        })
    }
}
