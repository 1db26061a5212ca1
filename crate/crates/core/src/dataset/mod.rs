//! Labelled feature matrices, preprocessing transforms and holdout splits.

mod csv_io;
pub mod openml;
mod preprocess;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{KknnError, Result};

pub use csv_io::{load_csv, load_queries, write_csv, LabelColumn, QueryTable};
pub use openml::fetch_openml;
pub use preprocess::{
    default_lda_ridge, lda_fit, lda_reduce, pca_fit, pca_reduce, standardize, standardizer_fit,
    AffineMap,
};
pub use split::{stratified_split, subsample, split_indices, sweep_fractions, SplitPlan};

/// A labelled sample matrix, stored one row per sample.
///
/// Datasets built through [`Dataset::new`] (and the loaders) satisfy the full
/// set of invariants: at least two samples, at least one feature, at least two
/// classes, every class id present and every value finite. Partitions produced
/// by [`Dataset::subset`] keep the parent's class table, so a rare class may be
/// missing from a small test partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    class_names: Vec<String>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from a row-major feature buffer.
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let feature_names = (0..n_features).map(|j| format!("f{j}")).collect();
        Self::with_names(features, n_features, labels, class_names, feature_names)
    }

    pub fn with_names(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let d = Self::unchecked(features, n_features, labels, class_names, feature_names)?;
        d.validate()?;
        Ok(d)
    }

    /// Convenience constructor from per-row vectors; class names default to
    /// the class ids.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(KknnError::InvalidDataset("ragged rows".into()));
        }
        let c = labels.iter().copied().max().map_or(0, |x| x + 1);
        let names = (0..c).map(|i| i.to_string()).collect();
        Self::new(rows.concat(), m, labels, names)
    }

    fn unchecked(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(KknnError::InvalidDataset("no feature columns".into()));
        }
        if features.len() != labels.len() * n_features {
            return Err(KknnError::InvalidDataset(format!(
                "{} values do not form {} rows of {} features",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if feature_names.len() != n_features {
            return Err(KknnError::InvalidDataset("feature name count mismatch".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(KknnError::InvalidDataset(format!(
                "label {bad} outside 0..{}",
                class_names.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(KknnError::NonFinite {
                row: pos / n_features + 1,
                column: feature_names[pos % n_features].clone(),
            });
        }
        Ok(Dataset {
            features,
            n_features,
            labels,
            class_names,
            feature_names,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.n() < 2 {
            return Err(KknnError::InvalidDataset(format!(
                "{} sample(s); at least 2 required",
                self.n()
            )));
        }
        if self.class_count() < 2 {
            return Err(KknnError::SingleClass);
        }
        let counts = self.class_counts();
        if let Some(c) = counts.iter().position(|&x| x == 0) {
            return Err(KknnError::InvalidDataset(format!(
                "class {c} ({}) has no samples",
                self.class_names[c]
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.n_features
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Original category string for each class id (first-appearance order).
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Number of samples per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows selected by `indices`, in the given order, with the parent's
    /// class and feature tables.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: self.n_features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Same samples and labels with a replacement feature matrix.
    pub fn with_features(
        &self,
        features: Vec<f64>,
        n_features: usize,
        feature_names: Vec<String>,
    ) -> Result<Dataset> {
        Self::unchecked(
            features,
            n_features,
            self.labels.clone(),
            self.class_names.clone(),
            feature_names,
        )
    }

    /// Applies `map` to every row.
    pub fn transform(&self, map: &AffineMap, prefix: &str) -> Result<Dataset> {
        if map.input_dim() != self.m() {
            return Err(KknnError::DimensionMismatch {
                expected: map.input_dim(),
                got: self.m(),
            });
        }
        let mut out = Vec::with_capacity(self.n() * map.output_dim());
        for row in self.rows() {
            out.extend(map.apply(row));
        }
        let names = (0..map.output_dim()).map(|j| format!("{prefix}{j}")).collect();
        self.with_features(out, map.output_dim(), names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_single_class() {
        let r = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![0, 0]);
        assert!(matches!(r, Err(KknnError::SingleClass)));
    }

    #[test]
    fn rejects_non_finite_values() {
        let r = Dataset::from_rows(&[vec![0.0], vec![f64::NAN]], vec![0, 1]);
        assert!(matches!(r, Err(KknnError::NonFinite { row: 2, .. })));
    }

    #[test]
    fn rejects_missing_class_id() {
        let r = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![0, 2, 2]);
        assert!(matches!(r, Err(KknnError::InvalidDataset(_))));
    }

    #[test]
    fn subset_keeps_class_table() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![0, 1, 1]).unwrap();
        let s = d.subset(&[2, 1]);
        assert_eq!(s.n(), 2);
        assert_eq!(s.class_count(), 2);
        assert_eq!(s.row(0), &[2.0]);
        assert_eq!(s.class_counts(), vec![0, 2]);
    }
}
