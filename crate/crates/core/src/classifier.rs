//! The curvature-adaptive kK-NN classifier and the regular k-NN baseline.
//!
//! Training stores the data together with the raw curvature of every
//! training sample. At test time each query is linked to its `k` nearest
//! training samples, its own curvature is computed from that patch and
//! quantized against the training curvatures, and the farthest `score`
//! neighbours are pruned (always keeping the nearest one) before a majority
//! vote.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curvature::{appended_score, curvature_of_query, curvature_profile_with, CurvatureProfile};
use crate::dataset::{AffineMap, Dataset};
use crate::error::{KknnError, Result};
use crate::exec::Exec;
use crate::knn_graph::{euclidean, neighbors_of_query, Neighbor, Patch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Knn,
    Kknn,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Knn => "knn",
            Method::Kknn => "kknn",
        }
    }
}

impl FromStr for Method {
    type Err = KknnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "knn" => Ok(Method::Knn),
            "kknn" => Ok(Method::Kknn),
            other => Err(KknnError::out_of_range("method", other, "knn or kknn")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome for one query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    /// Neighbourhood size after pruning.
    pub effective_k: usize,
    /// Curvature score of the query (0 for the plain k-NN baseline).
    pub score: u8,
}

/// Most frequent label; ties go to the smallest class id.
pub fn majority_vote(labels: &[usize]) -> Result<usize> {
    let max = labels
        .iter()
        .copied()
        .max()
        .ok_or_else(|| KknnError::Empty("no labels to vote on".into()))?;
    let mut counts = vec![0usize; max + 1];
    for &l in labels {
        counts[l] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    Ok(counts.iter().position(|&c| c == best).unwrap_or(0))
}

/// The `max(1, k − score)` nearest entries of an ascending neighbour list.
pub fn adjust_neighborhood(neighbors: &[Neighbor], score: u8) -> Result<&[Neighbor]> {
    let k = neighbors.len();
    if k == 0 {
        return Err(KknnError::Empty("empty neighbourhood".into()));
    }
    let keep = k.saturating_sub(score as usize).max(1);
    Ok(&neighbors[..keep])
}

/// Prunes `patch` by `score` and votes over the survivors' training labels.
pub fn classify_patch(patch: &Patch, score: u8, train_labels: &[usize]) -> Result<Prediction> {
    let kept = adjust_neighborhood(&patch.neighbors, score)?;
    let labels: Vec<usize> = kept.iter().map(|nb| train_labels[nb.index]).collect();
    Ok(Prediction {
        label: majority_vote(&labels)?,
        effective_k: kept.len(),
        score,
    })
}

/// A fitted kK-NN model: the training set, `k`, and the training curvatures.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    train: Dataset,
    k: usize,
    profile: CurvatureProfile,
    sorted_abs: Vec<f64>,
}

impl TrainedModel {
    fn from_parts(train: Dataset, k: usize, profile: CurvatureProfile) -> Self {
        let mut sorted_abs: Vec<f64> = profile.raw.iter().map(|v| v.abs()).collect();
        sorted_abs.sort_by(f64::total_cmp);
        TrainedModel {
            train,
            k,
            profile,
            sorted_abs,
        }
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn profile(&self) -> &CurvatureProfile {
        &self.profile
    }

    /// Predicts one query row.
    pub fn predict_one(&self, q: &[f64]) -> Result<Prediction> {
        let patch = neighbors_of_query(&self.train, q, self.k)?;
        let raw = curvature_of_query(&patch, self.k)?;
        let score = appended_score(&self.sorted_abs, raw);
        classify_patch(&patch, score, self.train.labels())
    }

    /// Predicts a row-major batch of queries. Every query is quantized
    /// against the training curvatures alone, so results do not depend on
    /// batch order.
    pub fn predict(&self, queries: &[f64], exec: Exec) -> Result<Vec<Prediction>> {
        let m = self.train.m();
        if !queries.len().is_multiple_of(m) {
            return Err(KknnError::InvalidDataset(format!(
                "query buffer of length {} is not a whole number of {m}-feature rows",
                queries.len()
            )));
        }
        exec.try_map(queries.len() / m, |i| self.predict_one(&queries[i * m..(i + 1) * m]))
    }

    pub fn predict_dataset(&self, queries: &Dataset, exec: Exec) -> Result<Vec<Prediction>> {
        if queries.m() != self.train.m() {
            return Err(KknnError::DimensionMismatch {
                expected: self.train.m(),
                got: queries.m(),
            });
        }
        self.predict(queries.features(), exec)
    }
}

/// Clamps `k` to `n − 1`, logging when it had to.
pub fn clamp_k(k: usize, n: usize) -> usize {
    if k + 1 > n {
        let clamped = n.saturating_sub(1).max(1);
        log::warn!("k = {k} is not below the {n} training samples; using k = {clamped}");
        clamped
    } else {
        k
    }
}

pub fn fit(train: &Dataset, k: usize) -> Result<TrainedModel> {
    fit_with(train, k, Exec::default())
}

/// Trains kK-NN: computes and stores the curvature of every training sample.
pub fn fit_with(train: &Dataset, k: usize, exec: Exec) -> Result<TrainedModel> {
    if train.n() < 2 {
        return Err(KknnError::InvalidDataset("at least two training samples required".into()));
    }
    if k < 1 {
        return Err(KknnError::out_of_range("k", k, ">= 1"));
    }
    let k = clamp_k(k, train.n());
    let profile = curvature_profile_with(train, k, exec)?;
    Ok(TrainedModel::from_parts(train.clone(), k, profile))
}

pub fn predict(model: &TrainedModel, queries: &[f64]) -> Result<Vec<Prediction>> {
    model.predict(queries, Exec::default())
}

/// Exhaustive neighbour search: all distances, sorted ascending (index
/// breaks ties), first `k` kept.
pub fn knn_get_neighbors(train: &Dataset, q: &[f64], k: usize) -> Result<Vec<Neighbor>> {
    if train.n() == 0 {
        return Err(KknnError::Empty("empty training set".into()));
    }
    if q.len() != train.m() {
        return Err(KknnError::DimensionMismatch {
            expected: train.m(),
            got: q.len(),
        });
    }
    if k < 1 || k > train.n() {
        return Err(KknnError::out_of_range("k", k, format!("1..={}", train.n())));
    }
    let mut distances: Vec<Neighbor> = train
        .rows()
        .enumerate()
        .map(|(index, row)| Neighbor {
            index,
            distance: euclidean(q, row),
        })
        .collect();
    distances.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
    distances.truncate(k);
    Ok(distances)
}

/// Plain majority vote over the `k` nearest training samples.
pub fn knn_classify(train: &Dataset, q: &[f64], k: usize) -> Result<usize> {
    let nbrs = knn_get_neighbors(train, q, k)?;
    let labels: Vec<usize> = nbrs.iter().map(|nb| train.label(nb.index)).collect();
    majority_vote(&labels)
}

/// Baseline predictions for a row-major query batch.
pub fn knn_predict(train: &Dataset, queries: &[f64], k: usize, exec: Exec) -> Result<Vec<Prediction>> {
    let m = train.m();
    if !queries.len().is_multiple_of(m) {
        return Err(KknnError::InvalidDataset(format!(
            "query buffer of length {} is not a whole number of {m}-feature rows",
            queries.len()
        )));
    }
    exec.try_map(queries.len() / m, |i| {
        Ok(Prediction {
            label: knn_classify(train, &queries[i * m..(i + 1) * m], k)?,
            effective_k: k,
            score: 0,
        })
    })
}

pub const MODEL_FORMAT: &str = "kknn-model";
pub const MODEL_VERSION: u32 = 1;

/// On-disk model: JSON with shortest round-trip float encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub k: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub train_features: Vec<f64>,
    pub labels: Vec<usize>,
    pub raw_curvatures: Vec<f64>,
    /// Transforms applied to raw input rows before they reach the model.
    #[serde(default)]
    pub preprocess: Vec<AffineMap>,
}

impl ModelFile {
    pub fn from_model(model: &TrainedModel, preprocess: Vec<AffineMap>) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            k: model.k,
            n_features: model.train.m(),
            feature_names: model.train.feature_names().to_vec(),
            class_names: model.train.class_names().to_vec(),
            train_features: model.train.features().to_vec(),
            labels: model.train.labels().to_vec(),
            raw_curvatures: model.profile.raw.clone(),
            preprocess,
        }
    }

    pub fn into_model(self) -> Result<(TrainedModel, Vec<AffineMap>)> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(KknnError::IncompatibleModel(format!(
                "found {} v{}, expected {MODEL_FORMAT} v{MODEL_VERSION}",
                self.format, self.version
            )));
        }
        if self.raw_curvatures.len() != self.labels.len() {
            return Err(KknnError::IncompatibleModel(
                "curvature count differs from training sample count".into(),
            ));
        }
        let train = Dataset::with_names(
            self.train_features,
            self.n_features,
            self.labels,
            self.class_names,
            self.feature_names,
        )
        .map_err(|e| KknnError::IncompatibleModel(e.to_string()))?;
        if self.k < 1 || self.k >= train.n() {
            return Err(KknnError::IncompatibleModel(format!("k = {} out of range", self.k)));
        }
        let profile = CurvatureProfile::from_raw(self.raw_curvatures)?;
        Ok((TrainedModel::from_parts(train, self.k, profile), self.preprocess))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| KknnError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| KknnError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| KknnError::IncompatibleModel(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64], labels: Vec<usize>) -> Dataset {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        Dataset::from_rows(&rows, labels).unwrap()
    }

    fn neighbors(k: usize) -> Vec<Neighbor> {
        (0..k).map(|i| Neighbor { index: i, distance: i as f64 }).collect()
    }

    #[test]
    fn pruning_examples() {
        assert_eq!(adjust_neighborhood(&neighbors(11), 4).unwrap().len(), 7);
        assert_eq!(adjust_neighborhood(&neighbors(3), 9).unwrap().len(), 1);
        assert_eq!(adjust_neighborhood(&neighbors(3), 0).unwrap().len(), 3);
        assert_eq!(adjust_neighborhood(&neighbors(5), 5).unwrap().len(), 1);
        let six = neighbors(6);
        assert_eq!(adjust_neighborhood(&six, 2).unwrap(), &six[..4]);
        assert!(adjust_neighborhood(&[], 0).is_err());
    }

    #[test]
    fn vote_examples() {
        assert_eq!(majority_vote(&[1, 1, 2]).unwrap(), 1);
        assert_eq!(majority_vote(&[1, 2]).unwrap(), 1);
        assert_eq!(majority_vote(&[2, 1]).unwrap(), 1);
        assert_eq!(majority_vote(&[3, 0, 3, 0, 5]).unwrap(), 0);
        assert!(majority_vote(&[]).is_err());
    }

    #[test]
    fn vote_ties_resolve_to_smallest_id_exhaustively() {
        // Every arrangement of a two-way tie over ids {a, b}.
        for a in 0..4 {
            for b in 0..4 {
                if a == b {
                    continue;
                }
                for mask in 0u32..16 {
                    if mask.count_ones() != 2 {
                        continue;
                    }
                    let labels: Vec<usize> = (0..4).map(|i| if mask >> i & 1 == 1 { a } else { b }).collect();
                    assert_eq!(majority_vote(&labels).unwrap(), a.min(b));
                }
            }
        }
    }

    #[test]
    fn baseline_examples() {
        let d = line(&[0.0, 1.0, 3.0], vec![0, 0, 1]);
        let nb = knn_get_neighbors(&d, &[0.4], 2).unwrap();
        assert_eq!(nb.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(knn_classify(&d, &[0.4], 2).unwrap(), 0);
        assert_eq!(knn_classify(&d, &[3.0], 1).unwrap(), 1);

        let tie = line(&[0.0, 2.0], vec![1, 0]);
        assert_eq!(knn_classify(&tie, &[1.0], 2).unwrap(), 0);

        assert!(knn_classify(&d, &[0.0], 4).is_err());
        assert!(knn_classify(&d, &[0.0, 1.0], 1).is_err());
    }

    #[test]
    fn fit_clamps_k() {
        let d = line(&[0.0, 1.0, 3.0, 4.5], vec![0, 0, 1, 1]);
        let m = fit(&d, 10).unwrap();
        assert_eq!(m.k(), 3);
        assert!(fit(&d, 0).is_err());
    }

    #[test]
    fn single_class_training_predicts_that_class() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64).sin() * 3.0, (i as f64 * 0.7).cos()]).collect();
        let mut d = Dataset::from_rows(&rows, (0..12).map(|i| i % 2).collect()).unwrap();
        let ones: Vec<usize> = (0..12).filter(|i| i % 2 == 1).collect();
        d = d.subset(&ones);
        let m = fit(&d, 3).unwrap();
        for p in m.predict(&[0.0, 0.0, 5.0, -1.0, -3.0, 2.0], Exec::Sequential).unwrap() {
            assert_eq!(p.label, 1);
            assert!((1..=3).contains(&p.effective_k));
            assert_eq!(p.effective_k, 3usize.saturating_sub(p.score as usize).max(1));
        }
    }

    #[test]
    fn model_file_rejects_other_versions() {
        let d = line(&[0.0, 1.0, 3.0, 4.5], vec![0, 0, 1, 1]);
        let mut f = ModelFile::from_model(&fit(&d, 2).unwrap(), vec![]);
        f.version = 99;
        assert!(matches!(f.into_model(), Err(KknnError::IncompatibleModel(_))));
    }

    #[test]
    fn method_parsing() {
        assert_eq!("KNN".parse::<Method>().unwrap(), Method::Knn);
        assert_eq!(" kknn".parse::<Method>().unwrap(), Method::Kknn);
        assert!("svm".parse::<Method>().is_err());
    }
}
