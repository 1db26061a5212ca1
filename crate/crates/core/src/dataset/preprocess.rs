//! Feature standardization and linear projections (PCA, LDA).
//!
//! Each transform is fitted into an [`AffineMap`] so the same projection can
//! be replayed on query rows at prediction time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{KknnError, Result};
use crate::linalg::sorted_symmetric_eigen;

/// `y = W (x - offset)`, with `W` stored row-major as `output_dim × input_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    offset: Vec<f64>,
    weights: Vec<f64>,
    output_dim: usize,
}

impl AffineMap {
    pub fn new(offset: Vec<f64>, weights: Vec<f64>, output_dim: usize) -> Result<Self> {
        if weights.len() != offset.len() * output_dim {
            return Err(KknnError::DimensionMismatch {
                expected: offset.len() * output_dim,
                got: weights.len(),
            });
        }
        Ok(AffineMap {
            offset,
            weights,
            output_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.offset.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.input_dim();
        debug_assert_eq!(x.len(), m);
        self.weights
            .chunks_exact(m)
            .map(|w| {
                w.iter()
                    .zip(x.iter().zip(&self.offset))
                    .map(|(wj, (xj, oj))| wj * (xj - oj))
                    .sum()
            })
            .collect()
    }
}

fn column_means(d: &Dataset) -> Vec<f64> {
    let m = d.m();
    let mut mean = vec![0.0; m];
    for row in d.rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let n = d.n() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    mean
}

fn to_matrix(d: &Dataset) -> DMatrix<f64> {
    DMatrix::from_row_slice(d.n(), d.m(), d.features())
}

/// Fits a per-column z-score map (population standard deviation). Columns
/// that are constant up to rounding map to zero.
pub fn standardizer_fit(d: &Dataset) -> AffineMap {
    let m = d.m();
    let mean = column_means(d);
    let mut var = vec![0.0; m];
    let mut scale = vec![0.0f64; m];
    for row in d.rows() {
        for j in 0..m {
            let dv = row[j] - mean[j];
            var[j] += dv * dv;
            scale[j] = scale[j].max(row[j].abs());
        }
    }
    let n = d.n() as f64;
    let mut weights = vec![0.0; m * m];
    for j in 0..m {
        let sd = (var[j] / n).sqrt();
        if sd > 1e-12 * scale[j].max(1.0) {
            weights[j * m + j] = 1.0 / sd;
        }
    }
    AffineMap {
        offset: mean,
        weights,
        output_dim: m,
    }
}

/// Zero mean, unit population standard deviation per column.
pub fn standardize(d: &Dataset) -> Dataset {
    let map = standardizer_fit(d);
    let names = d.feature_names().to_vec();
    let mut out = Vec::with_capacity(d.features().len());
    for row in d.rows() {
        out.extend(map.apply(row));
    }
    d.with_features(out, d.m(), names)
        .expect("standardization preserves shape and finiteness")
}

fn projection_map(offset: Vec<f64>, basis: &DMatrix<f64>, dims: usize) -> AffineMap {
    let m = offset.len();
    let mut weights = Vec::with_capacity(dims * m);
    for c in 0..dims {
        weights.extend(basis.column(c).iter());
    }
    AffineMap {
        offset,
        weights,
        output_dim: dims,
    }
}

/// Fits a projection onto the leading `target_dim` principal axes.
pub fn pca_fit(d: &Dataset, target_dim: usize) -> Result<AffineMap> {
    let max_dim = (d.n().saturating_sub(1)).min(d.m());
    if target_dim < 1 || target_dim > max_dim {
        return Err(KknnError::out_of_range(
            "pca target_dim",
            target_dim,
            format!("1..={max_dim}"),
        ));
    }
    let mean = column_means(d);
    let mut x = to_matrix(d);
    for mut row in x.row_iter_mut() {
        for (v, mu) in row.iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    let cov = x.transpose() * &x / (d.n() as f64 - 1.0);
    let (_, vectors) = sorted_symmetric_eigen(cov);
    Ok(projection_map(mean, &vectors, target_dim))
}

pub fn pca_reduce(d: &Dataset, target_dim: usize) -> Result<Dataset> {
    let map = pca_fit(d, target_dim)?;
    d.transform(&map, "pc")
}

fn scatter_matrices(d: &Dataset) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let m = d.m();
    let c = d.class_count();
    let mean = column_means(d);
    let counts = d.class_counts();
    let mut class_means = vec![vec![0.0; m]; c];
    for (row, &l) in d.rows().zip(d.labels()) {
        for (acc, v) in class_means[l].iter_mut().zip(row) {
            *acc += v;
        }
    }
    for (mu, &cnt) in class_means.iter_mut().zip(&counts) {
        if cnt > 0 {
            mu.iter_mut().for_each(|v| *v /= cnt as f64);
        }
    }
    let mut within = DMatrix::zeros(m, m);
    for (row, &l) in d.rows().zip(d.labels()) {
        let diff = DVector::from_iterator(m, row.iter().zip(&class_means[l]).map(|(a, b)| a - b));
        within += &diff * diff.transpose();
    }
    let mut between = DMatrix::zeros(m, m);
    for (mu, &cnt) in class_means.iter().zip(&counts) {
        if cnt == 0 {
            continue;
        }
        let diff = DVector::from_iterator(m, mu.iter().zip(&mean).map(|(a, b)| a - b));
        between += (&diff * diff.transpose()) * cnt as f64;
    }
    (within, between, mean)
}

/// `1e-6 · trace(S_w) / m`, the ridge used when none is given.
pub fn default_lda_ridge(d: &Dataset) -> f64 {
    let (within, _, _) = scatter_matrices(d);
    1e-6 * within.trace() / d.m() as f64
}

/// Fits the Fisher discriminant projection: leading eigenvectors of
/// `(S_w + ridge·I)⁻¹ S_b`. `ridge = None` uses [`default_lda_ridge`].
pub fn lda_fit(d: &Dataset, target_dim: usize, ridge: Option<f64>) -> Result<AffineMap> {
    let c = d.class_count();
    if target_dim < 1 || target_dim + 1 > c {
        return Err(KknnError::out_of_range(
            "lda target_dim",
            target_dim,
            format!("1..={}", c - 1),
        ));
    }
    if target_dim > d.m() {
        return Err(KknnError::out_of_range(
            "lda target_dim",
            target_dim,
            format!("at most the feature count {}", d.m()),
        ));
    }
    let m = d.m();
    let (within, between, mean) = scatter_matrices(d);
    let ridge = ridge.unwrap_or(1e-6 * within.trace() / m as f64);
    if ridge.is_nan() || ridge < 0.0 {
        return Err(KknnError::out_of_range("lda ridge", ridge, ">= 0"));
    }
    if ridge == 0.0 {
        let (vals, _) = sorted_symmetric_eigen(within.clone());
        let top = vals[0].max(0.0);
        if vals[m - 1] <= 1e-12 * top || top == 0.0 {
            return Err(KknnError::SingularScatter);
        }
    }
    let regularized = within + DMatrix::identity(m, m) * ridge;
    let chol = regularized.cholesky().ok_or(KknnError::SingularScatter)?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(KknnError::SingularScatter)?;
    // Symmetric whitened problem: L⁻¹ S_b L⁻ᵀ w = λ w, v = L⁻ᵀ w.
    let whitened = &l_inv * between * l_inv.transpose();
    let sym = (&whitened + whitened.transpose()) * 0.5;
    let (_, w) = sorted_symmetric_eigen(sym);
    let mut basis = l_inv.transpose() * w;
    for mut col in basis.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    Ok(projection_map(mean, &basis, target_dim))
}

pub fn lda_reduce(d: &Dataset, target_dim: usize, ridge: Option<f64>) -> Result<Dataset> {
    let map = lda_fit(d, target_dim, ridge)?;
    d.transform(&map, "ld")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    fn random(n: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels = (0..n).map(|i| i % 2).collect();
        Dataset::from_rows(&rows, labels).unwrap()
    }

    #[test]
    fn standardize_two_values() {
        let d = Dataset::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]], vec![0, 1]).unwrap();
        let s = standardize(&d);
        assert_eq!(s.row(0), &[-1.0, 0.0]);
        assert_eq!(s.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn standardize_constant_column_is_zero() {
        let d = Dataset::from_rows(&[vec![5.0], vec![5.0], vec![5.0]], vec![0, 1, 0]).unwrap();
        assert!(standardize(&d).features().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardize_is_idempotent() {
        let d = random(30, 4, 3);
        let once = standardize(&d);
        let twice = standardize(&once);
        for (a, b) in once.features().iter().zip(twice.features()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pca_rank_one_reconstructs_exactly() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| {
            let t = i as f64 * 0.7 - 2.0;
            vec![1.0 + 2.0 * t, -0.5 + 0.5 * t]
        }).collect();
        let d = Dataset::from_rows(&rows, (0..10).map(|i| i % 2).collect()).unwrap();
        let map = pca_fit(&d, 1).unwrap();
        let axis = [map.weights[0], map.weights[1]];
        for row in d.rows() {
            let y = map.apply(row)[0];
            let rec: Vec<f64> = (0..2).map(|j| map.offset[j] + y * axis[j]).collect();
            assert!(dist(&rec, row) < 1e-9);
        }
    }

    #[test]
    fn pca_full_rank_preserves_distances() {
        let d = random(15, 4, 9);
        let p = pca_reduce(&d, 4).unwrap();
        for i in 0..d.n() {
            for j in 0..d.n() {
                assert!((dist(d.row(i), d.row(j)) - dist(p.row(i), p.row(j))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pca_target_dim_bounds() {
        let d = random(4, 6, 1);
        assert!(pca_fit(&d, 0).is_err());
        assert!(pca_fit(&d, 4).is_err());
        assert!(pca_fit(&d, 3).is_ok());
    }

    #[test]
    fn lda_rejects_too_many_dims() {
        let d = random(20, 3, 2);
        assert!(matches!(lda_fit(&d, 2, None), Err(KknnError::OutOfRange { .. })));
        assert!(lda_fit(&d, 1, None).is_ok());
    }

    #[test]
    fn lda_singular_scatter_without_ridge() {
        // Fewer samples than features: within-class scatter is rank deficient.
        let d = random(4, 6, 5);
        assert!(matches!(lda_fit(&d, 1, Some(0.0)), Err(KknnError::SingularScatter)));
        assert!(lda_fit(&d, 1, None).is_ok());
    }
}
