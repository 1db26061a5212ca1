//! Discrete shape-operator curvature of point-cloud samples.
//!
//! For a patch centred at `x` with neighbours `x₁..x_k`:
//!
//! 1. `Σ = (1/k) Σⱼ (xⱼ − x)(xⱼ − x)ᵀ` (centred on the patch centre).
//! 2. `U` = unit eigenvectors of `Σ`, descending eigenvalue order.
//! 3. Design matrix `X = [1 | U₁..U_m | U₁²..U_m² | U_a∘U_b (a<b)]`.
//! 4. `H` = the trailing `m(m+1)/2` columns of `X`; `ℋ = H Hᵀ`.
//! 5. Shape operator `S = −ℋ Σ`; Gaussian curvature `K = det S`.
//!
//! The metric tensor is approximated by `Σ⁻¹`, which cancels in
//! `−𝕀𝕀 𝕀⁻¹`, so no inverse is ever formed. When `Σ` is singular (always the
//! case for `k < m`) the curvature is exactly zero.

use std::io::Write;

use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::error::{KknnError, Result};
use crate::exec::Exec;
use crate::knn_graph::{build_knng_with, Patch};
use crate::linalg::sorted_symmetric_eigen;

/// Number of quantile boundaries (levels 0.1 .. 0.9).
pub const BOUNDARY_COUNT: usize = 9;

/// Maximum curvature score.
pub const MAX_SCORE: u8 = 9;

/// `λ_min(Σ) ≤ RANK_TOLERANCE · λ_max(Σ)` is treated as singular.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Local covariance, second fundamental form and shape operator of a patch.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalForms {
    pub sigma: DMatrix<f64>,
    pub hess: DMatrix<f64>,
    pub shape: DMatrix<f64>,
    /// Whether `sigma` is (numerically) singular.
    pub degenerate: bool,
}

/// `true` when a `k`-neighbour patch in `m` dimensions cannot have a
/// full-rank covariance.
pub fn rank_collapse(k: usize, m: usize) -> bool {
    k < m
}

pub fn local_covariance(p: &Patch) -> Result<DMatrix<f64>> {
    let k = p.k();
    if k == 0 {
        return Err(KknnError::Empty("patch has no neighbours".into()));
    }
    let m = p.dim();
    let mut sigma = DMatrix::zeros(m, m);
    let mut diff = vec![0.0; m];
    for v in &p.neighbor_vectors {
        for (d, (a, c)) in diff.iter_mut().zip(v.iter().zip(&p.center)) {
            *d = a - c;
        }
        for r in 0..m {
            for c in r..m {
                sigma[(r, c)] += diff[r] * diff[c];
            }
        }
    }
    for r in 0..m {
        for c in r..m {
            let v = sigma[(r, c)] / k as f64;
            sigma[(r, c)] = v;
            sigma[(c, r)] = v;
        }
    }
    Ok(sigma)
}

/// Column count of the design matrix: `1 + m + m(m+1)/2`.
pub fn design_width(m: usize) -> usize {
    1 + m + m * (m + 1) / 2
}

/// Builds `[1 | U₁..U_m | U₁²..U_m² | U_a∘U_b for a<b]` from the eigenvector
/// columns of `u`. Cross products are in lexicographic `(a, b)` order.
pub fn design_matrix(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = u.nrows();
    if u.ncols() != m {
        return Err(KknnError::DimensionMismatch {
            expected: m,
            got: u.ncols(),
        });
    }
    let mut x = DMatrix::zeros(m, design_width(m));
    x.column_mut(0).fill(1.0);
    for a in 0..m {
        x.set_column(1 + a, &u.column(a));
        x.set_column(1 + m + a, &u.column(a).component_mul(&u.column(a)));
    }
    let mut col = 1 + 2 * m;
    for a in 0..m {
        for b in a + 1..m {
            x.set_column(col, &u.column(a).component_mul(&u.column(b)));
            col += 1;
        }
    }
    Ok(x)
}

/// `ℋ = H Hᵀ` where `H` is the trailing quadratic block of the design matrix.
pub fn second_fundamental_form(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = x.nrows();
    if x.ncols() != design_width(m) {
        return Err(KknnError::DimensionMismatch {
            expected: design_width(m),
            got: x.ncols(),
        });
    }
    let q = m * (m + 1) / 2;
    let h = x.columns(1 + m, q);
    Ok(h * h.transpose())
}

/// `S = −ℋ Σ`.
pub fn shape_operator(hess: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !hess.is_square() || hess.shape() != sigma.shape() {
        return Err(KknnError::DimensionMismatch {
            expected: hess.nrows(),
            got: sigma.nrows(),
        });
    }
    Ok(-(hess * sigma))
}

/// `det S`.
pub fn gaussian_curvature(shape: &DMatrix<f64>) -> f64 {
    shape.clone().determinant()
}

/// `tr S`.
pub fn mean_curvature(shape: &DMatrix<f64>) -> f64 {
    shape.trace()
}

/// Eigenvalues of a shape operator.
#[derive(Clone, Debug, PartialEq)]
pub struct PrincipalCurvatures {
    /// Real parts, descending.
    pub values: Vec<f64>,
    /// Largest imaginary magnitude encountered (zero for real spectra).
    pub max_imaginary: f64,
}

pub fn principal_curvatures(shape: &DMatrix<f64>) -> PrincipalCurvatures {
    let eig = shape.clone().complex_eigenvalues();
    let mut values: Vec<f64> = eig.iter().map(|z| z.re).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let max_imaginary = eig.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if max_imaginary > 1e-9 * scale.max(f64::MIN_POSITIVE) {
        log::warn!("shape operator has complex eigenvalues (|Im| up to {max_imaginary:e}); reporting real parts");
    }
    PrincipalCurvatures {
        values,
        max_imaginary,
    }
}

/// Runs the covariance → design matrix → ℋ → shape operator pipeline.
pub fn local_forms(p: &Patch) -> Result<LocalForms> {
    let sigma = local_covariance(p)?;
    let (values, u) = sorted_symmetric_eigen(sigma.clone());
    let x = design_matrix(&u)?;
    let hess = second_fundamental_form(&x)?;
    let shape = shape_operator(&hess, &sigma)?;
    let top = values.first().copied().unwrap_or(0.0);
    let bottom = values.last().copied().unwrap_or(0.0);
    let degenerate = rank_collapse(p.k(), p.dim()) || top <= 0.0 || bottom <= RANK_TOLERANCE * top;
    Ok(LocalForms {
        sigma,
        hess,
        shape,
        degenerate,
    })
}

/// Gaussian curvature at a patch centre; exactly zero for singular `Σ`.
pub fn patch_curvature(p: &Patch) -> Result<f64> {
    if rank_collapse(p.k(), p.dim()) {
        return Ok(0.0);
    }
    let forms = local_forms(p)?;
    if forms.degenerate {
        return Ok(0.0);
    }
    Ok(gaussian_curvature(&forms.shape))
}

/// Curvature of a single out-of-sample patch, which must hold `k` neighbours.
pub fn curvature_of_query(p: &Patch, k: usize) -> Result<f64> {
    if p.k() != k {
        return Err(KknnError::out_of_range("patch size", p.k(), format!("exactly k = {k}")));
    }
    patch_curvature(p)
}

/// Raw Gaussian curvature of every sample over its k-NN patch.
pub fn raw_curvatures(d: &Dataset, k: usize, exec: Exec) -> Result<Vec<f64>> {
    let graph = build_knng_with(d, k, exec)?;
    exec.try_map(d.n(), |i| {
        let p = crate::knn_graph::patch_of(&graph, d, i)?;
        patch_curvature(&p)
    })
}

/// `(v − lo) / (hi − lo)`, or 0 when the range is empty.
#[inline]
pub fn normalize(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

/// Linear-interpolation quantile of ascending `sorted` at level `r/10`.
///
/// The position `r(N−1)/10` is split into integer and fractional parts with
/// integer arithmetic, so order statistics that land exactly on a sample are
/// returned unchanged.
fn decile(sorted_len: usize, r: usize, at: impl Fn(usize) -> f64) -> f64 {
    let num = r * (sorted_len - 1);
    let lo = num / 10;
    let rem = num % 10;
    let a = at(lo);
    if rem == 0 {
        a
    } else {
        let b = at(lo + 1);
        a + (rem as f64 / 10.0) * (b - a)
    }
}

/// Number of boundaries `≤ value`.
#[inline]
pub fn digitize(value: f64, boundaries: &[f64; BOUNDARY_COUNT]) -> u8 {
    boundaries.iter().filter(|&&b| b <= value).count() as u8
}

/// Quantized curvature of a sample set.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureProfile {
    pub raw: Vec<f64>,
    /// `|K|` min-max normalised to `[0, 1]`.
    pub magnitudes: Vec<f64>,
    pub boundaries: [f64; BOUNDARY_COUNT],
    pub scores: Vec<u8>,
}

impl CurvatureProfile {
    /// Quantizes raw curvatures into scores 0..=9; identical magnitudes all
    /// score 0.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(KknnError::Empty("no curvatures to quantize".into()));
        }
        let mut sorted_abs: Vec<f64> = raw.iter().map(|k| k.abs()).collect();
        sorted_abs.sort_by(f64::total_cmp);
        let lo = sorted_abs[0];
        let hi = sorted_abs[sorted_abs.len() - 1];
        let boundaries = boundaries_of(sorted_abs.len(), |j| normalize(sorted_abs[j], lo, hi));
        let magnitudes: Vec<f64> = raw.iter().map(|k| normalize(k.abs(), lo, hi)).collect();
        let scores = if hi > lo {
            magnitudes.iter().map(|&v| digitize(v, &boundaries)).collect()
        } else {
            vec![0; magnitudes.len()]
        };
        Ok(CurvatureProfile {
            raw,
            magnitudes,
            boundaries,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Score histogram over 0..=9.
    pub fn histogram(&self) -> [usize; 10] {
        let mut h = [0; 10];
        for &s in &self.scores {
            h[s as usize] += 1;
        }
        h
    }

    /// Writes `index,raw_K,magnitude,score` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "raw_K", "magnitude", "score"])?;
        for i in 0..self.len() {
            w.write_record(&[
                i.to_string(),
                self.raw[i].to_string(),
                self.magnitudes[i].to_string(),
                self.scores[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| KknnError::io("<curvature csv>", e))?;
        Ok(())
    }
}

fn boundaries_of(len: usize, at: impl Fn(usize) -> f64) -> [f64; BOUNDARY_COUNT] {
    let mut b = [0.0; BOUNDARY_COUNT];
    for (r, slot) in b.iter_mut().enumerate() {
        *slot = decile(len, r + 1, &at);
    }
    b
}

/// Score of one extra curvature appended to a fixed reference set.
///
/// Equivalent to `CurvatureProfile::from_raw([reference…, extra]).scores.last()`
/// (bit-for-bit), without re-sorting: `sorted_abs` must hold the reference
/// `|K|` values in ascending order.
pub fn appended_score(sorted_abs: &[f64], extra: f64) -> u8 {
    let extra = extra.abs();
    let len = sorted_abs.len() + 1;
    let pos = sorted_abs.partition_point(|&v| v < extra);
    let merged = |j: usize| -> f64 {
        match j.cmp(&pos) {
            std::cmp::Ordering::Less => sorted_abs[j],
            std::cmp::Ordering::Equal => extra,
            std::cmp::Ordering::Greater => sorted_abs[j - 1],
        }
    };
    let lo = merged(0);
    let hi = merged(len - 1);
    if hi <= lo {
        return 0;
    }
    let boundaries = boundaries_of(len, |j| normalize(merged(j), lo, hi));
    digitize(normalize(extra, lo, hi), &boundaries)
}

pub fn curvature_profile(d: &Dataset, k: usize) -> Result<CurvatureProfile> {
    curvature_profile_with(d, k, Exec::default())
}

/// Per-sample curvatures over the k-NN graph of `d`, quantized into scores.
pub fn curvature_profile_with(d: &Dataset, k: usize, exec: Exec) -> Result<CurvatureProfile> {
    if k < 1 {
        return Err(KknnError::out_of_range("k", k, ">= 1"));
    }
    if rank_collapse(k, d.m()) {
        log::debug!(
            "k = {k} neighbours cannot span {} dimensions: every curvature is zero; \
             reduce dimensionality (e.g. --pca) before computing curvatures",
            d.m()
        );
    }
    CurvatureProfile::from_raw(raw_curvatures(d, k, exec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        a.shape() == b.shape() && (a - b).abs().max() <= tol
    }

    #[test]
    fn covariance_is_centred_on_the_patch_centre() {
        let p = Patch::from_vectors(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(local_covariance(&p).unwrap(), dmatrix![0.5, 0.0; 0.0, 0.5]);

        let p = Patch::from_vectors(vec![0.0, 0.0], vec![vec![2.0, 0.0]]);
        assert_eq!(local_covariance(&p).unwrap(), dmatrix![4.0, 0.0; 0.0, 0.0]);

        let p = Patch::from_vectors(vec![1.0, 2.0], vec![vec![1.0, 2.0]; 3]);
        assert_eq!(local_covariance(&p).unwrap(), DMatrix::zeros(2, 2));

        let empty = Patch::from_vectors(vec![1.0], vec![]);
        assert!(local_covariance(&empty).is_err());
    }

    #[test]
    fn design_matrix_canonical_basis() {
        let x = design_matrix(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(x, dmatrix![1.0, 1.0, 0.0, 1.0, 0.0, 0.0; 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn design_matrix_three_dims_layout() {
        let u = dmatrix![1.0, 2.0, 3.0; 4.0, 5.0, 6.0; 7.0, 8.0, 9.0];
        let x = design_matrix(&u).unwrap();
        assert_eq!(x.ncols(), 10);
        let expect_row0 = [1.0, 1.0, 2.0, 3.0, 1.0, 4.0, 9.0, 2.0, 3.0, 6.0];
        assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), expect_row0);
    }

    #[test]
    fn design_matrix_pointwise_cross_column() {
        let (a, b, c, d) = (0.6, 0.8, -0.8, 0.6);
        let u = dmatrix![a, c; b, d];
        let x = design_matrix(&u).unwrap();
        assert_eq!(x[(0, 5)], a * c);
        assert_eq!(x[(1, 5)], b * d);
        assert!(design_matrix(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn second_fundamental_form_cases() {
        let x = design_matrix(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(second_fundamental_form(&x).unwrap(), DMatrix::identity(2, 2));

        let mut z = x.clone();
        z.columns_mut(3, 3).fill(0.0);
        assert_eq!(second_fundamental_form(&z).unwrap(), DMatrix::zeros(2, 2));

        assert!(second_fundamental_form(&DMatrix::zeros(2, 5)).is_err());
    }

    #[test]
    fn sign_flip_leaves_hess_unchanged() {
        let u = dmatrix![0.6, -0.8; 0.8, 0.6];
        let mut flipped = u.clone();
        flipped.column_mut(1).neg_mut();
        let a = second_fundamental_form(&design_matrix(&u).unwrap()).unwrap();
        let b = second_fundamental_form(&design_matrix(&flipped).unwrap()).unwrap();
        assert!(close(&a, &b, 1e-12));
    }

    #[test]
    fn shape_operator_cases() {
        let s = shape_operator(&DMatrix::identity(2, 2), &(DMatrix::identity(2, 2) * 0.5)).unwrap();
        assert_eq!(s, DMatrix::identity(2, 2) * -0.5);
        let zero = shape_operator(&DMatrix::identity(2, 2), &DMatrix::zeros(2, 2)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let s = shape_operator(&dmatrix![1.0, 0.0; 0.0, 2.0], &dmatrix![3.0, 0.0; 0.0, 4.0]).unwrap();
        assert_eq!(s, dmatrix![-3.0, 0.0; 0.0, -8.0]);
        assert!(shape_operator(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn curvature_read_offs() {
        let s = DMatrix::identity(2, 2) * -0.5;
        assert_eq!(gaussian_curvature(&s), 0.25);
        assert_eq!(mean_curvature(&s), -1.0);
        assert_eq!(principal_curvatures(&s).values, vec![-0.5, -0.5]);

        assert_eq!(gaussian_curvature(&-DMatrix::<f64>::identity(3, 3)), -1.0);

        let z = DMatrix::zeros(3, 3);
        assert_eq!(mean_curvature(&z), 0.0);
        assert_eq!(principal_curvatures(&z).values, vec![0.0; 3]);

        let s = dmatrix![-3.0, 0.0; 0.0, -8.0];
        assert_eq!(mean_curvature(&s), -11.0);
        let pc = principal_curvatures(&s);
        assert_eq!(pc.values, vec![-3.0, -8.0]);
        assert_eq!(pc.max_imaginary, 0.0);
    }

    #[test]
    fn singular_covariance_gives_exact_zero() {
        // k = 2 neighbours in 3 dimensions.
        let p = Patch::from_vectors(vec![0.0; 3], vec![vec![1.0, 0.2, 0.3], vec![0.1, 1.0, -0.4]]);
        assert_eq!(patch_curvature(&p).unwrap(), 0.0);
        let same = Patch::from_vectors(vec![1.0, 1.0], vec![vec![1.0, 1.0]; 4]);
        assert_eq!(curvature_of_query(&same, 4).unwrap(), 0.0);
        assert!(curvature_of_query(&same, 3).is_err());
    }

    #[test]
    fn equally_spaced_magnitudes_give_every_score() {
        let raw: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let prof = CurvatureProfile::from_raw(raw).unwrap();
        for (r, b) in prof.boundaries.iter().enumerate() {
            assert!((b - (r + 1) as f64 / 10.0).abs() < 1e-15);
        }
        assert_eq!(prof.scores, (0..10).collect::<Vec<u8>>());
    }

    #[test]
    fn constant_curvatures_score_zero() {
        let prof = CurvatureProfile::from_raw(vec![0.7; 5]).unwrap();
        assert!(prof.scores.iter().all(|&s| s == 0));
        assert!(prof.magnitudes.iter().all(|&m| m == 0.0));
        let single = CurvatureProfile::from_raw(vec![-3.0]).unwrap();
        assert_eq!(single.scores, vec![0]);
    }

    #[test]
    fn negative_curvature_quantized_by_magnitude() {
        let prof = CurvatureProfile::from_raw(vec![-1.0, -0.5, 0.0, -0.25]).unwrap();
        assert_eq!(prof.magnitudes, vec![1.0, 0.5, 0.0, 0.25]);
        assert!(prof.scores[0] >= prof.scores[1] && prof.scores[1] >= prof.scores[3]);
        assert_eq!(prof.scores[0], 9);
        assert_eq!(prof.scores[2], 0);
    }

    #[test]
    fn appended_score_matches_full_requantization() {
        let reference = [0.3, -0.1, 2.5, 0.0, 0.7, 1.1, -0.9, 0.05];
        let mut sorted: Vec<f64> = reference.iter().map(|v: &f64| v.abs()).collect();
        sorted.sort_by(f64::total_cmp);
        for extra in [-5.0, 0.0, 0.05, 0.4, 0.7, 1.0, 2.5, 3.0] {
            let mut all = reference.to_vec();
            all.push(extra);
            let full = CurvatureProfile::from_raw(all).unwrap();
            assert_eq!(appended_score(&sorted, extra), *full.scores.last().unwrap(), "extra {extra}");
        }
    }

    #[test]
    fn lattice_line_scores_zero() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, 0.0]).collect();
        let d = Dataset::from_rows(&rows, (0..12).map(|i| i % 2).collect()).unwrap();
        let prof = curvature_profile(&d, 3).unwrap();
        assert!(prof.raw.iter().all(|&k| k == 0.0));
        assert!(prof.scores.iter().all(|&s| s == 0));
    }

    #[test]
    fn csv_dump() {
        let prof = CurvatureProfile::from_raw(vec![0.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,raw_K,magnitude,score\n0,0,0,0\n1,2,1,9\n");
    }
}
