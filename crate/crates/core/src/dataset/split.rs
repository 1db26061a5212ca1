use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{KknnError, Result};

/// Parameters of one holdout partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitPlan {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        SplitPlan {
            train_fraction,
            seed,
            stratified: true,
        }
    }
}

/// The holdout sweep: 0.10, 0.15, ..., 0.90 (17 fractions).
pub fn sweep_fractions() -> Vec<f64> {
    (0..17).map(|i| (10 + 5 * i) as f64 / 100.0).collect()
}

/// Sorted (train, test) index sets for `plan`.
///
/// Stratified plans shuffle each class independently, give every class
/// `⌊f·n_c⌋` training samples, hand out the remaining `round(f·n) − Σ⌊f·n_c⌋`
/// by largest fractional part (lower class id first on ties) and finally lift
/// any class left at zero to one sample.
pub fn split_indices(d: &Dataset, plan: &SplitPlan) -> Result<(Vec<usize>, Vec<usize>)> {
    let f = plan.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(KknnError::out_of_range("train_fraction", f, "(0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let c = d.class_count();
    let mut train = Vec::new();
    let mut test = Vec::new();

    if plan.stratified {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (i, &l) in d.labels().iter().enumerate() {
            by_class[l].push(i);
        }
        if let Some(class) = by_class.iter().position(Vec::is_empty) {
            return Err(KknnError::EmptyTrainClass { class });
        }
        let quotas: Vec<f64> = by_class.iter().map(|v| f * v.len() as f64).collect();
        let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let total = (f * d.n() as f64).round() as usize;
        let remaining = total.saturating_sub(take.iter().sum());
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &cls in order.iter().take(remaining) {
            take[cls] += 1;
        }
        for (t, members) in take.iter_mut().zip(&by_class) {
            *t = (*t).max(1).min(members.len());
        }
        for (members, &t) in by_class.iter_mut().zip(&take) {
            members.shuffle(&mut rng);
            train.extend_from_slice(&members[..t]);
            test.extend_from_slice(&members[t..]);
        }
    } else {
        let mut all: Vec<usize> = (0..d.n()).collect();
        all.shuffle(&mut rng);
        let t = ((f * d.n() as f64).round() as usize).clamp(1, d.n());
        train.extend_from_slice(&all[..t]);
        test.extend_from_slice(&all[t..]);
        let mut seen = vec![false; c];
        for &i in &train {
            seen[d.label(i)] = true;
        }
        if let Some(class) = seen.iter().position(|s| !s) {
            return Err(KknnError::EmptyTrainClass { class });
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Partitions `d` into (train, test) according to `plan`.
pub fn stratified_split(d: &Dataset, plan: &SplitPlan) -> Result<(Dataset, Dataset)> {
    let (tr, te) = split_indices(d, plan)?;
    Ok((d.subset(&tr), d.subset(&te)))
}

/// Seeded stratified subsample keeping `fraction` of every class.
pub fn subsample(d: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    let (tr, _) = split_indices(d, &SplitPlan::new(fraction, seed))?;
    Ok(d.subset(&tr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(n_per: usize, classes: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n_per * classes).map(|i| vec![i as f64]).collect();
        let labels = (0..n_per * classes).map(|i| i % classes).collect();
        Dataset::from_rows(&rows, labels).unwrap()
    }

    #[test]
    fn half_split_of_ten() {
        let d = balanced(5, 2);
        let (tr, te) = stratified_split(&d, &SplitPlan::new(0.5, 7)).unwrap();
        assert_eq!((tr.n(), te.n()), (5, 5));
        for c in tr.class_counts() {
            assert!((2..=3).contains(&c));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let d = balanced(13, 3);
        let a = split_indices(&d, &SplitPlan::new(0.35, 11)).unwrap();
        let b = split_indices(&d, &SplitPlan::new(0.35, 11)).unwrap();
        let c = split_indices(&d, &SplitPlan::new(0.35, 12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sweep_has_seventeen_distinct_fractions() {
        let f = sweep_fractions();
        assert_eq!(f.len(), 17);
        assert_eq!(f[0], 0.10);
        assert_eq!(f[16], 0.90);
        let d = balanced(20, 2);
        let splits: std::collections::BTreeSet<Vec<usize>> = f
            .iter()
            .map(|&x| split_indices(&d, &SplitPlan::new(x, 1)).unwrap().0)
            .collect();
        assert_eq!(splits.len(), 17);
    }

    #[test]
    fn tiny_class_still_gets_a_training_sample() {
        let rows: Vec<Vec<f64>> = (0..21).map(|i| vec![i as f64]).collect();
        let mut labels = vec![0; 21];
        labels[20] = 1;
        let d = Dataset::from_rows(&rows, labels).unwrap();
        let (tr, te) = split_indices(&d, &SplitPlan::new(0.1, 3)).unwrap();
        assert!(tr.contains(&20));
        assert!(!te.contains(&20));
    }

    #[test]
    fn unstratified_split_can_miss_a_class() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let mut labels = vec![0; 40];
        labels[39] = 1;
        let d = Dataset::from_rows(&rows, labels).unwrap();
        let failures = (0..20)
            .filter(|&s| {
                let plan = SplitPlan { train_fraction: 0.1, seed: s, stratified: false };
                matches!(split_indices(&d, &plan), Err(KknnError::EmptyTrainClass { class: 1 }))
            })
            .count();
        assert!(failures > 0);
    }

    #[test]
    fn invalid_fraction() {
        let d = balanced(5, 2);
        assert!(split_indices(&d, &SplitPlan::new(1.0, 0)).is_err());
        assert!(split_indices(&d, &SplitPlan::new(0.0, 0)).is_err());
    }
}
