//! Holdout sweep: for every train fraction, split, fit each method, score the
//! test partition, then take per-metric medians across fractions.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::classifier::{fit_with, knn_predict, Method, Prediction};
use crate::dataset::{split_indices, sweep_fractions, Dataset, SplitPlan};
use crate::error::{KknnError, Result};
use crate::exec::Exec;
use crate::knn_graph::default_k;
use crate::metrics::{confusion, Averaging, Scores};

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub fractions: Vec<f64>,
    /// Neighbourhood size; `None` means `⌊log₂ n⌋` over the whole dataset.
    pub k: Option<usize>,
    pub seed: u64,
    pub averaging: Averaging,
    pub exec: Exec,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            methods: vec![Method::Knn, Method::Kknn],
            fractions: sweep_fractions(),
            k: None,
            seed: 42,
            averaging: Averaging::Weighted,
            exec: Exec::default(),
        }
    }
}

/// Seed of the shuffle used for one fraction. Each fraction gets an
/// independent permutation derived from the run seed.
pub fn fraction_seed(seed: u64, fraction: f64) -> u64 {
    let pct = (fraction * 10_000.0).round() as u64;
    seed ^ pct.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitRecord {
    pub fraction: f64,
    pub method: Method,
    pub k: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub scores: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub dataset: String,
    pub n: usize,
    pub m: usize,
    pub classes: usize,
    pub k: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub records: Vec<SplitRecord>,
    /// Fractions that could not be evaluated, with the reason.
    pub skipped: Vec<(f64, String)>,
    pub notes: Vec<String>,
}

impl BenchmarkReport {
    pub fn records_for(&self, method: Method) -> impl Iterator<Item = &SplitRecord> + '_ {
        self.records.iter().filter(move |r| r.method == method)
    }

    /// Per-metric medians over completed fractions for `method`.
    pub fn median(&self, method: Method) -> Result<Scores> {
        let all: Vec<Scores> = self.records_for(method).map(|r| r.scores).collect();
        Scores::median_of(&all)
    }

    pub fn completed_fractions(&self) -> usize {
        self.records_for(self.methods[0]).count()
    }
}

fn evaluate(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    k: usize,
    exec: Exec,
) -> Result<Vec<Prediction>> {
    match method {
        Method::Knn => knn_predict(train, test.features(), k, exec),
        Method::Kknn => fit_with(train, k, exec)?.predict_dataset(test, exec),
    }
}

type FractionOutcome = std::result::Result<(Vec<SplitRecord>, Vec<String>), String>;

fn run_fraction(d: &Dataset, cfg: &BenchmarkConfig, k: usize, fraction: f64) -> Result<FractionOutcome> {
    let plan = SplitPlan::new(fraction, fraction_seed(cfg.seed, fraction));
    let (tr, te) = match split_indices(d, &plan) {
        Ok(s) => s,
        Err(e @ KknnError::EmptyTrainClass { .. }) => return Ok(Err(e.to_string())),
        Err(e) => return Err(e),
    };
    if te.is_empty() {
        return Ok(Err("empty test partition".into()));
    }
    let train = d.subset(&tr);
    let test = d.subset(&te);
    let mut notes = Vec::new();
    let split_k = if k + 1 > train.n() {
        let clamped = train.n().saturating_sub(1).max(1);
        notes.push(format!(
            "fraction {fraction}: k = {k} clamped to {clamped} for {} training samples",
            train.n()
        ));
        clamped
    } else {
        k
    };
    let mut records = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let preds = evaluate(method, &train, &test, split_k, cfg.exec)?;
        let predicted: Vec<usize> = preds.iter().map(|p| p.label).collect();
        let cm = confusion(test.labels(), &predicted, d.class_count())?;
        records.push(SplitRecord {
            fraction,
            method,
            k: split_k,
            train_n: train.n(),
            test_n: test.n(),
            scores: Scores::from_confusion(&cm, cfg.averaging)?,
        });
    }
    Ok(Ok((records, notes)))
}

/// Runs the holdout sweep on one dataset. Deterministic for a given
/// configuration regardless of the execution strategy.
pub fn run_benchmark(name: &str, d: &Dataset, cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if cfg.methods.is_empty() {
        return Err(KknnError::Empty("no methods selected".into()));
    }
    if cfg.fractions.is_empty() {
        return Err(KknnError::Empty("no train fractions selected".into()));
    }
    if let Some(&f) = cfg.fractions.iter().find(|&&f| !(f > 0.0 && f < 1.0)) {
        return Err(KknnError::out_of_range("train fraction", f, "(0, 1)"));
    }
    let k = match cfg.k {
        Some(k) if k >= 1 => k,
        Some(k) => return Err(KknnError::out_of_range("k", k, ">= 1")),
        None => default_k(d.n())?,
    };
    let outcomes = cfg
        .exec
        .try_map(cfg.fractions.len(), |i| run_fraction(d, cfg, k, cfg.fractions[i]))?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut notes = Vec::new();
    for (&fraction, outcome) in cfg.fractions.iter().zip(outcomes) {
        match outcome {
            Ok((r, n)) => {
                records.extend(r);
                notes.extend(n);
            }
            Err(reason) => {
                log::warn!("{name}: skipping fraction {fraction}: {reason}");
                skipped.push((fraction, reason));
            }
        }
    }
    for note in &notes {
        log::warn!("{name}: {note}");
    }
    if crate::curvature::rank_collapse(k, d.m()) && cfg.methods.contains(&Method::Kknn) {
        notes.push(format!(
            "k = {k} < {} features: all curvatures vanish and kK-NN reduces to k-NN; consider --pca",
            d.m()
        ));
    }
    Ok(BenchmarkReport {
        dataset: name.to_string(),
        n: d.n(),
        m: d.m(),
        classes: d.class_count(),
        k,
        seed: cfg.seed,
        methods: cfg.methods.clone(),
        records,
        skipped,
        notes,
    })
}

fn provenance(reports: &[BenchmarkReport]) -> String {
    let mut s = String::from("# kknn benchmark;");
    for r in reports {
        let _ = write!(
            s,
            " {}: n={} m={} classes={} k={} seed={};",
            r.dataset, r.n, r.m, r.classes, r.k, r.seed
        );
    }
    s.push_str(" splits: independent seeded stratified shuffle per fraction");
    s
}

fn io_err(e: std::io::Error) -> KknnError {
    KknnError::io("<report>", e)
}

/// Long format: `dataset,method,fraction,metric,value`.
pub fn write_splits_csv<W: Write>(reports: &[BenchmarkReport], mut out: W) -> Result<()> {
    writeln!(out, "{}", provenance(reports)).map_err(io_err)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "method", "fraction", "metric", "value"])?;
    for r in reports {
        for rec in &r.records {
            for (name, v) in Scores::NAMES.iter().zip(rec.scores.values()) {
                w.write_record(&[
                    r.dataset.clone(),
                    rec.method.to_string(),
                    format!("{:.2}", rec.fraction),
                    name.to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Balanced-accuracy curve per method: `dataset,fraction,method,balanced_accuracy`.
pub fn write_curves_csv<W: Write>(reports: &[BenchmarkReport], mut out: W) -> Result<()> {
    writeln!(out, "{}", provenance(reports)).map_err(io_err)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "fraction", "method", "balanced_accuracy"])?;
    for r in reports {
        for rec in &r.records {
            w.write_record(&[
                r.dataset.clone(),
                format!("{:.2}", rec.fraction),
                rec.method.to_string(),
                rec.scores.balanced_accuracy.to_string(),
            ])?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Median table, one row per dataset and method.
pub fn write_summary_csv<W: Write>(reports: &[BenchmarkReport], mut out: W) -> Result<()> {
    writeln!(out, "{}", provenance(reports)).map_err(io_err)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "method", "balanced_accuracy", "kappa", "jaccard", "f1", "completed_splits"])?;
    for r in reports {
        for &method in &r.methods {
            let Ok(s) = r.median(method) else { continue };
            let mut rec = vec![r.dataset.clone(), method.to_string()];
            rec.extend(s.values().iter().map(|v| v.to_string()));
            rec.push(r.records_for(method).count().to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn method_title(m: Method) -> &'static str {
    match m {
        Method::Knn => "k-NN",
        Method::Kknn => "kK-NN",
    }
}

/// Markdown rendering of the median table: one column group per method.
pub fn write_summary_md<W: Write>(reports: &[BenchmarkReport], mut out: W) -> Result<()> {
    let Some(first) = reports.first() else {
        return Ok(());
    };
    let methods = &first.methods;
    let mut s = String::new();
    let _ = writeln!(s, "<!-- {} -->", provenance(reports).trim_start_matches("# "));
    let _ = writeln!(s, "Median of each measure over the holdout splits.\n");
    s.push_str("| Dataset |");
    for &m in methods {
        let t = method_title(m);
        let _ = write!(s, " {t} Bal. Acc. | {t} Kappa | {t} Jaccard | {t} F1 |");
    }
    s.push('\n');
    s.push_str("|---|");
    for _ in methods {
        s.push_str("---:|---:|---:|---:|");
    }
    s.push('\n');
    for r in reports {
        let _ = write!(s, "| {} |", r.dataset);
        for &m in methods {
            match r.median(m) {
                Ok(sc) => {
                    for v in sc.values() {
                        let _ = write!(s, " {v:.4} |");
                    }
                }
                Err(_) => s.push_str(" - | - | - | - |"),
            }
        }
        s.push('\n');
    }
    for r in reports {
        for (f, why) in &r.skipped {
            let _ = writeln!(s, "\n- {}: fraction {f:.2} skipped ({why})", r.dataset);
        }
        for note in &r.notes {
            let _ = writeln!(s, "\n- {}: {note}", r.dataset);
        }
    }
    out.write_all(s.as_bytes()).map_err(io_err)
}
