//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::benchmark::{
    run_benchmark, write_curves_csv, write_splits_csv, write_summary_csv, write_summary_md,
    BenchmarkConfig,
};
use crate::classifier::{fit_with, Method, ModelFile};
use crate::curvature::{curvature_profile_with, rank_collapse};
use crate::dataset::{
    fetch_openml, lda_fit, load_csv, load_queries, pca_fit, standardizer_fit, subsample,
    sweep_fractions, AffineMap, Dataset, LabelColumn,
};
use crate::error::{KknnError, Result};
use crate::exec::Exec;
use crate::knn_graph::default_k;
use crate::metrics::{median, Averaging};

#[derive(Debug, Parser)]
#[command(name = "kknn", version, about = "Curvature-adaptive k-NN classification")]
pub struct Cli {
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-sample curvature scores of a dataset.
    Curvatures(CurvaturesArgs),
    /// Train a kK-NN model and save it.
    Fit(FitArgs),
    /// Classify query rows with a saved model.
    Predict(PredictArgs),
    /// Holdout sweep comparing k-NN and kK-NN.
    Benchmark(BenchmarkArgs),
    /// Download OpenML datasets into the local cache.
    Fetch(FetchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// CSV file with numeric features and one label column.
    #[arg(long)]
    pub data: Vec<PathBuf>,
    /// OpenML dataset name or numeric id.
    #[arg(long)]
    pub openml: Vec<String>,
    /// Label column: header name, 0-based index or `last`.
    #[arg(long, default_value = "last")]
    pub label_col: LabelColumn,
    /// The CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// Directory of cached OpenML downloads.
    #[arg(long, env = "KKNN_CACHE", default_value = "openml-cache")]
    pub cache: PathBuf,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PrepArgs {
    /// Z-score every feature.
    #[arg(long)]
    pub standardize: bool,
    /// Project onto the leading D principal components.
    #[arg(long, value_name = "D")]
    pub pca: Option<usize>,
    /// Project onto D linear discriminants.
    #[arg(long, value_name = "D")]
    pub lda: Option<usize>,
    /// Ridge added to the within-class scatter (default: scaled to its trace).
    #[arg(long)]
    pub lda_ridge: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CurvaturesArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// Output directory for `curvatures.csv`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// Model file to write.
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of query rows.
    #[arg(long)]
    pub data: PathBuf,
    /// Column to ignore in the query file (e.g. a label).
    #[arg(long)]
    pub label_col: Option<LabelColumn>,
    #[arg(long)]
    pub no_header: bool,
    /// Predictions file to write.
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub prep: PrepArgs,
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated subset of `knn,kknn`.
    #[arg(long, value_delimiter = ',', default_value = "knn,kknn")]
    pub methods: Vec<Method>,
    /// Comma-separated train fractions (default 0.10 to 0.90 in 0.05 steps).
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Jaccard/F1 averaging: `weighted` or `macro`.
    #[arg(long, default_value = "weighted")]
    pub averaging: Averaging,
    /// Keep a stratified fraction of each dataset before the sweep.
    #[arg(long)]
    pub subsample: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "benchmark-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[arg(long, required = true)]
    pub openml: Vec<String>,
    #[arg(long, env = "KKNN_CACHE", default_value = "openml-cache")]
    pub cache: PathBuf,
}

/// Fits the requested transforms on `d` (standardize, then PCA, then LDA)
/// and returns the transformed data with the maps for replay on queries.
pub fn preprocess(d: &Dataset, prep: &PrepArgs) -> Result<(Dataset, Vec<AffineMap>)> {
    let mut cur = d.clone();
    let mut maps = Vec::new();
    if prep.standardize {
        let map = standardizer_fit(&cur);
        cur = cur.transform(&map, "z")?;
        maps.push(map);
    }
    if let Some(dim) = prep.pca {
        let map = pca_fit(&cur, dim)?;
        cur = cur.transform(&map, "pc")?;
        maps.push(map);
    }
    if let Some(dim) = prep.lda {
        let map = lda_fit(&cur, dim, prep.lda_ridge)?;
        cur = cur.transform(&map, "ld")?;
        maps.push(map);
    }
    Ok((cur, maps))
}

fn load_sources(src: &SourceArgs) -> Result<Vec<(String, Dataset)>> {
    let mut out = Vec::new();
    for path in &src.data {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        out.push((name, load_csv(path, &src.label_col, !src.no_header)?));
    }
    for key in &src.openml {
        out.push((key.clone(), fetch_openml(key, &src.cache)?));
    }
    if out.is_empty() {
        return Err(KknnError::Empty("give --data or --openml".into()));
    }
    Ok(out)
}

fn load_single(src: &SourceArgs) -> Result<(String, Dataset)> {
    let mut all = load_sources(src)?;
    if all.len() > 1 {
        return Err(KknnError::InvalidDataset("this command takes a single dataset".into()));
    }
    Ok(all.remove(0))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| KknnError::io(dir, e))
}

fn write_file(path: &Path, render: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    render(&mut buf)?;
    fs::write(path, buf).map_err(|e| KknnError::io(path, e))
}

fn resolve_k(k: Option<usize>, n: usize) -> Result<usize> {
    match k {
        Some(0) => Err(KknnError::out_of_range("k", 0, ">= 1")),
        Some(k) => Ok(k),
        None => default_k(n),
    }
}

fn warn_rank_collapse(k: usize, m: usize) {
    if rank_collapse(k, m) {
        eprintln!(
            "warning: k = {k} is too small for {m} features; all curvatures are zero and kK-NN \
             behaves like k-NN. Reduce the dimension first, e.g. --pca {k}."
        );
    }
}

pub fn cmd_curvatures(args: &CurvaturesArgs, exec: Exec, stdout: &mut dyn Write) -> Result<()> {
    let (name, raw) = load_single(&args.source)?;
    let (d, _) = preprocess(&raw, &args.prep)?;
    let k = crate::classifier::clamp_k(resolve_k(args.k, d.n())?, d.n());
    warn_rank_collapse(k, d.m());
    let profile = curvature_profile_with(&d, k, exec)?;
    create_dir(&args.out)?;
    let path = args.out.join("curvatures.csv");
    write_file(&path, |b| profile.write_csv(b))?;

    let lo = profile.magnitudes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = profile.magnitudes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mid = median(&profile.magnitudes)?;
    let hist = profile.histogram();
    let out = (|| -> std::io::Result<()> {
        writeln!(stdout, "dataset: {name} (n = {}, m = {})", d.n(), d.m())?;
        writeln!(stdout, "k = {k}")?;
        writeln!(stdout, "magnitude min/median/max: {lo:.6} / {mid:.6} / {hi:.6}")?;
        let h: Vec<String> = hist.iter().enumerate().map(|(s, c)| format!("{s}:{c}")).collect();
        writeln!(stdout, "score histogram: {}", h.join(" "))?;
        writeln!(stdout, "wrote {}", path.display())
    })();
    out.map_err(|e| KknnError::io("<stdout>", e))
}

pub fn cmd_fit(args: &FitArgs, exec: Exec, stdout: &mut dyn Write) -> Result<()> {
    let (name, raw) = load_single(&args.source)?;
    let (d, maps) = preprocess(&raw, &args.prep)?;
    let k = resolve_k(args.k, d.n())?;
    warn_rank_collapse(k.min(d.n() - 1), d.m());
    let model = fit_with(&d, k, exec)?;
    ModelFile::from_model(&model, maps).save(&args.out)?;
    writeln!(
        stdout,
        "fitted {name}: n = {}, m = {}, k = {}; wrote {}",
        d.n(),
        d.m(),
        model.k(),
        args.out.display()
    )
    .map_err(|e| KknnError::io("<stdout>", e))
}

pub fn cmd_predict(args: &PredictArgs, exec: Exec, stdout: &mut dyn Write) -> Result<()> {
    let (model, maps) = ModelFile::load(&args.model)?.into_model()?;
    let table = load_queries(&args.data, args.label_col.as_ref(), !args.no_header)?;
    let expected = maps.first().map_or(model.train().m(), AffineMap::input_dim);
    if table.n_features != expected {
        return Err(KknnError::DimensionMismatch {
            expected,
            got: table.n_features,
        });
    }
    let mut queries = table.features;
    for map in &maps {
        queries = queries
            .chunks(map.input_dim())
            .flat_map(|row| map.apply(row))
            .collect();
    }
    let preds = model.predict(&queries, exec)?;
    let names = model.train().class_names();
    write_file(&args.out, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["index", "label", "effective_k", "score"])?;
        for (i, p) in preds.iter().enumerate() {
            w.write_record(&[
                i.to_string(),
                names[p.label].clone(),
                p.effective_k.to_string(),
                p.score.to_string(),
            ])?;
        }
        w.flush().map_err(|e| KknnError::io("<predictions>", e))
    })?;
    writeln!(stdout, "predicted {} rows; wrote {}", preds.len(), args.out.display())
        .map_err(|e| KknnError::io("<stdout>", e))
}

pub fn cmd_benchmark(args: &BenchmarkArgs, exec: Exec, stdout: &mut dyn Write) -> Result<()> {
    let fractions = if args.fractions.is_empty() {
        sweep_fractions()
    } else {
        args.fractions.clone()
    };
    let cfg = BenchmarkConfig {
        methods: args.methods.clone(),
        fractions,
        k: args.k,
        seed: args.seed,
        averaging: args.averaging,
        exec,
    };
    let mut reports = Vec::new();
    for (name, raw) in load_sources(&args.source)? {
        let raw = match args.subsample {
            Some(f) => subsample(&raw, f, args.seed)?,
            None => raw,
        };
        let (d, _) = preprocess(&raw, &args.prep)?;
        let k = resolve_k(args.k, d.n())?;
        if cfg.methods.contains(&Method::Kknn) {
            warn_rank_collapse(k, d.m());
        }
        reports.push(run_benchmark(&name, &d, &cfg)?);
    }
    create_dir(&args.out)?;
    write_file(&args.out.join("splits.csv"), |b| write_splits_csv(&reports, b))?;
    write_file(&args.out.join("summary.csv"), |b| write_summary_csv(&reports, b))?;
    write_file(&args.out.join("summary.md"), |b| write_summary_md(&reports, b))?;
    write_file(&args.out.join("curves.csv"), |b| write_curves_csv(&reports, b))?;

    let mut text = Vec::new();
    write_summary_md(&reports, &mut text)?;
    stdout
        .write_all(&text)
        .and_then(|_| writeln!(stdout, "wrote {}", args.out.display()))
        .map_err(|e| KknnError::io("<stdout>", e))
}

pub fn cmd_fetch(args: &FetchArgs, stdout: &mut dyn Write) -> Result<()> {
    for key in &args.openml {
        let d = fetch_openml(key, &args.cache)?;
        writeln!(
            stdout,
            "{key}: n = {}, m = {}, classes = {}",
            d.n(),
            d.m(),
            d.class_count()
        )
        .map_err(|e| KknnError::io("<stdout>", e))?;
    }
    Ok(())
}

/// Dispatches a parsed command line.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match &cli.command {
        Command::Curvatures(a) => cmd_curvatures(a, exec, stdout),
        Command::Fit(a) => cmd_fit(a, exec, stdout),
        Command::Predict(a) => cmd_predict(a, exec, stdout),
        Command::Benchmark(a) => cmd_benchmark(a, exec, stdout),
        Command::Fetch(a) => cmd_fetch(a, stdout),
    }
}
