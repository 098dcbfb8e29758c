//! Command-line front end: `synth`, `fit`, `predict`, `eval`, `gridsearch`.
//!
//! Machine-readable output (JSON, or CSV with `--format csv`) goes to stdout
//! or to `--out`; progress messages go to stderr. Reports carry the config
//! hash and seed and contain no wall-clock data unless `--timings` is given,
//! so repeated runs produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{load_json, GridCell, GridSpec, RunConfig};
use crate::data::{read_trials, split, synth_dataset, write_archive, Split, SynthConfig};
use crate::ensemble::{cross_validate, mpec_fit_timed, CvResult, MpecModel, PhaseTimings};
use crate::error::{ErrorCategory, MpecError, Result};
use crate::features::Trial;
use crate::learners::LearnerKind;
use crate::metrics::{evaluate, EvalReport};
use crate::model_io::{load_model, save_model};

#[derive(Debug, Parser)]
#[command(name = "mpec", version, about = "Manifold-preserving ensemble classifier for multichannel trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trial archive.
    Synth(SynthArgs),
    /// Split an archive, fit on the training side and save the model.
    Fit(FitArgs),
    /// Predict class ids for every trial of an archive.
    Predict(PredictArgs),
    /// Score a model on the test side of a split.
    Eval(EvalArgs),
    /// Rank fusion weights, cluster weights and k by cross-validation.
    Gridsearch(GridArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Archive to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub archive: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Include per-phase wall-clock timings in the report.
    #[arg(long)]
    pub timings: bool,
    /// Skip the cross-validation estimate on the training side.
    #[arg(long)]
    pub no_cv: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub archive: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid specification (JSON).
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Process exit status for an error.
pub fn exit_code(err: &MpecError) -> i32 {
    match err.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numerical => 4,
    }
}

fn load_run_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg: RunConfig = match path {
        Some(p) => load_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn required(path: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.or_else(|| fallback.clone())
        .ok_or_else(|| MpecError::InvalidConfig(format!("no {what} path given")))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| MpecError::io(p, e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| MpecError::io("<stdout>", e)),
    }
}

fn labels(trials: &[Trial]) -> Vec<usize> {
    trials.iter().map(|t| t.label).collect()
}

struct Sides {
    train: Vec<Trial>,
    test: Vec<Trial>,
}

fn split_sides(trials: &[Trial], ratio: f64, seed: u64) -> Result<Sides> {
    let s = split(trials, ratio, seed)?;
    Ok(Sides {
        train: Split::select(trials, &s.train),
        test: Split::select(trials, &s.test),
    })
}

fn weak_accuracies(model: &MpecModel, trials: &[Trial]) -> Result<BTreeMap<String, f64>> {
    let truth = labels(trials);
    let detailed = model.predict_detailed(trials)?;
    LearnerKind::WEAK
        .iter()
        .enumerate()
        .map(|(slot, kind)| {
            let pred: Vec<usize> = detailed.iter().map(|p| p.weak[slot]).collect();
            Ok((kind.name().to_owned(), evaluate(&pred, &truth)?.accuracy))
        })
        .collect()
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a, stdout),
        Command::Fit(a) => cmd_fit(a, stdout),
        Command::Predict(a) => cmd_predict(a, stdout),
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Gridsearch(a) => cmd_gridsearch(a, stdout),
    }
}

#[derive(Serialize)]
struct SynthReport {
    command: &'static str,
    seed: u64,
    trials: usize,
    classes: usize,
    channels: usize,
    samples: usize,
}

fn cmd_synth(a: SynthArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg: SynthConfig = load_json(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let data = synth_dataset(&cfg)?;
    write_archive(&data.trials, &a.out)?;
    eprintln!("synth: wrote {} trials to {}", data.trials.len(), a.out.display());
    emit(
        &to_json(&SynthReport {
            command: "synth",
            seed: cfg.seed,
            trials: data.trials.len(),
            classes: cfg.classes,
            channels: cfg.channels,
            samples: cfg.samples,
        }),
        None,
        stdout,
    )
}

#[derive(Serialize)]
struct FitReport {
    command: &'static str,
    seed: u64,
    split_seed: u64,
    split_ratio: f64,
    config_hash: String,
    n_train: usize,
    n_test: usize,
    class_count: usize,
    selected_channels: Vec<usize>,
    cluster_sizes: Vec<usize>,
    kmeans_iterations: usize,
    inertia_history: Vec<f64>,
    /// Training-set accuracy of the full ensemble.
    accuracy: f64,
    training: EvalReport,
    weak_training_accuracy: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv: Option<CvResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings_ms: Option<PhaseTimings>,
}

fn cmd_fit(a: FitArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_run_config(a.config.as_deref(), a.seed)?;
    let archive = required(a.archive, &cfg.paths.archive, "archive")?;
    let model_out = required(a.out, &cfg.paths.model, "model output")?;
    let trials = read_trials(&archive)?;
    let sides = split_sides(&trials, cfg.split_ratio, cfg.effective_split_seed())?;
    eprintln!(
        "fit: {} training / {} test trials, seed {}",
        sides.train.len(),
        sides.test.len(),
        cfg.seed
    );

    let clock = Instant::now();
    let (mut model, timings) = mpec_fit_timed(&sides.train, &cfg.pipeline(), cfg.seed)?;
    eprintln!(
        "fit: pipeline fitted in {:.1} ms (features {:.1}, clustering {:.1}, learners {:.1}, meta {:.1})",
        clock.elapsed().as_secs_f64() * 1e3,
        timings.features_ms,
        timings.clustering_ms,
        timings.learners_ms,
        timings.meta_ms
    );
    model.provenance.split_seed = Some(cfg.effective_split_seed());
    model.provenance.split_ratio = Some(cfg.split_ratio);
    model.provenance.config_hash = Some(cfg.hash());
    save_model(&model, &model_out)?;

    let truth = labels(&sides.train);
    let training = evaluate(&model.predict(&sides.train)?, &truth)?;
    let cv = if a.no_cv {
        None
    } else {
        let clock = Instant::now();
        let r = cross_validate(&sides.train, &cfg.pipeline(), cfg.cv_folds, cfg.seed)?;
        eprintln!(
            "fit: {}-fold cross-validation {:.4} in {:.1} ms",
            cfg.cv_folds,
            r.mean_accuracy,
            clock.elapsed().as_secs_f64() * 1e3
        );
        Some(r)
    };

    if a.format == Format::Csv {
        let mut csv = String::from("pass,inertia\n");
        for (i, v) in model.cluster_model.inertia_history.iter().enumerate() {
            csv.push_str(&format!("{},{}\n", i + 1, v));
        }
        return emit(&csv, None, stdout);
    }
    let report = FitReport {
        command: "fit",
        seed: cfg.seed,
        split_seed: cfg.effective_split_seed(),
        split_ratio: cfg.split_ratio,
        config_hash: cfg.hash(),
        n_train: sides.train.len(),
        n_test: sides.test.len(),
        class_count: model.class_count,
        selected_channels: model.feature_config.selected_channels.clone(),
        cluster_sizes: model.cluster_sizes(),
        kmeans_iterations: model.cluster_model.iterations_run,
        inertia_history: model.cluster_model.inertia_history.clone(),
        accuracy: training.accuracy,
        weak_training_accuracy: weak_accuracies(&model, &sides.train)?,
        training,
        cv,
        timings_ms: a.timings.then_some(timings),
    };
    emit(&to_json(&report), None, stdout)
}

#[derive(Serialize)]
struct PredictRow {
    index: usize,
    class: usize,
    cluster: usize,
}

fn cmd_predict(a: PredictArgs, stdout: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let trials = read_trials(&a.archive)?;
    let rows: Vec<PredictRow> = model
        .predict_detailed(&trials)?
        .into_iter()
        .enumerate()
        .map(|(index, p)| PredictRow {
            index,
            class: p.class,
            cluster: p.cluster,
        })
        .collect();
    eprintln!("predict: {} trials", rows.len());
    let text = match a.format {
        Format::Json => to_json(&serde_json::json!({ "command": "predict", "predictions": rows })),
        Format::Csv => {
            let mut s = String::from("index,class,cluster\n");
            for r in &rows {
                s.push_str(&format!("{},{},{}\n", r.index, r.class, r.cluster));
            }
            s
        }
    };
    emit(&text, a.out.as_deref(), stdout)
}

/// One row in the column order precision, recall, F1, accuracy.
#[derive(Serialize)]
struct TableRow {
    precision: f64,
    recall: f64,
    f1: f64,
    accuracy: f64,
}

#[derive(Serialize)]
struct EvalOutput {
    command: &'static str,
    seed: u64,
    split_seed: u64,
    split_ratio: f64,
    config_hash: Option<String>,
    n_test: usize,
    table: TableRow,
    report: EvalReport,
    weak_accuracy: BTreeMap<String, f64>,
}

fn cmd_eval(a: EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let cfg = match &a.config {
        Some(p) => Some(load_run_config(Some(p), a.seed)?),
        None => None,
    };
    let ratio = cfg
        .as_ref()
        .map(|c| c.split_ratio)
        .or(model.provenance.split_ratio)
        .unwrap_or(RunConfig::default().split_ratio);
    let split_seed = a
        .split_seed
        .or(cfg.as_ref().map(RunConfig::effective_split_seed))
        .or(model.provenance.split_seed)
        .or(a.seed)
        .unwrap_or(model.seed);
    if let Some(recorded) = model.provenance.split_seed {
        if recorded != split_seed {
            eprintln!(
                "warning: evaluating with split seed {split_seed}, but the model was fitted with split seed {recorded}"
            );
        }
    }
    let trials = read_trials(&a.archive)?;
    let sides = split_sides(&trials, ratio, split_seed)?;
    let report = evaluate(&model.predict(&sides.test)?, &labels(&sides.test))?;
    eprintln!("eval: accuracy {:.4} on {} test trials", report.accuracy, sides.test.len());
    let text = match a.format {
        Format::Csv => report.per_class_csv(),
        Format::Json => to_json(&EvalOutput {
            command: "eval",
            seed: model.seed,
            split_seed,
            split_ratio: ratio,
            config_hash: model.provenance.config_hash.clone(),
            n_test: sides.test.len(),
            table: TableRow {
                precision: report.precision,
                recall: report.recall,
                f1: report.f1,
                accuracy: report.accuracy,
            },
            weak_accuracy: weak_accuracies(&model, &sides.test)?,
            report,
        }),
    };
    emit(&text, a.out.as_deref(), stdout)
}

#[derive(Serialize)]
struct GridRow {
    rank: usize,
    #[serde(flatten)]
    cell: GridCell,
    mean_accuracy: Option<f64>,
    fold_accuracies: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct GridOutput {
    command: &'static str,
    seed: u64,
    split_seed: u64,
    config_hash: String,
    n_train: usize,
    cv_folds: usize,
    cells: Vec<GridRow>,
}

fn cmd_gridsearch(a: GridArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_run_config(a.config.as_deref(), a.seed)?;
    let spec: GridSpec = load_json(&a.grid)?;
    let cells = spec.cells(&cfg)?;
    let archive = required(a.archive, &cfg.paths.archive, "archive")?;
    let trials = read_trials(&archive)?;
    let sides = split_sides(&trials, cfg.split_ratio, cfg.effective_split_seed())?;
    eprintln!("gridsearch: {} cells on {} training trials", cells.len(), sides.train.len());

    let results: Vec<(GridCell, Result<CvResult>)> = cells
        .par_iter()
        .map(|cell| {
            let cell_cfg = cell.apply(&cfg);
            let r = cell_cfg
                .validate()
                .and_then(|_| cross_validate(&sides.train, &cell_cfg.pipeline(), cfg.cv_folds, cfg.seed));
            (*cell, r)
        })
        .collect();
    let mut rows: Vec<GridRow> = results
        .into_iter()
        .map(|(cell, r)| match r {
            Ok(cv) => GridRow {
                rank: 0,
                cell,
                mean_accuracy: Some(cv.mean_accuracy),
                fold_accuracies: cv.fold_accuracies,
                error: None,
            },
            Err(e) => GridRow {
                rank: 0,
                cell,
                mean_accuracy: None,
                fold_accuracies: Vec::new(),
                error: Some(e.to_string()),
            },
        })
        .collect();
    // stable: equal scores keep grid order; failed cells sink to the bottom
    rows.sort_by(|x, y| {
        let key = |r: &GridRow| r.mean_accuracy.unwrap_or(f64::NEG_INFINITY);
        key(y).total_cmp(&key(x))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }

    let text = match a.format {
        Format::Json => to_json(&GridOutput {
            command: "gridsearch",
            seed: cfg.seed,
            split_seed: cfg.effective_split_seed(),
            config_hash: cfg.hash(),
            n_train: sides.train.len(),
            cv_folds: cfg.cv_folds,
            cells: rows,
        }),
        Format::Csv => {
            let mut s = String::from("rank,w_cov,w_rbf,w1,w2,k,mean_accuracy\n");
            for r in &rows {
                let acc = r.mean_accuracy.map_or(String::new(), |v| v.to_string());
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.rank, r.cell.w_cov, r.cell.w_rbf, r.cell.w1, r.cell.w2, r.cell.k, acc
                ));
            }
            s
        }
    };
    emit(&text, a.out.as_deref(), stdout)
}
