//! Subcommands. Each returns its one-line stdout summary; diagnostics go to
//! stderr.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use dld_core::annotations::{inject_noise, AnnotationError};
use dld_core::dynamics::{detect_el, DynamicsError, ElParams, DEFAULT_DEGREE, DEFAULT_ETA};
use dld_core::metrics::{evaluate, ApMode, EvalConfig, MetricsError};
use dld_core::trainer::{assemble, cells, el_reference, generate_dataset, run_cell, train, CellMode, GridMode, LossMode, TrainerError};

use crate::config::{self, KvConfig};
use crate::error::CliError;
use crate::formats;
use crate::svg;

#[derive(Debug, Parser)]
#[command(name = "dld", version, about = "Label-noise injection, evaluation, early-learning detection and training experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corrupt category labels of a DOTA label directory.
    InjectNoise(InjectNoiseArgs),
    /// mAP, per-class AP and ACC of predictions against ground truth.
    Eval(EvalArgs),
    /// Early-learning endpoint of a per-epoch metric log.
    DetectEl(DetectElArgs),
    /// Train the toy model from an experiment config.
    Train(TrainArgs),
    /// Run a grid of training experiments.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct InjectNoiseArgs {
    pub in_dir: PathBuf,
    pub out_dir: PathBuf,
    #[arg(long)]
    pub ratio: f64,
    #[arg(long)]
    pub seed: u64,
    /// Category list, one per line; defaults to the categories present.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ApModeArg {
    Voc07,
    AllPoint,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Noise record; adds mAP on the correct and corrupted subsets.
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    #[arg(long, value_enum, default_value_t = ApModeArg::Voc07)]
    pub ap_mode: ApModeArg,
    /// Directory for report.csv and report.txt.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Percent,
    Fraction,
}

#[derive(Debug, Args)]
pub struct DetectElArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value = "acc")]
    pub metric: String,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long, default_value_t = DEFAULT_DEGREE)]
    pub degree: usize,
    #[arg(long)]
    pub min_epochs: Option<usize>,
    /// Percent values are divided by 100 before fitting.
    #[arg(long, value_enum, default_value_t = ScaleArg::Fraction)]
    pub scale: ScaleArg,
    /// Trace CSV path; defaults to `<log stem>_el_trace.csv` beside the log.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub config: PathBuf,
    /// Also write an SVG plot of the curves.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub config: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
}

pub fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::InjectNoise(a) => cmd_inject_noise(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::DetectEl(a) => cmd_detect_el(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

pub fn cmd_inject_noise(a: &InjectNoiseArgs) -> Result<String, CliError> {
    let dataset = formats::read_label_dir(&a.in_dir)?;
    if same_dir(&a.in_dir, &a.out_dir) {
        return Err(CliError::Usage("output directory must differ from the input directory".into()));
    }
    let vocab = match &a.vocab {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read vocabulary {}: {e}", p.display())))?;
            Some(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect::<Vec<_>>())
        }
        None => None,
    };
    let (noisy, record) = inject_noise(&dataset, a.ratio, a.seed, vocab.as_deref()).map_err(|e| match e {
        AnnotationError::VocabularyTooSmall { .. } => CliError::Vocabulary(e.to_string()),
        other => CliError::Usage(other.to_string()),
    })?;
    formats::write_label_dir(&a.out_dir, &noisy)?;
    let record_path = a.out_dir.join(formats::NOISE_RECORD_FILE);
    formats::write(&record_path, &formats::format_noise_record(&record))?;
    let n: usize = dataset.iter().map(|d| d.instances.len()).sum();
    Ok(format!("instances={n} changed={} record={}", record.len(), record_path.display()))
}

fn metrics_error(e: MetricsError) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<String, CliError> {
    let gts = formats::read_label_dir(&a.gt)?;
    let preds = formats::read_detection_dir(&a.pred)?;
    let gt_ids: BTreeSet<&str> = gts.iter().map(|g| g.image_id.as_str()).collect();
    let pred_ids: BTreeSet<&str> = preds.iter().map(|p| p.image_id.as_str()).collect();
    if gt_ids != pred_ids {
        return Err(CliError::IdMismatch {
            missing_pred: gt_ids.difference(&pred_ids).map(|s| s.to_string()).collect(),
            missing_gt: pred_ids.difference(&gt_ids).map(|s| s.to_string()).collect(),
        });
    }
    let record = a.record.as_deref().map(formats::read_noise_record).transpose()?;
    let cfg = EvalConfig {
        iou_threshold: a.iou,
        ap_mode: match a.ap_mode {
            ApModeArg::Voc07 => ApMode::Voc07ElevenPoint,
            ApModeArg::AllPoint => ApMode::AllPoint,
        },
        ..EvalConfig::default()
    };
    cfg.validate().map_err(metrics_error)?;
    let report = evaluate(&preds, &gts, record.as_ref(), &cfg).map_err(metrics_error)?;

    fs::create_dir_all(&a.out).map_err(CliError::io(&a.out))?;
    let mode = match a.ap_mode {
        ApModeArg::Voc07 => "voc07",
        ApModeArg::AllPoint => "all_point",
    };
    let settings = [("ap_mode", mode.to_string()), ("iou", a.iou.to_string()), ("images", gts.len().to_string())];
    formats::write(&a.out.join("report.csv"), &formats::report_csv(&report))?;
    formats::write(&a.out.join("report.txt"), &formats::report_text(&report, &settings))?;

    let mut line = format!("mAP={} ACC={}", report.map(), report.acc);
    for (key, s) in [("mAPC", &report.map_correct), ("mAPI", &report.map_incorrect)] {
        if let Some(s) = s {
            line.push_str(&format!(" {key}={}", s.value));
            if s.empty {
                eprintln!("warning: {key} subset has no ground truth; reported as 0");
            }
        }
    }
    Ok(line)
}

pub fn cmd_detect_el(a: &DetectElArgs) -> Result<String, CliError> {
    let raw = formats::read_series(&a.log, &a.metric)?;
    let series = match a.scale {
        ScaleArg::Percent => raw.scaled(0.01),
        ScaleArg::Fraction => {
            if raw.points().iter().any(|&(_, v)| v > 1.0) {
                eprintln!("warning: values above 1 with --scale fraction; eta is defined for fractions in [0, 1]");
            }
            raw
        }
    };
    let params = ElParams { eta: a.eta, degree: a.degree, min_epochs: a.min_epochs };
    let report = detect_el(&series, &params).map_err(|e| match e {
        DynamicsError::InsufficientPoints { .. } => CliError::InsufficientPoints(e.to_string()),
        DynamicsError::InvalidEta(_) => CliError::Usage(e.to_string()),
        other => CliError::Failed(other.to_string()),
    })?;
    if report.immediate_trigger {
        eprintln!("warning: EL fired at the first admissible epoch; the fitted curve has almost no curvature");
    }
    let trace = a.trace.clone().unwrap_or_else(|| {
        let stem = a.log.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        a.log.with_file_name(format!("{stem}_el_trace.csv"))
    });
    formats::write(&trace, &formats::trace_csv(&report))?;
    formats::write(&trace.with_extension("txt"), &formats::el_report_text(&report))?;
    Ok(match report.el {
        Some(e) => format!("EL={e}"),
        None => "EL=none".into(),
    })
}

pub fn cmd_train(a: &TrainArgs) -> Result<String, CliError> {
    let cfg = KvConfig::load(&a.config, &config::train_keys())?;
    let setup = config::train_setup(&cfg)?;
    let ds = generate_dataset(&setup.dataset).map_err(|e| CliError::Usage(e.to_string()))?;
    let log = match train(&ds, &setup.train) {
        Ok(log) => log,
        Err(TrainerError::Divergence { epoch, batch, partial }) => {
            formats::write(&setup.output, &formats::train_log_csv(&partial))?;
            return Err(CliError::Divergence(format!(
                "non-finite loss at epoch {epoch}, batch {batch}; partial log in {}",
                setup.output.display()
            )));
        }
        Err(e @ (TrainerError::InvalidParams(_) | TrainerError::Loss(_))) => return Err(CliError::Usage(e.to_string())),
        Err(e) => return Err(CliError::Failed(e.to_string())),
    };
    formats::write(&setup.output, &formats::train_log_csv(&log))?;
    if let Some(p) = &a.plot {
        formats::write(p, &svg::curves(&log))?;
    }
    if log.el_missing && matches!(setup.train.loss_mode, LossMode::Dld(_)) {
        eprintln!("warning: early-learning endpoint never detected; DLD stayed inactive");
    }
    let last = log.last().expect("at least one epoch");
    Ok(format!(
        "log={} epochs={} final_acc={} final_clean_acc={} el={}",
        setup.output.display(),
        log.rows.len(),
        last.acc,
        last.clean_acc,
        log.el.map_or("none".into(), |e| e.to_string())
    ))
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<String, CliError> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let cfg = KvConfig::load(&a.config, &config::sweep_keys())?;
    let setup = config::sweep_setup(&cfg, a.seeds)?;
    let grid = &setup.grid;

    let pairs: Vec<(f64, u64)> = if grid.modes.contains(&GridMode::Dld) {
        grid.noise_ratios.iter().flat_map(|&r| grid.seeds.iter().map(move |&s| (r, s))).collect()
    } else {
        Vec::new()
    };
    let references: Vec<((u64, u64), Result<u32, TrainerError>)> =
        pairs.par_iter().map(|&(r, s)| ((r.to_bits(), s), el_reference(grid, r, s))).collect();
    let lookup = |r: f64, s: u64| references.iter().find(|(k, _)| *k == (r.to_bits(), s)).map(|(_, v)| v.clone());

    let jobs: Vec<_> = cells(grid).into_iter().flat_map(|c| grid.seeds.iter().map(move |&s| (c, s))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|(cell, seed)| {
            let res = match (cell.mode, lookup(cell.noise_ratio, *seed)) {
                (CellMode::Dld { .. }, Some(Err(e))) => Err(e),
                (_, r) => run_cell(grid, cell, *seed, r.and_then(Result::ok)),
            };
            (cell.index, *seed, res)
        })
        .collect();
    let table = assemble(grid, results);
    let errors = table.rows.iter().filter(|r| r.seed.is_some() && r.result.is_err()).count();
    for row in &table.rows {
        if let (Some(seed), Err(e)) = (row.seed, &row.result) {
            eprintln!("warning: cell {} seed {seed}: {e}", row.cell.index);
        }
    }
    formats::write(&setup.output, &formats::sweep_csv(&table))?;
    Ok(format!("sweep={} rows={} errors={errors}", setup.output.display(), table.rows.len()))
}
