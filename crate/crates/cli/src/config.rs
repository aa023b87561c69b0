//! Flat `key = value` experiment configs.
//!
//! Blank lines and lines starting with `#` are skipped. Keys may appear once.
//! Lists are comma separated. Every key must be known to the command reading
//! the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dld_core::dld::{DldConfig, Schedule, SelectionScope};
use dld_core::dynamics::ElParams;
use dld_core::trainer::{DatasetSpec, ElBase, ElSource, GridMode, LossMode, ModelSpec, OptimizerSpec, SweepGrid, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct KvConfig {
    path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl KvConfig {
    pub fn parse(text: &str, path: &Path, allowed: &[&str]) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::parse(path, i + 1, "expected key=value"));
            };
            let (k, v) = (k.trim(), v.trim());
            if !allowed.contains(&k) {
                return Err(CliError::parse(path, i + 1, format!("unknown key {k:?}")));
            }
            if entries.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
                return Err(CliError::parse(path, i + 1, format!("duplicate key {k:?}")));
            }
        }
        Ok(Self { path: path.to_path_buf(), entries })
    }

    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path, allowed)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn bad(&self, key: &str, msg: &str) -> CliError {
        let line = self.entries.get(key).map_or(0, |(l, _)| *l);
        CliError::parse(&self.path, line, format!("{key}: {msg}"))
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.str(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.bad(key, &format!("cannot parse {v:?}"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError> {
        match self.str(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| self.bad(key, &format!("cannot parse list item {s:?}"))))
                .collect(),
        }
    }

    /// A path value, relative to the config file's directory.
    pub fn path(&self, key: &str, default: &str) -> PathBuf {
        let v = self.str(key).unwrap_or(default);
        let p = Path::new(v);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

const DATA_KEYS: &[&str] = &["classes", "dim", "samples", "separation", "noise_ratio", "seed"];
const MODEL_KEYS: &[&str] = &["hidden", "init_scale_1", "init_scale_2", "learning_rate", "batch_size", "epochs", "standardize"];
const LOSS_KEYS: &[&str] = &["ls_epsilon", "k_fraction", "schedule", "tau", "selection_scope", "el", "eta", "degree", "min_epochs", "output"];

pub fn train_keys() -> Vec<&'static str> {
    [DATA_KEYS, MODEL_KEYS, LOSS_KEYS, &["loss_mode"]].concat()
}

pub fn sweep_keys() -> Vec<&'static str> {
    [DATA_KEYS, MODEL_KEYS, LOSS_KEYS, &["noise_ratios", "modes", "k_fractions", "el_offsets"]].concat()
}

fn dataset(c: &KvConfig) -> Result<DatasetSpec, CliError> {
    let d = DatasetSpec::default();
    Ok(DatasetSpec {
        classes: c.get("classes", d.classes)?,
        dim: c.get("dim", d.dim)?,
        samples: c.get("samples", d.samples)?,
        separation: c.get("separation", d.separation)?,
        noise_ratio: c.get("noise_ratio", d.noise_ratio)?,
        seed: c.get("seed", d.seed)?,
    })
}

fn train_base(c: &KvConfig) -> Result<TrainConfig, CliError> {
    let (m, o) = (ModelSpec::default(), OptimizerSpec::default());
    let el_params = ElParams {
        eta: c.get("eta", ElParams::default().eta)?,
        degree: c.get("degree", ElParams::default().degree)?,
        min_epochs: match c.str("min_epochs") {
            None => None,
            Some(_) => Some(c.get("min_epochs", 0usize)?),
        },
    };
    let el_source = match c.str("el") {
        None | Some("auto") => ElSource::Auto(el_params),
        Some(_) => ElSource::Fixed(c.get("el", 1u32)?),
    };
    Ok(TrainConfig {
        model: ModelSpec {
            hidden: c.get("hidden", m.hidden)?,
            init_scale_1: c.get("init_scale_1", m.init_scale_1)?,
            init_scale_2: c.get("init_scale_2", m.init_scale_2)?,
        },
        optimizer: OptimizerSpec {
            learning_rate: c.get("learning_rate", o.learning_rate)?,
            batch_size: c.get("batch_size", o.batch_size)?,
            epochs: c.get("epochs", o.epochs)?,
        },
        loss_mode: LossMode::Baseline,
        el_source,
        standardize_inputs: c.get("standardize", true)?,
        seed: c.get("seed", 0u64)?,
    })
}

fn dld(c: &KvConfig) -> Result<DldConfig, CliError> {
    let schedule = match c.str("schedule").unwrap_or("exp_decay") {
        "exp_decay" => Schedule::ExpDecay { tau: c.get("tau", 10.0)? },
        "paper_literal" => Schedule::PaperLiteral,
        _ => return Err(c.bad("schedule", "expected exp_decay or paper_literal")),
    };
    let selection_scope = match c.str("selection_scope").unwrap_or("per_batch") {
        "per_batch" => SelectionScope::PerBatch,
        "per_epoch" => SelectionScope::PerEpoch,
        _ => return Err(c.bad("selection_scope", "expected per_batch or per_epoch")),
    };
    Ok(DldConfig { schedule, selection_scope, ..DldConfig::new(c.get("k_fraction", 0.05)?, 1) })
}

pub struct TrainSetup {
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub output: PathBuf,
}

pub fn train_setup(c: &KvConfig) -> Result<TrainSetup, CliError> {
    let mut train = train_base(c)?;
    train.loss_mode = match c.str("loss_mode").unwrap_or("baseline") {
        "baseline" => LossMode::Baseline,
        "ls" => LossMode::LabelSmoothing { epsilon: c.get("ls_epsilon", 0.1)? },
        "dld" => LossMode::Dld(dld(c)?),
        _ => return Err(c.bad("loss_mode", "expected baseline, ls or dld")),
    };
    Ok(TrainSetup { dataset: dataset(c)?, train, output: c.path("output", "train_log.csv") })
}

pub struct SweepSetup {
    pub grid: SweepGrid,
    pub output: PathBuf,
}

/// `seed` is the first of `seeds` consecutive seeds.
pub fn sweep_setup(c: &KvConfig, seeds: u64) -> Result<SweepSetup, CliError> {
    let train = train_base(c)?;
    let el_base = match train.el_source {
        ElSource::Auto(p) => ElBase::Auto(p),
        ElSource::Fixed(e) => ElBase::Fixed(e),
    };
    let modes = c
        .list::<String>("modes", vec!["baseline".into(), "dld".into()])?
        .iter()
        .map(|m| match m.as_str() {
            "baseline" => Ok(GridMode::Baseline),
            "ls" => Ok(GridMode::LabelSmoothing { epsilon: c.get("ls_epsilon", 0.1)? }),
            "dld" => Ok(GridMode::Dld),
            _ => Err(c.bad("modes", "expected baseline, ls or dld")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let first = c.get("seed", 0u64)?;
    let ds = dataset(c)?;
    let grid = SweepGrid {
        dataset: ds,
        train,
        dld: dld(c)?,
        el_base,
        noise_ratios: c.list("noise_ratios", vec![ds.noise_ratio])?,
        modes,
        k_fractions: c.list("k_fractions", vec![c.get("k_fraction", 0.05)?])?,
        el_offsets: c.list("el_offsets", vec![0])?,
        seeds: (first..first + seeds).collect(),
    };
    grid.validate().map_err(|e| CliError::Usage(format!("{}: {e}", c.path.display())))?;
    Ok(SweepSetup { grid, output: c.path("output", "sweep.csv") })
}
