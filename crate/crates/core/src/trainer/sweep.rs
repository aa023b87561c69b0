//! Grids of training runs reduced to one row per (cell, seed).
//!
//! Cells are enumerated noise ratio first, then loss mode in grid order; a
//! DLD mode expands into `k_fraction x el_offset` cells (offsets fastest).
//! EL offsets are relative to a reference endpoint: either a fixed epoch, or
//! the endpoint auto-detected on a baseline run with the same ratio and seed.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::data::{generate_dataset, DatasetSpec};
use super::train::{train, ElSource, LossMode, TrainConfig};
use super::TrainerError;
use crate::dld::DldConfig;
use crate::dynamics::ElParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElBase {
    Fixed(u32),
    Auto(ElParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellMode {
    Baseline,
    LabelSmoothing { epsilon: f64 },
    Dld { k_fraction: f64, el_offset: i32 },
}

/// Loss modes a grid can list; `Dld` expands over `k_fractions x el_offsets`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridMode {
    Baseline,
    LabelSmoothing { epsilon: f64 },
    Dld,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    /// `noise_ratio` and `seed` are overridden per cell.
    pub dataset: DatasetSpec,
    /// `loss_mode`, `el_source` and `seed` are overridden per cell.
    pub train: TrainConfig,
    /// Schedule and selection scope for DLD cells.
    pub dld: DldConfig,
    pub el_base: ElBase,
    pub noise_ratios: Vec<f64>,
    pub modes: Vec<GridMode>,
    pub k_fractions: Vec<f64>,
    pub el_offsets: Vec<i32>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.noise_ratios.is_empty() || self.modes.is_empty() || self.seeds.is_empty() {
            return Err(TrainerError::InvalidParams("grid needs at least one noise ratio, loss mode and seed"));
        }
        if self.modes.contains(&GridMode::Dld) && (self.k_fractions.is_empty() || self.el_offsets.is_empty()) {
            return Err(TrainerError::InvalidParams("a DLD grid needs at least one k_fraction and one el_offset"));
        }
        Ok(())
    }

    fn needs_reference(&self) -> bool {
        self.modes.contains(&GridMode::Dld)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpec {
    pub index: usize,
    pub noise_ratio: f64,
    pub mode: CellMode,
}

/// Summary of one run, or a seed mean of several.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub final_clean_acc: f64,
    pub best_clean_acc: f64,
    pub best_epoch: f64,
    pub final_acc: f64,
    pub final_corrupted_fit: f64,
    /// Endpoint used by the run, if any.
    pub el: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: CellSpec,
    /// `None` marks the seed-mean row.
    pub seed: Option<u64>,
    pub result: Result<CellResult, String>,
    /// Runs that contributed (1 for a seed row).
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

pub fn cells(grid: &SweepGrid) -> Vec<CellSpec> {
    let mut out = Vec::new();
    for &noise_ratio in &grid.noise_ratios {
        for mode in &grid.modes {
            let mut push = |mode| out.push(CellSpec { index: out.len(), noise_ratio, mode });
            match *mode {
                GridMode::Baseline => push(CellMode::Baseline),
                GridMode::LabelSmoothing { epsilon } => push(CellMode::LabelSmoothing { epsilon }),
                GridMode::Dld => {
                    for &k_fraction in &grid.k_fractions {
                        for &el_offset in &grid.el_offsets {
                            push(CellMode::Dld { k_fraction, el_offset });
                        }
                    }
                }
            }
        }
    }
    out
}

fn dataset_for(grid: &SweepGrid, noise_ratio: f64, seed: u64) -> DatasetSpec {
    DatasetSpec { noise_ratio, seed, ..grid.dataset }
}

fn auto_params(grid: &SweepGrid) -> ElParams {
    match grid.el_base {
        ElBase::Auto(p) => p,
        ElBase::Fixed(_) => ElParams::default(),
    }
}

/// The endpoint DLD offsets are measured from, for one noise ratio and seed.
pub fn el_reference(grid: &SweepGrid, noise_ratio: f64, seed: u64) -> Result<u32, TrainerError> {
    match grid.el_base {
        ElBase::Fixed(e) => Ok(e),
        ElBase::Auto(params) => {
            let ds = generate_dataset(&dataset_for(grid, noise_ratio, seed))?;
            let cfg = TrainConfig { loss_mode: LossMode::Baseline, el_source: ElSource::Auto(params), seed, ..grid.train };
            train(&ds, &cfg)?.el.ok_or(TrainerError::ElNotDetected)
        }
    }
}

/// Trains one cell for one seed. DLD cells need the reference endpoint from
/// [`el_reference`].
pub fn run_cell(grid: &SweepGrid, cell: &CellSpec, seed: u64, reference: Option<u32>) -> Result<CellResult, TrainerError> {
    let (loss_mode, el_source) = match cell.mode {
        CellMode::Baseline => (LossMode::Baseline, ElSource::Auto(auto_params(grid))),
        CellMode::LabelSmoothing { epsilon } => (LossMode::LabelSmoothing { epsilon }, ElSource::Auto(auto_params(grid))),
        CellMode::Dld { k_fraction, el_offset } => {
            let base = reference.ok_or(TrainerError::ElNotDetected)?;
            let el = i64::from(base) + i64::from(el_offset);
            if el < 1 {
                return Err(TrainerError::InvalidParams("EL plus offset falls before epoch 1"));
            }
            (LossMode::Dld(DldConfig { k_fraction, ..grid.dld }), ElSource::Fixed(el as u32))
        }
    };
    let ds = generate_dataset(&dataset_for(grid, cell.noise_ratio, seed))?;
    let log = train(&ds, &TrainConfig { loss_mode, el_source, seed, ..grid.train })?;
    let last = log.last().expect("at least one epoch");
    let best = log.best_clean().expect("at least one epoch");
    Ok(CellResult {
        final_clean_acc: last.clean_acc,
        best_clean_acc: best.clean_acc,
        best_epoch: f64::from(best.epoch),
        final_acc: last.acc,
        final_corrupted_fit: last.corrupted_fit,
        el: log.el.map(f64::from),
    })
}

fn mean(results: &[CellResult]) -> CellResult {
    let n = results.len() as f64;
    let avg = |f: fn(&CellResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    let el = if results.iter().all(|r| r.el.is_some()) {
        Some(results.iter().map(|r| r.el.unwrap_or(0.0)).sum::<f64>() / n)
    } else {
        None
    };
    CellResult {
        final_clean_acc: avg(|r| r.final_clean_acc),
        best_clean_acc: avg(|r| r.best_clean_acc),
        best_epoch: avg(|r| r.best_epoch),
        final_acc: avg(|r| r.final_acc),
        final_corrupted_fit: avg(|r| r.final_corrupted_fit),
        el,
    }
}

/// Orders completed runs canonically (cell, then seed in grid order) and
/// appends a seed-mean row per cell when the grid has more than one seed.
/// The mean covers the seeds that succeeded.
pub fn assemble(grid: &SweepGrid, mut results: Vec<(usize, u64, Result<CellResult, TrainerError>)>) -> SweepTable {
    let seed_pos = |s: u64| grid.seeds.iter().position(|&x| x == s).unwrap_or(usize::MAX);
    results.sort_by_key(|(c, s, _)| (*c, seed_pos(*s)));
    let specs = cells(grid);
    let mut rows = Vec::new();
    for spec in &specs {
        let mine: Vec<&(usize, u64, Result<CellResult, TrainerError>)> = results.iter().filter(|r| r.0 == spec.index).collect();
        for (_, seed, res) in &mine {
            rows.push(SweepRow { cell: *spec, seed: Some(*seed), result: res.clone().map_err(|e| e.to_string()), runs: 1 });
        }
        if grid.seeds.len() > 1 {
            let ok: Vec<CellResult> = mine.iter().filter_map(|r| r.2.clone().ok()).collect();
            let result = if ok.is_empty() { Err(String::from("no seed completed")) } else { Ok(mean(&ok)) };
            rows.push(SweepRow { cell: *spec, seed: None, result, runs: ok.len() });
        }
    }
    SweepTable { rows }
}

/// Runs every cell for every seed, sequentially. Failed runs become error rows.
pub fn sweep(grid: &SweepGrid) -> Result<SweepTable, TrainerError> {
    grid.validate()?;
    let mut references = Vec::new();
    if grid.needs_reference() {
        for &rho in &grid.noise_ratios {
            for &seed in &grid.seeds {
                references.push(((rho.to_bits(), seed), el_reference(grid, rho, seed)));
            }
        }
    }
    let lookup = |rho: f64, seed: u64| references.iter().find(|(k, _)| *k == (rho.to_bits(), seed)).map(|(_, r)| r.clone());

    let mut results = Vec::new();
    for cell in cells(grid) {
        for &seed in &grid.seeds {
            let res = match (cell.mode, lookup(cell.noise_ratio, seed)) {
                (CellMode::Dld { .. }, Some(Err(e))) => Err(e),
                (_, r) => run_cell(grid, &cell, seed, r.and_then(Result::ok)),
            };
            results.push((cell.index, seed, res));
        }
    }
    Ok(assemble(grid, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::OptimizerSpec;
    use alloc::vec;

    fn small_grid() -> SweepGrid {
        SweepGrid {
            dataset: DatasetSpec { samples: 200, ..DatasetSpec::default() },
            train: TrainConfig {
                optimizer: OptimizerSpec { epochs: 8, ..OptimizerSpec::default() },
                model: crate::trainer::ModelSpec { hidden: 16, ..Default::default() },
                ..TrainConfig::default()
            },
            dld: DldConfig::default(),
            el_base: ElBase::Fixed(4),
            noise_ratios: vec![0.2, 0.4],
            modes: vec![GridMode::Baseline, GridMode::Dld],
            k_fractions: vec![0.03, 0.05],
            el_offsets: vec![-4, 0, 4],
            seeds: vec![3, 1],
        }
    }

    #[test]
    fn cell_order_is_canonical() {
        let c = cells(&small_grid());
        assert_eq!(c.len(), 2 * (1 + 2 * 3));
        assert_eq!(c[0].mode, CellMode::Baseline);
        assert_eq!(c[1].mode, CellMode::Dld { k_fraction: 0.03, el_offset: -4 });
        assert_eq!(c[3].mode, CellMode::Dld { k_fraction: 0.03, el_offset: 4 });
        assert_eq!(c[4].mode, CellMode::Dld { k_fraction: 0.05, el_offset: -4 });
        assert_eq!(c[7].noise_ratio, 0.4);
        assert!(c.iter().enumerate().all(|(i, s)| s.index == i));
    }

    #[test]
    fn rows_and_errors() {
        let grid = small_grid();
        let t = sweep(&grid).unwrap();
        assert_eq!(t.rows.len(), 14 * 3);
        // offset -4 from a fixed EL of 4 is epoch 0
        let bad = &t.rows[3];
        assert_eq!(bad.cell.mode, CellMode::Dld { k_fraction: 0.03, el_offset: -4 });
        assert!(bad.result.is_err());
        assert_eq!(t.rows[5].seed, None);
        assert!(t.rows[5].result.is_err());
        assert_eq!(t.rows[0].seed, Some(3));
        assert_eq!(t.rows[1].seed, Some(1));
        assert!(t.rows[2].result.is_ok() && t.rows[2].runs == 2);
    }

    #[test]
    fn assemble_ignores_completion_order() {
        let grid = SweepGrid { noise_ratios: vec![0.2], k_fractions: vec![0.05], el_offsets: vec![0], ..small_grid() };
        let r = |v: f64| Ok(CellResult { final_clean_acc: v, best_clean_acc: v, best_epoch: 1.0, final_acc: v, final_corrupted_fit: 0.0, el: None });
        let forward = vec![(0, 3, r(0.1)), (0, 1, r(0.2)), (1, 3, r(0.3)), (1, 1, r(0.4))];
        let mut backward = forward.clone();
        backward.reverse();
        assert_eq!(assemble(&grid, forward), assemble(&grid, backward));
    }

    #[test]
    fn empty_grid_rejected() {
        let grid = SweepGrid { seeds: vec![], ..small_grid() };
        assert!(sweep(&grid).is_err());
    }
}
