use std::ops::{Range, RangeInclusive};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_armax_segments, partition_data, DriveLog, Orders};
use crate::models::{ArmaxModel, BankEntry, FitReport, ModelBank, RegionGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub order_grid: Vec<Orders>,
    /// Regression rows a cell needs before it gets its own model.
    pub min_samples: usize,
    /// Lowest acceptable free-run NRMSE.
    pub nrmse_floor: f64,
    /// Runs shorter than this many samples are discarded.
    pub min_run: usize,
    /// Candidates within this NRMSE of the best compete on parameter count.
    pub parsimony_tol: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            order_grid: order_grid(1..=3, 1..=3, 0..=1, 1..=5),
            min_samples: 300,
            nrmse_floor: 0.5,
            min_run: 10,
            parsimony_tol: 1e-3,
        }
    }
}

/// Cartesian product of order ranges.
pub fn order_grid(
    na: RangeInclusive<usize>,
    nb: RangeInclusive<usize>,
    nc: RangeInclusive<usize>,
    nk: RangeInclusive<usize>,
) -> Vec<Orders> {
    let mut out = Vec::new();
    for a in na {
        for b in nb.clone() {
            for c in nc.clone() {
                for k in nk.clone() {
                    out.push((a, b, c, k));
                }
            }
        }
    }
    out
}

fn passes(rep: &FitReport, floor: f64) -> bool {
    !rep.degenerate && rep.minimum_phase && rep.stable && rep.nrmse.is_some_and(|v| v >= floor)
}

/// Brute-force order search over the runs; `None` if no candidate passes.
fn best_model(log: &DriveLog, segments: &[Range<usize>], cfg: &SelectionConfig) -> Option<(ArmaxModel, FitReport)> {
    let mut fits: Vec<(ArmaxModel, FitReport)> = cfg
        .order_grid
        .par_iter()
        .filter_map(|&o| fit_armax_segments(log, segments, o).ok())
        .filter(|(_, rep)| passes(rep, cfg.nrmse_floor))
        .collect();
    let best = fits
        .iter()
        .map(|(_, r)| r.nrmse.unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    fits.retain(|(_, r)| r.nrmse.unwrap() >= best - cfg.parsimony_tol);
    // Fewest parameters, then best fit, then grid order for determinism.
    fits.sort_by(|(ma, ra), (mb, rb)| {
        ma.parameter_count()
            .cmp(&mb.parameter_count())
            .then(rb.nrmse.unwrap().total_cmp(&ra.nrmse.unwrap()))
            .then(ra.orders.cmp(&rb.orders))
    });
    fits.into_iter().next()
}

/// Identifies one model per grid cell plus a backup fit on the full log.
/// Cells with too little data or without an acceptable candidate use the
/// backup.
pub fn select_models(log: &DriveLog, grid: &RegionGrid, cfg: &SelectionConfig) -> Result<ModelBank> {
    if cfg.order_grid.is_empty() {
        return Err(Error::Config("order grid is empty".into()));
    }
    log.validate()?;
    grid.validate()?;
    let dt = log.dt().ok_or_else(|| Error::Identification("log too short".into()))?;
    let part = partition_data(log, grid, cfg.min_run);
    let per_cell: Vec<Option<(ArmaxModel, FitReport)>> = (0..grid.cell_count())
        .into_par_iter()
        .map(|c| {
            if part.sample_count(c) < cfg.min_samples {
                None
            } else {
                best_model(log, &part.cells[c], cfg).filter(|(_, rep)| rep.sample_count >= cfg.min_samples)
            }
        })
        .collect();
    let (backup_model, backup_rep) = best_model(log, &[0..log.len()], cfg).ok_or_else(|| {
        Error::Identification(format!(
            "dataset unusable: no model fitted on the full log reaches NRMSE {}",
            cfg.nrmse_floor
        ))
    })?;

    let mut models = Vec::new();
    let mut cells = vec![usize::MAX; grid.cell_count()];
    for (c, fit) in per_cell.into_iter().enumerate() {
        if let Some((model, rep)) = fit {
            let (iv, ia) = (c / grid.a_cells(), c % grid.a_cells());
            cells[c] = models.len();
            models.push(BankEntry {
                id: format!("v{iv}a{ia}"),
                model,
                fit: Some(rep),
                region: grid.region(c),
                is_backup: false,
                limits: None,
            });
        }
    }
    let backup = models.len();
    models.push(BankEntry {
        id: "backup".into(),
        model: backup_model,
        fit: Some(backup_rep),
        region: grid.full_region(),
        is_backup: true,
        limits: None,
    });
    for c in cells.iter_mut() {
        if *c == usize::MAX {
            *c = backup;
        }
    }
    let bank = ModelBank {
        dt,
        grid: grid.clone(),
        models,
        cells,
        backup,
    };
    bank.validate()?;
    Ok(bank)
}
