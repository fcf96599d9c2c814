//! Region-partitioned ARMAX identification from drive logs, and a synthetic
//! drive generator standing in for recorded vehicle data.

mod fit;
mod select;
mod synthetic;

pub use crate::models::{FitReport, ModelBank, RegionGrid};
pub use fit::{fit_armax, fit_armax_segments, free_run_nrmse, is_minimum_phase, nrmse, Orders};
pub use select::{order_grid, select_models, SelectionConfig};
pub use synthetic::{generate_synthetic_drive, DriveProfile, Phase, PhaseEnd};

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniformly sampled record of commanded and measured acceleration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriveLog {
    pub t: Vec<f64>,
    pub a_set: Vec<f64>,
    pub a_veh: Vec<f64>,
    pub v_veh: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LogRow {
    t: f64,
    a_set: f64,
    a_veh: f64,
    v_veh: f64,
}

impl DriveLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> Option<f64> {
        (self.t.len() >= 2).then(|| self.t[1] - self.t[0])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if self.a_set.len() != n || self.a_veh.len() != n || self.v_veh.len() != n {
            return Err(Error::Config("drive log columns differ in length".into()));
        }
        if let Some(dt) = self.dt() {
            if !(dt > 0.0) {
                return Err(Error::Config("drive log time must increase".into()));
            }
            for w in self.t.windows(2) {
                if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1.0) {
                    return Err(Error::Config("drive log is not uniformly sampled".into()));
                }
            }
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut log = DriveLog::default();
        for row in rdr.deserialize() {
            let r: LogRow = row?;
            log.t.push(r.t);
            log.a_set.push(r.a_set);
            log.a_veh.push(r.a_veh);
            log.v_veh.push(r.v_veh);
        }
        log.validate()?;
        Ok(log)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for k in 0..self.len() {
            w.serialize(LogRow {
                t: self.t[k],
                a_set: self.a_set[k],
                a_veh: self.a_veh[k],
                v_veh: self.v_veh[k],
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Contiguous per-cell runs of a log.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Retained runs per flat cell index.
    pub cells: Vec<Vec<Range<usize>>>,
    /// Samples dropped because their run was shorter than `min_run`.
    pub discarded: usize,
}

impl Partition {
    pub fn sample_count(&self, cell: usize) -> usize {
        self.cells[cell].iter().map(|r| r.len()).sum()
    }
}

/// Splits the log into runs of samples falling into the same grid cell,
/// classified by measured velocity and acceleration.
pub fn partition_data(log: &DriveLog, grid: &RegionGrid, min_run: usize) -> Partition {
    let mut cells = vec![Vec::new(); grid.cell_count()];
    let mut discarded = 0;
    let mut start = 0;
    while start < log.len() {
        let c = grid.cell(log.v_veh[start], log.a_veh[start]);
        let mut end = start + 1;
        while end < log.len() && grid.cell(log.v_veh[end], log.a_veh[end]) == c {
            end += 1;
        }
        if end - start >= min_run {
            cells[c].push(start..end);
        } else {
            discarded += end - start;
        }
        start = end;
    }
    Partition { cells, discarded }
}
