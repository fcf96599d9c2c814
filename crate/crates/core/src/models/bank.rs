use serde::{Deserialize, Serialize};

use super::{ArmaxModel, Interval, PlantLimits, Region};
use crate::{Error, Result};

/// Velocity/acceleration grid; cell membership uses half-open intervals
/// `[edge_k, edge_{k+1})`, values outside clamp to the boundary cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub v_edges: Vec<f64>,
    pub a_edges: Vec<f64>,
}

fn bin(edges: &[f64], x: f64) -> usize {
    let cells = edges.len() - 1;
    // partition_point counts edges <= x, so x on an edge lands in the upper cell.
    let k = edges.partition_point(|e| *e <= x);
    k.saturating_sub(1).min(cells - 1)
}

impl RegionGrid {
    pub fn new(v_edges: Vec<f64>, a_edges: Vec<f64>) -> Result<Self> {
        let g = Self { v_edges, a_edges };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, e) in [("v_edges", &self.v_edges), ("a_edges", &self.a_edges)] {
            if e.len() < 2 {
                return Err(Error::Config(format!("{name} needs at least two breakpoints")));
            }
            if e.windows(2).any(|w| !(w[0] < w[1])) || e.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and strictly ascending")));
            }
        }
        Ok(())
    }

    pub fn v_cells(&self) -> usize {
        self.v_edges.len() - 1
    }

    pub fn a_cells(&self) -> usize {
        self.a_edges.len() - 1
    }

    pub fn cell_count(&self) -> usize {
        self.v_cells() * self.a_cells()
    }

    /// `(velocity index, acceleration index)` of the cell containing `(v, a)`.
    pub fn indices(&self, v: f64, a: f64) -> (usize, usize) {
        (bin(&self.v_edges, v), bin(&self.a_edges, a))
    }

    /// Flat cell index `iv * a_cells + ia`.
    pub fn cell(&self, v: f64, a: f64) -> usize {
        let (iv, ia) = self.indices(v, a);
        iv * self.a_cells() + ia
    }

    pub fn region(&self, cell: usize) -> Region {
        let iv = cell / self.a_cells();
        let ia = cell % self.a_cells();
        Region {
            v: Interval {
                lo: self.v_edges[iv],
                hi: self.v_edges[iv + 1],
            },
            a: Interval {
                lo: self.a_edges[ia],
                hi: self.a_edges[ia + 1],
            },
        }
    }

    pub fn full_region(&self) -> Region {
        Region {
            v: Interval {
                lo: self.v_edges[0],
                hi: *self.v_edges.last().unwrap(),
            },
            a: Interval {
                lo: self.a_edges[0],
                hi: *self.a_edges.last().unwrap(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub orders: (usize, usize, usize, usize),
    /// Free-run NRMSE; absent when the data carry no signal.
    pub nrmse: Option<f64>,
    pub minimum_phase: bool,
    pub stable: bool,
    pub sample_count: usize,
    #[serde(default)]
    pub degenerate: bool,
    /// The noise-model iteration did not converge and the ARX estimate was kept.
    #[serde(default)]
    pub fallback_arx: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub id: String,
    pub model: ArmaxModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
    pub region: Region,
    pub is_backup: bool,
    /// Model-specific limits replacing the bank-wide ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<PlantLimits>,
}

/// Region-indexed set of models with a designated backup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBank {
    pub dt: f64,
    pub grid: RegionGrid,
    pub models: Vec<BankEntry>,
    /// Model index per flat grid cell.
    pub cells: Vec<usize>,
    pub backup: usize,
}

impl ModelBank {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.cells.len() != self.grid.cell_count() {
            return Err(Error::Config(format!(
                "bank maps {} cells, grid has {}",
                self.cells.len(),
                self.grid.cell_count()
            )));
        }
        if self.backup >= self.models.len() || self.cells.iter().any(|&m| m >= self.models.len()) {
            return Err(Error::Config("bank references a missing model".into()));
        }
        for e in &self.models {
            e.model.validate()?;
            if (e.model.dt - self.dt).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "model {} has dt {} but the bank uses {}",
                    e.id, e.model.dt, self.dt
                )));
            }
        }
        Ok(())
    }

    pub fn model_for(&self, v: f64, a: f64) -> usize {
        self.cells[self.grid.cell(v, a)]
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bank: ModelBank = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_open_cells() {
        let g = RegionGrid::new(vec![0.0, 8.0, 16.0], vec![-1.0, 1.0]).unwrap();
        assert_eq!(g.indices(10.0, 0.0).0, 1);
        assert_eq!(g.indices(8.0, 0.0).0, 1);
        assert_eq!(g.indices(7.999, 0.0).0, 0);
        assert_eq!(g.indices(-3.0, 0.0).0, 0);
        assert_eq!(g.indices(99.0, 5.0), (1, 0));
    }

    #[test]
    fn rejects_unsorted_edges() {
        assert!(RegionGrid::new(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn region_round_trip() {
        let g = RegionGrid::new(vec![0.0, 5.0, 40.0], vec![-6.0, -0.4, 0.4, 6.0]).unwrap();
        for c in 0..g.cell_count() {
            let r = g.region(c);
            assert_eq!(g.cell(0.5 * (r.v.lo + r.v.hi), 0.5 * (r.a.lo + r.a.hi)), c);
        }
    }
}
