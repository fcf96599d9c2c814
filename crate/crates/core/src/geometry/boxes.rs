use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{HPolytope, SupportFunction};
use crate::{Error, Result};

/// Axis-aligned box `{x : lo <= x <= hi}`. Degenerate intervals are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl IntervalBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| l > h || !l.is_finite() || !h.is_finite())
        {
            return Err(Error::EmptySet("box with lo > hi or non-finite bound".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(radius: &[f64]) -> Self {
        Self {
            lo: radius.iter().map(|r| -r.abs()).collect(),
            hi: radius.iter().map(|r| r.abs()).collect(),
        }
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(self.lo.len(), self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)))
    }

    pub fn half_widths(&self) -> DVector<f64> {
        DVector::from_iterator(self.lo.len(), self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (h - l)))
    }

    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let n = self.lo.len();
        (0..1usize << n)
            .map(|mask| {
                DVector::from_iterator(
                    n,
                    (0..n).map(|j| if mask >> j & 1 == 1 { self.hi[j] } else { self.lo[j] }),
                )
            })
            .collect()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.lo.len()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    pub fn to_polytope(&self) -> HPolytope {
        HPolytope::from_box(&self.lo, &self.hi)
    }
}

impl SupportFunction for IntervalBox {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        if dir.len() != self.lo.len() {
            return Err(Error::Dimension(format!(
                "direction has length {}, box dimension {}",
                dir.len(),
                self.lo.len()
            )));
        }
        Ok(dir
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(d, (l, h))| if *d >= 0.0 { d * h } else { d * l })
            .sum())
    }
}
