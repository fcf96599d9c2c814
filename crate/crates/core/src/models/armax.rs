use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::linalg::poly_roots;
use crate::{Error, Result};

/// `A(q) y(t) = B(q) u(t - nk) + C(q) e(t)` with
/// `A = 1 + a_1 q^-1 + ...`, `B = b_1 + b_2 q^-1 + ...`, `C = 1 + c_1 q^-1 + ...`.
///
/// `a` may be empty for a pure (delayed) FIR gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaxModel {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub c: Vec<f64>,
    pub nk: usize,
    pub dt: f64,
}

impl ArmaxModel {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, nk: usize, dt: f64) -> Result<Self> {
        let m = Self { a, b, c, nk, dt };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nk < 1 {
            return Err(Error::Model("input delay nk must be at least 1".into()));
        }
        if self.b.is_empty() {
            return Err(Error::Model("b polynomial is empty".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Model(format!("sample time {} must be positive", self.dt)));
        }
        if self.a.iter().chain(&self.b).chain(&self.c).any(|v| !v.is_finite()) {
            return Err(Error::Model("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn orders(&self) -> (usize, usize, usize, usize) {
        (self.a.len(), self.b.len(), self.c.len(), self.nk)
    }

    /// Number of estimated coefficients.
    pub fn parameter_count(&self) -> usize {
        self.a.len() + self.b.len() + self.c.len()
    }

    /// Roots of `z^na + a_1 z^(na-1) + ... + a_na`.
    pub fn poles(&self) -> Vec<Complex<f64>> {
        let mut p = vec![1.0];
        p.extend(&self.a);
        poly_roots(&p)
    }

    /// Roots of `b_1 z^(nb-1) + ... + b_nb`.
    pub fn zeros(&self) -> Result<Vec<Complex<f64>>> {
        let first = self
            .b
            .iter()
            .position(|v| *v != 0.0)
            .ok_or_else(|| Error::Model("all-zero b polynomial".into()))?;
        Ok(poly_roots(&self.b[first..]))
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|z| z.norm() < 1.0)
    }

    /// Steady-state gain `B(1) / A(1)`.
    pub fn dc_gain(&self) -> f64 {
        let num: f64 = self.b.iter().sum();
        let den: f64 = 1.0 + self.a.iter().sum::<f64>();
        num / den
    }

    /// Longest lag in the output, input and noise recursions.
    pub fn max_lag(&self) -> usize {
        self.a.len().max(self.nk + self.b.len() - 1).max(self.c.len())
    }

    /// One output sample given histories indexed so that `y[t-i]`, `u[t-j]`
    /// and `e[t-i]` are in range for every lag the model uses.
    pub(crate) fn output_at(&self, t: usize, y: &[f64], u: &[f64], e: &[f64]) -> f64 {
        let mut v = e.get(t).copied().unwrap_or(0.0);
        for (i, ai) in self.a.iter().enumerate() {
            if let Some(k) = t.checked_sub(i + 1) {
                v -= ai * y[k];
            }
        }
        for (j, bj) in self.b.iter().enumerate() {
            if let Some(k) = t.checked_sub(self.nk + j) {
                v += bj * u[k];
            }
        }
        for (i, ci) in self.c.iter().enumerate() {
            if let Some(k) = t.checked_sub(i + 1) {
                v += ci * e.get(k).copied().unwrap_or(0.0);
            }
        }
        v
    }
}

/// Evaluates the ARMAX recursion from zero initial conditions.
pub fn simulate_armax(m: &ArmaxModel, u: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    if u.len() != e.len() {
        return Err(Error::Dimension(format!(
            "input has {} samples, noise {}",
            u.len(),
            e.len()
        )));
    }
    let mut y = vec![0.0; u.len()];
    for t in 0..u.len() {
        y[t] = m.output_at(t, &y, u, e);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_step() {
        let m = ArmaxModel::new(vec![-0.5], vec![1.0], vec![], 1, 0.04).unwrap();
        let y = simulate_armax(&m, &[1.0; 6], &[0.0; 6]).unwrap();
        let expected = [0.0, 1.0, 1.5, 1.75, 1.875, 1.9375];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let m = ArmaxModel::new(vec![-0.9, 0.2], vec![0.3, 0.1], vec![0.5], 2, 0.04).unwrap();
        let y = simulate_armax(&m, &[0.0; 20], &[0.0; 20]).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_delay() {
        let m = ArmaxModel::new(vec![], vec![1.0], vec![], 2, 0.04).unwrap();
        let mut u = vec![0.0; 5];
        u[0] = 1.0;
        let y = simulate_armax(&m, &u, &[0.0; 5]).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn zeros_and_poles() {
        let m = ArmaxModel::new(vec![-0.5], vec![1.0, -2.0], vec![], 1, 0.04).unwrap();
        let z = m.zeros().unwrap();
        assert_eq!(z.len(), 1);
        assert!((z[0].re - 2.0).abs() < 1e-12);
        assert!((m.poles()[0].re - 0.5).abs() < 1e-12);
        let zero_b = ArmaxModel { b: vec![0.0, 0.0], ..m };
        assert!(zero_b.zeros().is_err());
    }

    #[test]
    fn rejects_zero_delay() {
        assert!(ArmaxModel::new(vec![], vec![1.0], vec![], 0, 0.04).is_err());
    }
}
