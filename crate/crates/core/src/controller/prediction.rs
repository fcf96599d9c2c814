use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Stacked prediction `X = Γ U + Ω x` for `x+ = A x + B u`, rows of `X`
/// holding `x(1), ..., x(N)`.
pub fn build_prediction(a: &DMatrix<f64>, b: &DVector<f64>, n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let nx = a.nrows();
    if n == 0 {
        return Err(Error::Config("prediction horizon must be at least one step".into()));
    }
    if a.ncols() != nx || b.len() != nx {
        return Err(Error::Dimension("prediction operands".into()));
    }
    let mut gamma = DMatrix::zeros(n * nx, n);
    let mut omega = DMatrix::zeros(n * nx, nx);
    let mut p = a.clone();
    // A^(i-j) B for the first column, reused down the diagonals.
    let mut col = DMatrix::zeros(n * nx, 1);
    let mut ab = b.clone();
    for i in 0..n {
        omega.view_mut((i * nx, 0), (nx, nx)).copy_from(&p);
        p = a * &p;
        col.view_mut((i * nx, 0), (nx, 1)).copy_from(&ab);
        ab = a * &ab;
    }
    for j in 0..n {
        let rows = (n - j) * nx;
        gamma
            .view_mut((j * nx, j), (rows, 1))
            .copy_from(&col.view((0, 0), (rows, 1)));
    }
    Ok((gamma, omega))
}

/// Reference samples at the prediction instants `1..=N` (index 0 is the
/// current instant and only fixes the time base).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceWindow {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl ReferenceWindow {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self, dt: f64) -> Result<()> {
        let n = self.t.len();
        if self.s.len() != n || self.v.len() != n || self.a.len() != n {
            return Err(Error::Dimension("reference window columns differ in length".into()));
        }
        for w in self.t.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * (1.0 + dt) {
                return Err(Error::Config("reference window is not uniformly sampled".into()));
            }
        }
        Ok(())
    }
}

/// Full reference trajectory sampled at `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub dt: f64,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Sample `k`; past the end the vehicle is held at the final position.
    pub fn at(&self, k: usize) -> (f64, f64, f64) {
        match self.s.len() {
            0 => (0.0, 0.0, 0.0),
            len if k < len => (self.s[k], self.v[k], self.a[k]),
            len => {
                let last = len - 1;
                let extra = (k - last) as f64 * self.dt;
                (self.s[last] + extra * self.v[last], self.v[last], 0.0)
            }
        }
    }

    pub fn window(&self, start: usize, horizon: usize) -> ReferenceWindow {
        let mut w = ReferenceWindow {
            t: Vec::with_capacity(horizon + 1),
            s: Vec::with_capacity(horizon + 1),
            v: Vec::with_capacity(horizon + 1),
            a: Vec::with_capacity(horizon + 1),
        };
        for k in start..=start + horizon {
            let (s, v, a) = self.at(k);
            w.t.push(k as f64 * self.dt);
            w.s.push(s);
            w.v.push(v);
            w.a.push(a);
        }
        w
    }
}

/// Error selection `E_all = R_all - Λ_all X` for the position, position
/// change and acceleration errors over the horizon.
#[derive(Debug, Clone)]
pub struct ErrorMaps {
    pub lambda: DMatrix<f64>,
    pub r_all: DVector<f64>,
}

/// Builds `Λ_all = [Λ_s; Λ_Δs; Λ_a]` and the stacked reference. The state
/// layout is `(s, v, a, ...)`; the change of the first position error
/// against the current one is dropped.
pub fn build_error_maps(reference: &ReferenceWindow, n: usize, nx: usize) -> Result<ErrorMaps> {
    if reference.len() != n + 1 {
        return Err(Error::Dimension(format!(
            "reference window has {} samples, expected {}",
            reference.len(),
            n + 1
        )));
    }
    if nx < 3 {
        return Err(Error::Dimension("state must contain s, v and a".into()));
    }
    let mut lambda = DMatrix::zeros(3 * n, n * nx);
    let mut r_all = DVector::zeros(3 * n);
    for i in 0..n {
        lambda[(i, i * nx)] = 1.0;
        lambda[(n + i, i * nx)] = 1.0;
        if i > 0 {
            lambda[(n + i, (i - 1) * nx)] = -1.0;
        }
        lambda[(2 * n + i, i * nx + 2)] = 1.0;
        r_all[i] = reference.s[i + 1];
        r_all[n + i] = reference.s[i + 1] - if i > 0 { reference.s[i] } else { 0.0 };
        r_all[2 * n + i] = reference.a[i + 1];
    }
    Ok(ErrorMaps { lambda, r_all })
}

/// Diagonal weights of the tracking cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub q_s: f64,
    pub q_ds: f64,
    pub q_a: f64,
    pub r: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            q_s: 20.0,
            q_ds: 400.0,
            q_a: 0.5,
            r: 5.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_s > 0.0 && self.q_ds > 0.0 && self.q_a > 0.0 && self.r > 0.0) {
            return Err(Error::Config("cost weights must be positive".into()));
        }
        Ok(())
    }

    pub fn q_diag(&self, n: usize) -> DVector<f64> {
        DVector::from_fn(3 * n, |i, _| match i / n {
            0 => self.q_s,
            1 => self.q_ds,
            _ => self.q_a,
        })
    }
}

/// Linear part of the cost as an affine map of the measured state and the
/// stacked reference: `f_U = F_r R_all + F_x x_t`.
#[derive(Debug, Clone)]
pub struct CostMaps {
    /// Hessian over `U` only, `2 (Γ'Λ'QΛΓ + r I)`.
    pub h_u: DMatrix<f64>,
    pub f_r: DMatrix<f64>,
    pub f_x: DMatrix<f64>,
}

pub fn cost_maps(
    gamma: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    w: &CostWeights,
) -> Result<CostMaps> {
    maps_over(gamma, gamma.ncols(), omega, lambda, w)
}

/// Cost maps over `[U, o2]` when the prediction starts from the nominal
/// state `[s, x̆ - o2]` rather than the measurement: the predicted states
/// are `Γ U - Ω_b o2 + Ω x`, with `Ω_b` the columns of `Ω` past position.
/// `h_u` is then `(N + nb) x (N + nb)` and `f_x` multiplies the full
/// measured state.
pub fn offset_cost_maps(
    gamma: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    w: &CostWeights,
) -> Result<CostMaps> {
    let n = gamma.ncols();
    let nb = omega.ncols() - 1;
    let mut ext = DMatrix::zeros(gamma.nrows(), n + nb);
    ext.columns_mut(0, n).copy_from(gamma);
    ext.columns_mut(n, nb).copy_from(&-omega.columns(1, nb));
    maps_over(&ext, n, omega, lambda, w)
}

fn maps_over(
    decision: &DMatrix<f64>,
    n_u: usize,
    omega: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    w: &CostWeights,
) -> Result<CostMaps> {
    w.validate()?;
    let m = decision.ncols();
    let q = w.q_diag(n_u);
    let lg = lambda * decision;
    let mut qlg = lg.clone();
    for (i, mut row) in qlg.row_iter_mut().enumerate() {
        row *= q[i];
    }
    let mut h_u = lg.transpose() * &qlg;
    for i in 0..n_u {
        h_u[(i, i)] += w.r;
    }
    h_u *= 2.0;
    let f_r = qlg.transpose() * -2.0;
    let f_x = -&f_r * lambda * omega;
    debug_assert_eq!(h_u.nrows(), m);
    Ok(CostMaps { h_u, f_r, f_x })
}

/// Hessian and linear term of `J = E'QE + r U'U` over `O = [U, extra]`,
/// written as `½ O'HO + f'O`. The extra variables (tube offset, measured
/// state, steady-state parameter) carry only the regularizer `delta`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_cost(
    gamma: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    maps: &ErrorMaps,
    w: &CostWeights,
    x_t: &DVector<f64>,
    n_extra: usize,
    delta: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(delta > 0.0) && n_extra > 0 {
        return Err(Error::Config("regularizer must be positive".into()));
    }
    let cm = cost_maps(gamma, omega, &maps.lambda, w)?;
    let n = gamma.ncols();
    let mut h = DMatrix::zeros(n + n_extra, n + n_extra);
    h.view_mut((0, 0), (n, n)).copy_from(&cm.h_u);
    for i in n..n + n_extra {
        h[(i, i)] = delta;
    }
    let mut f = DVector::zeros(n + n_extra);
    f.rows_mut(0, n).copy_from(&(&cm.f_r * &maps.r_all + &cm.f_x * x_t));
    Ok((h, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_integrator_two_steps() {
        let (g, o) = build_prediction(&DMatrix::from_element(1, 1, 1.0), &DVector::from_element(1, 1.0), 2).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
        assert_eq!(o, DMatrix::from_column_slice(2, 1, &[1.0, 1.0]));
    }

    #[test]
    fn single_step_is_a_and_b() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let b = DVector::from_column_slice(&[0.0, 1.0]);
        let (g, o) = build_prediction(&a, &b, 1).unwrap();
        assert_eq!(g, DMatrix::from_column_slice(2, 1, b.as_slice()));
        assert_eq!(o, a);
    }

    #[test]
    fn difference_map_on_two_steps() {
        let w = ReferenceWindow {
            t: vec![0.0, 1.0, 2.0],
            s: vec![0.0; 3],
            v: vec![0.0; 3],
            a: vec![0.0; 3],
        };
        let m = build_error_maps(&w, 2, 3).unwrap();
        // Rows 2..4 act on the selected positions s(1), s(2).
        assert_eq!(m.lambda[(2, 0)], 1.0);
        assert_eq!(m.lambda[(2, 3)], 0.0);
        assert_eq!(m.lambda[(3, 0)], -1.0);
        assert_eq!(m.lambda[(3, 3)], 1.0);
    }

    #[test]
    fn scalar_cost_by_hand() {
        // x = (s, v, a): one step, s+ = s + u, a+ = u.
        let mut a = DMatrix::identity(3, 3);
        a[(2, 2)] = 0.0;
        let b = DVector::from_column_slice(&[1.0, 0.0, 1.0]);
        let (g, o) = build_prediction(&a, &b, 1).unwrap();
        let w = ReferenceWindow {
            t: vec![0.0, 1.0],
            s: vec![0.0, 2.0],
            v: vec![0.0; 2],
            a: vec![0.0, 1.0],
        };
        let maps = build_error_maps(&w, 1, 3).unwrap();
        let cw = CostWeights {
            q_s: 1.0,
            q_ds: 2.0,
            q_a: 3.0,
            r: 4.0,
        };
        let x = DVector::from_column_slice(&[0.5, 0.0, 0.0]);
        let (h, f) = assemble_cost(&g, &o, &maps, &cw, &x, 0, 1e-6).unwrap();
        // J = (1.5-u)^2 + 2 (1.5-u)^2 + 3 (1-u)^2 + 4 u^2.
        assert_relative_eq!(h[(0, 0)], 2.0 * (1.0 + 2.0 + 3.0 + 4.0), epsilon = 1e-12);
        assert_relative_eq!(f[0], -2.0 * (1.5 + 2.0 * 1.5 + 3.0), epsilon = 1e-12);
    }

    #[test]
    fn achievable_reference_has_zero_gradient() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.04, 0.0, 0.0, 1.0, 0.04, 0.0, 0.0, 0.9]);
        let b = DVector::from_column_slice(&[0.0, 0.0, 0.1]);
        let n = 4;
        let (g, o) = build_prediction(&a, &b, n).unwrap();
        let x = DVector::from_column_slice(&[1.0, 2.0, 0.5]);
        let mut w = ReferenceWindow {
            t: (0..=n).map(|k| k as f64).collect(),
            s: vec![0.0; n + 1],
            v: vec![0.0; n + 1],
            a: vec![0.0; n + 1],
        };
        let mut xk = x.clone();
        w.s[0] = x[0];
        w.a[0] = x[2];
        for k in 1..=n {
            xk = &a * xk;
            w.s[k] = xk[0];
            w.a[k] = xk[2];
        }
        let mut maps = build_error_maps(&w, n, 3).unwrap();
        // Δs reference relative to the neglected initial error.
        maps.r_all = &maps.lambda * &o * &x;
        let (_, f) = assemble_cost(&g, &o, &maps, &CostWeights::default(), &x, 0, 1e-6).unwrap();
        assert!(f.amax() < 1e-10);
    }

    #[test]
    fn doubling_weights_doubles_cost_terms() {
        let a = DMatrix::identity(3, 3);
        let b = DVector::from_column_slice(&[0.1, 0.2, 0.3]);
        let (g, o) = build_prediction(&a, &b, 3).unwrap();
        let w = ReferenceWindow {
            t: vec![0.0, 1.0, 2.0, 3.0],
            s: vec![0.0, 1.0, 2.0, 3.0],
            v: vec![1.0; 4],
            a: vec![0.0; 4],
        };
        let maps = build_error_maps(&w, 3, 3).unwrap();
        let x = DVector::from_column_slice(&[0.1, 0.0, 0.0]);
        let c1 = CostWeights::default();
        let c2 = CostWeights {
            q_s: 2.0 * c1.q_s,
            q_ds: 2.0 * c1.q_ds,
            q_a: 2.0 * c1.q_a,
            r: 2.0 * c1.r,
        };
        let (h1, f1) = assemble_cost(&g, &o, &maps, &c1, &x, 0, 1e-6).unwrap();
        let (h2, f2) = assemble_cost(&g, &o, &maps, &c2, &x, 0, 1e-6).unwrap();
        assert_relative_eq!(h2, h1 * 2.0, epsilon = 1e-9);
        assert_relative_eq!(f2, f1 * 2.0, epsilon = 1e-9);
    }
}
