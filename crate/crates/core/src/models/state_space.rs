use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ArmaxModel;
use crate::{Error, Result};

/// `x(t+1) = A x(t) + B u(t - d)`, `y(t) = C x(t)`.
///
/// Realizations of an ARMAX model with dead time `nk` use `d = nk - 1`; the
/// remaining sample of delay is the one every strictly proper state-space
/// model carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedStateSpace {
    #[serde(with = "crate::serde_mat::matrix")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub b: DVector<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub c: DMatrix<f64>,
    pub d: usize,
    pub dt: f64,
}

impl DelayedStateSpace {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DMatrix<f64>, d: usize, dt: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || c.ncols() != n {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B has {} rows, C has {} columns",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.ncols()
            )));
        }
        Ok(Self { a, b, c, d, dt })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Outputs for the input sequence `u` from state `x0`, with the delay line
    /// initially holding zeros.
    pub fn simulate(&self, x0: &DVector<f64>, u: &[f64]) -> Vec<DVector<f64>> {
        let mut x = x0.clone();
        let mut out = Vec::with_capacity(u.len());
        for t in 0..u.len() {
            out.push(&self.c * &x);
            let ud = if t >= self.d { u[t - self.d] } else { 0.0 };
            x = &self.a * &x + &self.b * ud;
        }
        out
    }

    /// Markov parameters `C A^k B` of the first output.
    pub fn markov(&self, count: usize) -> Vec<f64> {
        let mut v = self.b.clone();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push((self.c.row(0) * &v)[0]);
            v = &self.a * v;
        }
        out
    }
}

/// Observer-canonical realization of the deterministic part `B(q)/A(q)`.
pub fn armax_to_ss(m: &ArmaxModel) -> Result<DelayedStateSpace> {
    m.validate()?;
    let n = m.a.len().max(m.b.len());
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, 0)] = -m.a.get(i).copied().unwrap_or(0.0);
        if i + 1 < n {
            a[(i, i + 1)] = 1.0;
        }
    }
    let b = DVector::from_fn(n, |i, _| m.b.get(i).copied().unwrap_or(0.0));
    let mut c = DMatrix::zeros(1, n);
    c[(0, 0)] = 1.0;
    DelayedStateSpace::new(a, b, c, m.nk - 1, m.dt)
}

/// Similarity transform `x' = T x` with `T = [C; 0 I]`, making the first
/// state equal to the (acceleration) output.
pub fn acceleration_transform(ss: &DelayedStateSpace) -> Result<DelayedStateSpace> {
    let n = ss.order();
    if ss.c.nrows() != 1 {
        return Err(Error::Model("acceleration transform expects a single output".into()));
    }
    if ss.c[(0, 0)].abs() < 1e-12 {
        return Err(Error::Model(
            "first entry of the output row is zero, so T = [C; 0 I] is singular; \
             permute the state so the output depends on the first state"
                .into(),
        ));
    }
    let mut t = DMatrix::identity(n, n);
    t.row_mut(0).copy_from(&ss.c.row(0));
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("transformation matrix not invertible".into()))?;
    let mut c = DMatrix::zeros(1, n);
    c[(0, 0)] = 1.0;
    DelayedStateSpace::new(&t * &ss.a * &t_inv, &t * &ss.b, c, ss.d, ss.dt)
}

/// Prepends position and velocity states integrated by forward Euler:
/// `s+ = s + dt v`, `v+ = v + dt a`. The output becomes `(s, v, a)`.
pub fn augment_position_velocity(ss: &DelayedStateSpace, dt: f64) -> Result<DelayedStateSpace> {
    let n = ss.order();
    if ss.c.nrows() != 1 || ss.c[(0, 0)] != 1.0 || ss.c.row(0).iter().skip(1).any(|v| *v != 0.0) {
        return Err(Error::Model("first state must be the acceleration output".into()));
    }
    let m = n + 2;
    let mut a = DMatrix::zeros(m, m);
    a[(0, 0)] = 1.0;
    a[(0, 1)] = dt;
    a[(1, 1)] = 1.0;
    a[(1, 2)] = dt;
    a.view_mut((2, 2), (n, n)).copy_from(&ss.a);
    let mut b = DVector::zeros(m);
    b.rows_mut(2, n).copy_from(&ss.b);
    let mut c = DMatrix::zeros(3, m);
    for i in 0..3 {
        c[(i, i)] = 1.0;
    }
    DelayedStateSpace::new(a, b, c, ss.d, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::simulate_armax;

    #[test]
    fn first_order_realization() {
        let m = ArmaxModel::new(vec![-0.5], vec![1.0], vec![], 1, 0.04).unwrap();
        let ss = armax_to_ss(&m).unwrap();
        assert_eq!(ss.a, DMatrix::from_element(1, 1, 0.5));
        assert_eq!(ss.b[0], 1.0);
        assert_eq!(ss.d, 0);
        let u = [1.0; 10];
        let y = ss.simulate(&DVector::zeros(1), &u);
        let yr = simulate_armax(&m, &u, &[0.0; 10]).unwrap();
        for (a, b) in y.iter().zip(&yr) {
            assert!((a[0] - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pure_gain() {
        let m = ArmaxModel::new(vec![], vec![2.5], vec![], 3, 0.04).unwrap();
        let ss = armax_to_ss(&m).unwrap();
        let mut u = vec![0.0; 8];
        u[1] = 1.0;
        let y = ss.simulate(&DVector::zeros(1), &u);
        let yr = simulate_armax(&m, &u, &[0.0; 8]).unwrap();
        for t in 0..8 {
            assert_eq!(y[t][0], yr[t]);
        }
        assert_eq!(yr[4], 2.5);
    }

    #[test]
    fn transform_identity_when_output_is_first_state() {
        let m = ArmaxModel::new(vec![-1.1, 0.24], vec![0.1, 0.05], vec![], 2, 0.04).unwrap();
        let ss = armax_to_ss(&m).unwrap();
        let tr = acceleration_transform(&ss).unwrap();
        assert_eq!(tr, ss);
    }

    #[test]
    fn transform_preserves_io() {
        let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.3]);
        let b = DVector::from_vec(vec![0.5, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let ss = DelayedStateSpace::new(a, b, c, 1, 0.04).unwrap();
        let tr = acceleration_transform(&ss).unwrap();
        assert_eq!(tr.c, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        for (x, y) in ss.markov(20).iter().zip(tr.markov(20)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_rejects_zero_leading_output() {
        let ss = DelayedStateSpace::new(
            DMatrix::identity(2, 2) * 0.5,
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            0,
            0.04,
        )
        .unwrap();
        assert!(acceleration_transform(&ss).is_err());
    }

    #[test]
    fn double_integrator_closed_form() {
        // Acceleration state held at 1 by a unit pole with no input.
        let ss = DelayedStateSpace::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            0,
            0.04,
        )
        .unwrap();
        let dt = 0.04;
        let aug = augment_position_velocity(&ss, dt).unwrap();
        assert_eq!(aug.order(), 3);
        assert_eq!(aug.c.nrows(), 3);
        let y = aug.simulate(&DVector::from_vec(vec![0.0, 0.0, 1.0]), &[0.0; 30]);
        for (t, yt) in y.iter().enumerate() {
            let tf = t as f64;
            assert!((yt[1] - tf * dt).abs() < 1e-12);
            assert!((yt[0] - dt * dt * tf * (tf - 1.0) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coasting_position() {
        let ss = DelayedStateSpace::new(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            0,
            0.04,
        )
        .unwrap();
        let aug = augment_position_velocity(&ss, 0.04).unwrap();
        let y = aug.simulate(&DVector::from_vec(vec![0.0, 3.0, 0.0]), &[0.0; 10]);
        for (t, yt) in y.iter().enumerate() {
            assert!((yt[0] - 3.0 * 0.04 * t as f64).abs() < 1e-12);
        }
    }
}
