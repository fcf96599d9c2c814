use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Innovation samples kept per observer.
pub const INNOVATION_HISTORY: usize = 32;

/// Luenberger gain for an output matrix that selects the first `p` states.
///
/// With `L = (A - rI) C'` the error matrix is
/// `A - LC = A (I - C'C) + r C'C`, which is block upper triangular with
/// eigenvalues `r` on the measured states and those of the latent block.
/// In observer-canonical realizations the latent block is a shift, so the
/// measured states converge with factor `r` and the latent ones in finitely
/// many steps. Disturbances acting on measured states never reach the
/// latent estimate.
pub fn observer_gain(a: &DMatrix<f64>, c: &DMatrix<f64>, radius: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let p = c.nrows();
    if a.ncols() != n || c.ncols() != n || p > n {
        return Err(Error::Dimension("observer operands".into()));
    }
    for i in 0..p {
        for j in 0..n {
            if c[(i, j)] != if i == j { 1.0 } else { 0.0 } {
                return Err(Error::Model("observer expects C = [I 0]".into()));
            }
        }
    }
    if !(0.0..1.0).contains(&radius) {
        return Err(Error::Config(format!("observer radius {radius} outside [0, 1)")));
    }
    let l = (a - DMatrix::identity(n, n) * radius) * c.transpose();
    let err = a - &l * c;
    if crate::linalg::spectral_radius(&err) >= 1.0 - 1e-9 {
        return Err(Error::Synthesis("observer error dynamics are not stable".into()));
    }
    Ok(l)
}

/// Per-model estimate of the pre-shift state `(s, v, a, latent...)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverState {
    /// One-step prediction `x̂(t|t-1)`.
    #[serde(with = "crate::serde_mat::vector")]
    pub x_hat: DVector<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub l_obs: DMatrix<f64>,
    pub innovations: Vec<Vec<f64>>,
}

impl ObserverState {
    pub fn new(x0: DVector<f64>, l_obs: DMatrix<f64>) -> Self {
        Self {
            x_hat: x0,
            l_obs,
            innovations: Vec::new(),
        }
    }

    /// Estimate using the current measurement: measured coordinates are
    /// replaced, latent ones keep the prediction.
    pub fn current(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut x = self.x_hat.clone();
        x.rows_mut(0, y.len()).copy_from(y);
        x
    }
}

/// `x̂+ = A x̂ + B u + L (y - C x̂)`, where `u` is the input that reaches the
/// model at this sample (already delayed by the model's dead time).
pub fn observer_step(
    obs: &mut ObserverState,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DMatrix<f64>,
    u_applied: f64,
    y_meas: &DVector<f64>,
) -> Result<()> {
    if y_meas.len() != c.nrows() || obs.x_hat.len() != a.nrows() {
        return Err(Error::Dimension("observer step".into()));
    }
    let innov = y_meas - c * &obs.x_hat;
    obs.x_hat = a * &obs.x_hat + b * u_applied + &obs.l_obs * &innov;
    if obs.innovations.len() == INNOVATION_HISTORY {
        obs.innovations.remove(0);
    }
    obs.innovations.push(innov.iter().copied().collect());
    Ok(())
}
