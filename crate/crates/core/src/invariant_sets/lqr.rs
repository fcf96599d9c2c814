use nalgebra::{DMatrix, DVector};

use crate::linalg::is_schur_stable;
use crate::{Error, Result};

const RICCATI_TOL: f64 = 1e-12;
const DOUBLING_CAP: usize = 100;

/// Discrete LQR gain `K` (row vector, `u = K x`) from the stabilizing
/// solution of `P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA`, computed by the
/// structure-preserving doubling iteration. Weakly weighted slow modes make
/// the plain Riccati recursion converge linearly at a rate close to one;
/// doubling converges quadratically.
pub fn synthesize_feedback(a: &DMatrix<f64>, b: &DVector<f64>, q: &DMatrix<f64>, r: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n || q.shape() != (n, n) {
        return Err(Error::Dimension("LQR operands".into()));
    }
    if !(r > 0.0) {
        return Err(Error::Synthesis("input weight must be positive".into()));
    }
    if q.clone().cholesky().is_none() {
        return Err(Error::Synthesis("state weight must be positive definite".into()));
    }
    let bm = DMatrix::from_column_slice(n, 1, b.as_slice());
    let eye = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut g = &bm * bm.transpose() / r;
    let mut h = q.clone();
    let mut converged = false;
    for _ in 0..DOUBLING_CAP {
        let w = (&eye + &g * &h)
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular matrix in Riccati doubling".into()))?;
        let wa = &w * &ak;
        let next_h = &h + ak.transpose() * &h * &wa;
        let next_g = &g + &ak * &w * &g * ak.transpose();
        ak = &ak * &wa;
        g = (&next_g + next_g.transpose()) * 0.5;
        let next_h = (&next_h + next_h.transpose()) * 0.5;
        let change = (&next_h - &h).amax() / (1.0 + next_h.amax());
        h = next_h;
        if !h.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical("Riccati doubling diverged".into()));
        }
        if change < RICCATI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Synthesis(format!(
            "Riccati doubling did not converge in {DOUBLING_CAP} steps"
        )));
    }
    let p = h;
    let pb = &p * &bm;
    let s = r + (bm.transpose() * &pb)[(0, 0)];
    let k = -(bm.transpose() * &p * a) / s;
    let acl = a + &bm * &k;
    if !is_schur_stable(&acl) {
        return Err(Error::Synthesis("LQR closed loop is not Schur stable".into()));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dynamics_zero_gain() {
        let k = synthesize_feedback(
            &DMatrix::zeros(2, 2),
            &DVector::from_vec(vec![1.0, 0.0]),
            &DMatrix::identity(2, 2),
            1.0,
        )
        .unwrap();
        assert!(k.amax() < 1e-14);
    }

    #[test]
    fn scalar_unstable_plant() {
        // Closed form: p = q + a^2 p r / (r + p), k = -a p / (r + p).
        let a = 1.2;
        let k = synthesize_feedback(
            &DMatrix::from_element(1, 1, a),
            &DVector::from_element(1, 1.0),
            &DMatrix::identity(1, 1),
            1.0,
        )
        .unwrap();
        let disc: f64 = (a * a) * (a * a) + 4.0;
        let p = (a * a + disc.sqrt()) / 2.0;
        assert!((k[(0, 0)] + a * p / (1.0 + p)).abs() < 1e-8);
        assert!((a + k[(0, 0)]).abs() < 1.0);
    }

    #[test]
    fn matches_plain_recursion() {
        // Double integrator with weights that converge quickly either way.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DVector::from_vec(vec![0.005, 0.1]);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5]));
        let r = 2.0;
        let bm = DMatrix::from_column_slice(2, 1, b.as_slice());
        let mut p = q.clone();
        for _ in 0..5000 {
            let pb = &p * &bm;
            let s = r + (bm.transpose() * &pb)[(0, 0)];
            let apb = a.transpose() * &pb;
            p = &q + a.transpose() * &p * &a - &apb * apb.transpose() / s;
        }
        let s = r + (bm.transpose() * &p * &bm)[(0, 0)];
        let k_ref = -(bm.transpose() * &p * &a) / s;
        let k = synthesize_feedback(&a, &b, &q, r).unwrap();
        assert!((k - k_ref).amax() < 1e-9);
    }
}
