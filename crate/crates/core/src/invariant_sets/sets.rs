use nalgebra::{DMatrix, DVector};

use crate::geometry::{solve_lp, HPolytope, LpStatus, SupportFunction, TOL_GEO};
use crate::{Error, Result};

const MPI_CAP: usize = 500;
const MPI_TOL: f64 = 1e-9;

/// `X ⊖ Z` and `U ⊖ K Z`.
pub fn tighten(x: &HPolytope, u: &HPolytope, z: &HPolytope, k: &DMatrix<f64>) -> Result<(HPolytope, HPolytope)> {
    if z.dim() != x.dim() || k.ncols() != x.dim() || k.nrows() != u.dim() {
        return Err(Error::Dimension("tightening operands".into()));
    }
    let x_tight = x.pontryagin_diff(z)?;
    let mut off = u.offsets().clone();
    for i in 0..u.num_rows() {
        off[i] -= z.support(&(k.transpose() * u.normals().row(i).transpose()))?;
    }
    let u_tight = HPolytope::new(u.normals().clone(), off)?;
    if x_tight.is_empty()? || u_tight.is_empty()? {
        return Err(Error::Synthesis("mRPI exceeds constraints".into()));
    }
    Ok((x_tight, u_tight))
}

/// Maximal positively invariant set of `x+ = (A + B K) x` inside
/// `{x : [x; K x] in M}` by the Gilbert-Tan recursion.
pub fn mpi_tracking(a: &DMatrix<f64>, b: &DVector<f64>, k: &DMatrix<f64>, m: &HPolytope) -> Result<HPolytope> {
    let n = a.nrows();
    if m.dim() != n + 1 || k.shape() != (1, n) || b.len() != n {
        return Err(Error::Dimension("MPI operands".into()));
    }
    let acl = a + DMatrix::from_column_slice(n, 1, b.as_slice()) * k;
    // Constraint rows on x: H_x + H_u K.
    let hx = m.normals().columns(0, n).into_owned() + m.normals().column(n) * k;
    let h = m.offsets().clone();
    let base = HPolytope::new(hx.clone(), h.clone())?;
    if !base.contains_tol(&DVector::zeros(n), 0.0) {
        return Err(Error::Synthesis("origin violates the terminal constraints".into()));
    }
    let mut set = base.remove_redundancy()?;
    let mut power = acl.clone();
    for _ in 0..MPI_CAP {
        let rows = &hx * &power;
        let mut added_g = Vec::new();
        let mut added_h = Vec::new();
        for i in 0..rows.nrows() {
            let nrm = rows.row(i).norm();
            if nrm < 1e-14 {
                if h[i] < 0.0 {
                    return Err(Error::Synthesis("terminal constraints infeasible".into()));
                }
                continue;
            }
            let dir = rows.row(i).transpose();
            let res = solve_lp(&(-&dir), &set, None)?;
            let redundant = match res.status {
                LpStatus::Optimal => -res.objective.unwrap() <= h[i] + MPI_TOL * (1.0 + h[i].abs()),
                LpStatus::Unbounded => false,
                LpStatus::Infeasible => return Err(Error::Synthesis("MPI iterate became empty".into())),
            };
            if !redundant {
                added_g.push(dir);
                added_h.push(h[i]);
            }
        }
        if added_g.is_empty() {
            return Ok(set);
        }
        let g = DMatrix::from_fn(added_g.len(), n, |r, c| added_g[r][c]);
        set = set
            .stack(&HPolytope::new(g, DVector::from_vec(added_h))?)?
            .remove_redundancy()?;
        power = &power * &acl;
    }
    Err(Error::Synthesis(format!(
        "maximal invariant set did not converge within {MPI_CAP} iterations"
    )))
}

/// One-step backward feasibly reachable set
/// `{z in Z : exists v in V, A z + B v in T}`.
pub fn one_step_backward(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    t: &HPolytope,
    z_set: &HPolytope,
    v_set: &HPolytope,
) -> Result<HPolytope> {
    let n = a.nrows();
    // Lift to (z, v): T rows on A z + B v, Z rows on z, V rows on v.
    let mt = t.num_rows();
    let mut gt = DMatrix::zeros(mt, n + 1);
    gt.view_mut((0, 0), (mt, n)).copy_from(&(t.normals() * a));
    gt.view_mut((0, n), (mt, 1)).copy_from(&(t.normals() * b));
    let lifted = HPolytope::new(gt, t.offsets().clone())?
        .stack(&z_set.embed(n + 1, &(0..n).collect::<Vec<_>>())?)?
        .stack(&v_set.embed(n + 1, &[n])?)?;
    lifted.project(&(0..n).collect::<Vec<_>>())
}

/// `N`-step backward feasibly reachable set of `T`.
pub fn backward_feasible_set(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    t: &HPolytope,
    steps: usize,
    z_set: &HPolytope,
    v_set: &HPolytope,
) -> Result<HPolytope> {
    let n = a.nrows();
    if t.dim() != n || z_set.dim() != n || v_set.dim() != 1 || b.len() != n {
        return Err(Error::Dimension("backward reachable set operands".into()));
    }
    let mut f = t.remove_redundancy()?;
    for _ in 0..steps {
        f = one_step_backward(a, b, &f, z_set, v_set)?;
        if f.is_empty()? {
            return Err(Error::Synthesis("backward reachable set became empty".into()));
        }
    }
    Ok(f)
}

/// Whether `z0` can be steered into `T` in exactly `steps` moves with states
/// in `Z` (including `z0`) and inputs in `V`, decided by one LP.
pub fn steering_feasible(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z0: &DVector<f64>,
    t: &HPolytope,
    steps: usize,
    z_set: &HPolytope,
    v_set: &HPolytope,
) -> Result<bool> {
    let n = a.nrows();
    if !z_set.contains_tol(z0, TOL_GEO) {
        return Ok(false);
    }
    // Rows over the inputs v(0..steps): z(k) = A^k z0 + sum_j A^(k-1-j) B v(j).
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut free = z0.clone();
    let mut gamma = DMatrix::<f64>::zeros(n, steps);
    for k in 1..=steps {
        // advance the prediction by one step
        gamma = a * &gamma;
        gamma.column_mut(k - 1).copy_from(b);
        free = a * free;
        let target = if k == steps { t } else { z_set };
        let gk = target.normals() * &gamma;
        let hk = target.offsets() - target.normals() * &free;
        for i in 0..gk.nrows() {
            rows.push(gk.row(i).transpose());
            rhs.push(hk[i]);
        }
        if k == steps && steps > 0 {
            // the final state must also respect Z
            let gz = z_set.normals() * &gamma;
            let hz = z_set.offsets() - z_set.normals() * &free;
            for i in 0..gz.nrows() {
                rows.push(gz.row(i).transpose());
                rhs.push(hz[i]);
            }
        }
    }
    if steps == 0 {
        return Ok(t.contains_tol(z0, TOL_GEO));
    }
    for j in 0..steps {
        for i in 0..v_set.num_rows() {
            let mut r = DVector::zeros(steps);
            r[j] = v_set.normals()[(i, 0)];
            rows.push(r);
            rhs.push(v_set.offsets()[i]);
        }
    }
    let g = DMatrix::from_fn(rows.len(), steps, |r, c| rows[r][c]);
    let p = HPolytope::new(g, DVector::from_vec(rhs).add_scalar(TOL_GEO))?;
    let res = solve_lp(&DVector::zeros(steps), &p, None)?;
    Ok(res.status == LpStatus::Optimal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lo: f64, hi: f64) -> HPolytope {
        HPolytope::from_box(&[lo], &[hi])
    }

    #[test]
    fn tighten_scalar() {
        let (x, u) = tighten(
            &interval(-1.0, 1.0),
            &interval(-1.0, 1.0),
            &interval(-0.3, 0.3),
            &DMatrix::from_element(1, 1, 0.5),
        )
        .unwrap();
        assert!(x.set_equal(&interval(-0.7, 0.7), 1e-12).unwrap());
        assert!(u.set_equal(&interval(-0.85, 0.85), 1e-12).unwrap());
    }

    #[test]
    fn mpi_scalar_contraction() {
        // x+ = 0.5 x, |x| <= 1, input unconstrained.
        let m = HPolytope::from_box(&[-1.0, f64::NEG_INFINITY], &[1.0, f64::INFINITY]);
        let o = mpi_tracking(
            &DMatrix::from_element(1, 1, 0.5),
            &DVector::from_element(1, 1.0),
            &DMatrix::zeros(1, 1),
            &m,
        )
        .unwrap();
        assert!(o.set_equal(&interval(-1.0, 1.0), 1e-12).unwrap());
    }

    #[test]
    fn mpi_nilpotent() {
        // x+ = x + u with u = -x: the input constraint |u| <= 0.5 binds.
        let m = HPolytope::from_box(&[-1.0, -0.5], &[1.0, 0.5]);
        let o = mpi_tracking(
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_element(1, 1.0),
            &DMatrix::from_element(1, 1, -1.0),
            &m,
        )
        .unwrap();
        assert!(o.set_equal(&interval(-0.5, 0.5), 1e-12).unwrap());
    }

    #[test]
    fn integrator_backward_set() {
        let f = backward_feasible_set(
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_element(1, 1.0),
            &interval(-1.0, 1.0),
            2,
            &interval(-10.0, 10.0),
            &interval(-1.0, 1.0),
        )
        .unwrap();
        assert!(f.set_equal(&interval(-3.0, 3.0), 1e-12).unwrap());
        let f0 = backward_feasible_set(
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_element(1, 1.0),
            &interval(-1.0, 1.0),
            0,
            &interval(-10.0, 10.0),
            &interval(-1.0, 1.0),
        )
        .unwrap();
        assert!(f0.set_equal(&interval(-1.0, 1.0), 1e-12).unwrap());
    }

    #[test]
    fn zero_input_backward_set_is_preimage() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let f = backward_feasible_set(
            &a,
            &DVector::from_element(1, 1.0),
            &interval(-1.0, 1.0),
            2,
            &interval(-10.0, 10.0),
            &interval(0.0, 0.0),
        )
        .unwrap();
        assert!(f.set_equal(&interval(-0.25, 0.25), 1e-12).unwrap());
    }

    #[test]
    fn steering_lp_on_integrator() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DVector::from_element(1, 1.0);
        let t = interval(-1.0, 1.0);
        let z = interval(-10.0, 10.0);
        let v = interval(-1.0, 1.0);
        assert!(steering_feasible(&a, &b, &DVector::from_element(1, 2.9), &t, 2, &z, &v).unwrap());
        assert!(!steering_feasible(&a, &b, &DVector::from_element(1, 3.2), &t, 2, &z, &v).unwrap());
    }
}
