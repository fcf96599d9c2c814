//! Dense LP solver for problems of the form `min c'x  s.t. Ax <= b  (, A_eq x = b_eq)`
//! with free variables.
//!
//! The solver walks vertices of the feasible region: a basis is a set of `n`
//! linearly independent active rows, multipliers come from one `n x n` solve
//! and the ratio test scans all rows, so the cost per pivot is `O(m n + n^3)`.
//! That suits the shapes used here (few variables, many rows). Pricing is
//! Dantzig's rule and switches to Bland's rule permanently after a run of
//! degenerate pivots.
//!
//! Unboundedness is detected through an implicit bounding box: if an
//! artificial box row carries a strictly positive multiplier at the optimum,
//! the original problem is unbounded.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{HPolytope, TOL_LP};
use crate::{Error, Result};

/// Pivot cap for one call of the simplex.
pub const LP_ITERATION_CAP: usize = 10_000;

const DEGENERATE_RUN_BEFORE_BLAND: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Option<DVector<f64>>,
    pub objective: Option<f64>,
}

impl LpResult {
    fn infeasible() -> Self {
        Self {
            status: LpStatus::Infeasible,
            x: None,
            objective: None,
        }
    }

    fn unbounded() -> Self {
        Self {
            status: LpStatus::Unbounded,
            x: None,
            objective: None,
        }
    }

    fn optimal(c: &DVector<f64>, x: DVector<f64>) -> Self {
        let objective = c.dot(&x);
        Self {
            status: LpStatus::Optimal,
            x: Some(x),
            objective: Some(objective),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Minimise `c'x` over `P ∩ {A_eq x = b_eq}`.
pub fn solve_lp(c: &DVector<f64>, p: &HPolytope, eq: Option<(&DMatrix<f64>, &DVector<f64>)>) -> Result<LpResult> {
    let n = p.dim();
    if c.len() != n {
        return Err(Error::Dimension(format!(
            "cost has length {}, polytope dimension {}",
            c.len(),
            n
        )));
    }
    match eq {
        None => minimize(c, p.normals(), p.offsets(), None),
        Some((a_eq, b_eq)) => {
            if a_eq.ncols() != n || a_eq.nrows() != b_eq.len() {
                return Err(Error::Dimension(format!(
                    "equality block is {}x{} with rhs {}, expected {} columns",
                    a_eq.nrows(),
                    a_eq.ncols(),
                    b_eq.len(),
                    n
                )));
            }
            minimize_with_equalities(c, p.normals(), p.offsets(), a_eq, b_eq)
        }
    }
}

fn minimize_with_equalities(
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
) -> Result<LpResult> {
    if a_eq.nrows() == 0 {
        return minimize(c, a, b, None);
    }
    let svd = a_eq.clone().svd(true, true);
    let x_p = svd.solve(b_eq, 1e-12).map_err(|e| Error::Numerical(e.to_string()))?;
    let residual = (a_eq * &x_p - b_eq).amax();
    if residual > 1e-9 * (1.0 + b_eq.amax()) {
        return Ok(LpResult::infeasible());
    }
    let null = crate::linalg::null_space(a_eq, 1e-12);
    if null.ncols() == 0 {
        let slack = b - a * &x_p;
        return Ok(if slack.iter().all(|s| *s >= -TOL_LP) {
            LpResult::optimal(c, x_p)
        } else {
            LpResult::infeasible()
        });
    }
    let a_red = a * &null;
    let b_red = b - a * &x_p;
    let c_red = null.transpose() * c;
    let inner = minimize(&c_red, &a_red, &b_red, None)?;
    Ok(match inner.status {
        LpStatus::Optimal => {
            let y = inner.x.expect("optimal carries a point");
            LpResult::optimal(c, &x_p + &null * y)
        }
        LpStatus::Infeasible => LpResult::infeasible(),
        LpStatus::Unbounded => LpResult::unbounded(),
    })
}

/// Core routine: `min c'x s.t. a x <= b`. When `start` is given it must be
/// feasible (up to `TOL_LP`); phase one is then skipped.
pub(crate) fn minimize(
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    start: Option<&DVector<f64>>,
) -> Result<LpResult> {
    let n = a.ncols();
    if n == 0 {
        return Ok(if b.iter().all(|v| *v >= -TOL_LP) {
            LpResult::optimal(c, DVector::zeros(0))
        } else {
            LpResult::infeasible()
        });
    }
    let feas_tol = TOL_LP * (1.0 + b.amax());
    let x0 = match start {
        Some(x) => x.clone(),
        None => match phase_one(a, b, feas_tol)? {
            Some(x) => x,
            None => return Ok(LpResult::infeasible()),
        },
    };
    let big = 1e6 * (1.0 + b.amax() + x0.amax());
    let inst = Instance { a, b, big };
    inst.run(c, x0)
}

/// Finds a point with `a x <= b + tol`, or `None` if the system is infeasible.
fn phase_one(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<Option<DVector<f64>>> {
    let (m, n) = a.shape();
    // Variables (x, t): a x - t <= b, -t <= 1.
    let mut aa = DMatrix::zeros(m + 1, n + 1);
    aa.view_mut((0, 0), (m, n)).copy_from(a);
    for i in 0..m {
        aa[(i, n)] = -1.0;
    }
    aa[(m, n)] = -1.0;
    let mut bb = DVector::zeros(m + 1);
    bb.rows_mut(0, m).copy_from(b);
    bb[m] = 1.0;
    let mut start = DVector::zeros(n + 1);
    let worst = b.iter().map(|v| -v).fold(0.0, f64::max);
    start[n] = worst + 1.0;
    let mut cost = DVector::zeros(n + 1);
    cost[n] = 1.0;
    let big = 1e6 * (1.0 + b.amax() + start.amax());
    let inst = Instance { a: &aa, b: &bb, big };
    let res = inst.run(&cost, start)?;
    match res.status {
        LpStatus::Optimal => {
            let z = res.x.expect("optimal carries a point");
            if z[n] <= tol {
                Ok(Some(z.rows(0, n).into_owned()))
            } else {
                Ok(None)
            }
        }
        // t is bounded below by -1, so this only happens numerically.
        _ => Err(Error::Numerical("phase one did not reach an optimum".into())),
    }
}

/// Row set made of the real rows `0..m` followed by `2n` implicit box rows
/// `x_j <= big`, `-x_j <= big`.
struct Instance<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    big: f64,
}

impl Instance<'_> {
    fn m(&self) -> usize {
        self.a.nrows()
    }

    fn n(&self) -> usize {
        self.a.ncols()
    }

    fn total(&self) -> usize {
        self.m() + 2 * self.n()
    }

    fn is_box(&self, i: usize) -> bool {
        i >= self.m()
    }

    fn row(&self, i: usize) -> DVector<f64> {
        if i < self.m() {
            self.a.row(i).transpose()
        } else {
            let k = i - self.m();
            let mut r = DVector::zeros(self.n());
            r[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
            r
        }
    }

    fn dot(&self, i: usize, v: &DVector<f64>) -> f64 {
        if i < self.m() {
            self.a.row(i).iter().zip(v.iter()).map(|(x, y)| x * y).sum()
        } else {
            let k = i - self.m();
            if k % 2 == 0 {
                v[k / 2]
            } else {
                -v[k / 2]
            }
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        if i < self.m() {
            self.b[i]
        } else {
            self.big
        }
    }

    fn row_norm(&self, i: usize) -> f64 {
        if i < self.m() {
            self.a.row(i).norm()
        } else {
            1.0
        }
    }

    /// Smallest step along `p` before a row outside `basis` becomes active.
    fn ratio_test(
        &self,
        x: &DVector<f64>,
        p: &DVector<f64>,
        in_basis: &[bool],
        bland: bool,
        real_only: bool,
    ) -> Option<(usize, f64)> {
        let pn = p.norm();
        let mut best: Option<(usize, f64, f64)> = None;
        let limit = if real_only { self.m() } else { self.total() };
        for i in 0..limit {
            if in_basis[i] {
                continue;
            }
            let den = self.dot(i, p);
            if den <= 1e-11 * self.row_norm(i) * pn {
                continue;
            }
            let slack = (self.rhs(i) - self.dot(i, x)).max(0.0);
            let t = slack / den;
            let better = match best {
                None => true,
                Some((_, bt, bden)) => {
                    if t < bt - 1e-14 * (1.0 + bt) {
                        true
                    } else if t <= bt + 1e-14 * (1.0 + bt) {
                        // Tie: Bland keeps the smallest index, otherwise the
                        // steepest row is the better-conditioned choice.
                        !bland && den > bden
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some((i, t, den));
            }
        }
        best.map(|(i, t, _)| (i, t))
    }

    /// Moves from a feasible point to a vertex without increasing the cost.
    fn crash(&self, c: &DVector<f64>, mut x: DVector<f64>) -> Result<(DVector<f64>, Vec<usize>)> {
        let n = self.n();
        let mut basis: Vec<usize> = Vec::with_capacity(n);
        let mut in_basis = vec![false; self.total()];
        let mut q: Vec<DVector<f64>> = Vec::with_capacity(n);
        // Gram-Schmidt twice keeps the direction orthogonal to the basis.
        let project = |v: &DVector<f64>, q: &[DVector<f64>]| {
            let mut out = v.clone();
            for _ in 0..2 {
                for qi in q {
                    let d = qi.dot(&out);
                    out.axpy(-d, qi, 1.0);
                }
            }
            out
        };
        let mut skipped = 0usize;
        while basis.len() < n {
            let mut p = project(&(-c), &q);
            let cost_driven = p.norm() > 1e-12 * c.norm().max(1.0);
            let step = if cost_driven {
                self.ratio_test(&x, &p, &in_basis, false, false)
            } else {
                // Cost-neutral: prefer a direction blocked by a real row so the
                // point stays away from the artificial box.
                let mut choice = None;
                let mut fallback = None;
                let mut order: Vec<(usize, f64)> = (0..n)
                    .map(|k| {
                        let mut e = DVector::zeros(n);
                        e[k] = 1.0;
                        (k, project(&e, &q).norm())
                    })
                    .collect();
                order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
                'outer: for (k, norm) in order {
                    if norm < 1e-8 {
                        continue;
                    }
                    let mut e = DVector::zeros(n);
                    e[k] = 1.0;
                    let dir = project(&e, &q);
                    for sign in [1.0, -1.0] {
                        let d = &dir * sign;
                        if let Some(hit) = self.ratio_test(&x, &d, &in_basis, false, true) {
                            p = d;
                            choice = Some(hit);
                            break 'outer;
                        }
                        if fallback.is_none() {
                            fallback = Some(d);
                        }
                    }
                }
                match choice {
                    Some(hit) => Some(hit),
                    None => {
                        p = fallback.ok_or_else(|| Error::Numerical("crash found no free direction".into()))?;
                        self.ratio_test(&x, &p, &in_basis, false, false)
                    }
                }
            };
            let (i, t) = step.ok_or_else(|| Error::Numerical("crash step unblocked".into()))?;
            x.axpy(t, &p, 1.0);
            let r = self.row(i);
            let mut qn = project(&r, &q);
            let nrm = qn.norm();
            if nrm < 1e-9 * r.norm() {
                // Degenerate vertex: the row is tight but adds no new
                // direction, so it is set aside.
                in_basis[i] = true;
                skipped += 1;
                if skipped > self.total() {
                    return Err(Error::Numerical("crash stalled on dependent rows".into()));
                }
                continue;
            }
            qn /= nrm;
            q.push(qn);
            basis.push(i);
            in_basis[i] = true;
        }
        Ok((x, basis))
    }

    fn basis_matrix(&self, basis: &[usize]) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (r, &i) in basis.iter().enumerate() {
            m.row_mut(r).copy_from(&self.row(i).transpose());
        }
        m
    }

    fn run(&self, c: &DVector<f64>, x0: DVector<f64>) -> Result<LpResult> {
        let n = self.n();
        let (mut x, mut basis) = self.crash(c, x0)?;
        let mut in_basis = vec![false; self.total()];
        for &i in &basis {
            in_basis[i] = true;
        }
        let dual_tol = 1e-10 * c.amax().max(1.0);
        let mut bland = false;
        let mut degenerate_run = 0usize;
        for _ in 0..LP_ITERATION_CAP {
            let bm = self.basis_matrix(&basis);
            let lu = bm.clone().lu();
            let rhs: DVector<f64> = DVector::from_iterator(n, basis.iter().map(|&i| self.rhs(i)));
            if let Some(v) = lu.solve(&rhs) {
                x = v;
            }
            let y = bm
                .transpose()
                .lu()
                .solve(c)
                .ok_or_else(|| Error::Numerical("singular LP basis".into()))?;
            // Multipliers are -y.
            let mut leave: Option<(usize, f64)> = None;
            for (r, &i) in basis.iter().enumerate() {
                let lambda = -y[r];
                if lambda < -dual_tol {
                    let pick = match leave {
                        None => true,
                        Some((rb, lb)) => {
                            if bland {
                                i < basis[rb]
                            } else {
                                lambda < lb
                            }
                        }
                    };
                    if pick {
                        leave = Some((r, lambda));
                    }
                }
            }
            let Some((r, _)) = leave else {
                let unbounded = basis
                    .iter()
                    .enumerate()
                    .any(|(r, &i)| self.is_box(i) && -y[r] > dual_tol);
                return Ok(if unbounded {
                    LpResult::unbounded()
                } else {
                    LpResult::optimal(c, x)
                });
            };
            let mut e = DVector::zeros(n);
            e[r] = -1.0;
            let p = lu
                .solve(&e)
                .ok_or_else(|| Error::Numerical("singular LP basis".into()))?;
            let Some((enter, t)) = self.ratio_test(&x, &p, &in_basis, bland, false) else {
                return Ok(LpResult::unbounded());
            };
            if t <= 1e-13 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_RUN_BEFORE_BLAND {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            x.axpy(t, &p, 1.0);
            in_basis[basis[r]] = false;
            in_basis[enter] = true;
            basis[r] = enter;
        }
        Err(Error::LpIterationLimit(LP_ITERATION_CAP))
    }
}
