//! Dense strictly convex QP `min ½ x'Hx + f'x  s.t.  A x <= b, E x = e` by
//! the dual active-set method of Goldfarb and Idnani.
//!
//! The iteration starts from the unconstrained minimizer and adds violated
//! constraints one at a time while keeping the active ones tight, so every
//! iterate is dual feasible. With `d_i = L^{-1} a_i` (`H = L L'`) the step
//! directions come from the Gram matrix of the active `d_i`, which is small.
//! Since `H` and `A` are fixed per model, the factor and all `d_i` are
//! computed once in [`PreparedQp`].

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const TOL_QP: f64 = 1e-7;
const ADD_TOL: f64 = 1e-10;
pub const QP_ITERATION_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
    /// Set by the controller when the multi-model problem was infeasible
    /// and the single-model problem was solved instead.
    Relaxed,
}

impl QpStatus {
    /// A command was computed from a solution.
    pub fn is_solved(&self) -> bool {
        matches!(self, QpStatus::Optimal | QpStatus::Relaxed)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIter => "max_iter",
            QpStatus::Relaxed => "relaxed",
        }
    }
}

/// Problem data in the layout used by the controller.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: DVector<f64>,
    /// Active inequality rows at the solution.
    pub active: Vec<usize>,
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    /// Row that could not be added when infeasibility was detected.
    pub certificate: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Row {
    Ineq(usize),
    /// Equality with the sign chosen so that the row is entered as `<=`.
    Eq(usize, f64),
}

/// Factorization and transformed rows shared by all solves with the same
/// `H`, `A` and `E`.
#[derive(Debug, Clone)]
pub struct PreparedQp {
    chol: Cholesky<f64, Dyn>,
    a: DMatrix<f64>,
    e: DMatrix<f64>,
    /// Columns `L^{-1} a_i`.
    d_ineq: DMatrix<f64>,
    d_eq: DMatrix<f64>,
    row_norm: DVector<f64>,
}

impl PreparedQp {
    pub fn new(h: &DMatrix<f64>, a_ineq: &DMatrix<f64>, a_eq: &DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n || a_ineq.ncols() != n || a_eq.ncols() != n {
            return Err(Error::Dimension("QP blocks".into()));
        }
        let chol =
            Cholesky::new(h.clone()).ok_or_else(|| Error::Numerical("QP Hessian is not positive definite".into()))?;
        let l = chol.l();
        let solve_l = |m: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            if m.nrows() == 0 {
                return Ok(DMatrix::zeros(n, 0));
            }
            l.solve_lower_triangular(&m.transpose())
                .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))
        };
        let d_ineq = solve_l(a_ineq)?;
        let d_eq = solve_l(a_eq)?;
        let row_norm = DVector::from_iterator(a_ineq.nrows(), a_ineq.row_iter().map(|r| r.norm().max(1e-300)));
        Ok(Self {
            chol,
            a: a_ineq.clone(),
            e: a_eq.clone(),
            d_ineq,
            d_eq,
            row_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_ineq(&self) -> usize {
        self.a.nrows()
    }

    fn d(&self, r: Row) -> DVector<f64> {
        match r {
            Row::Ineq(i) => self.d_ineq.column(i).into_owned(),
            Row::Eq(j, sign) => self.d_eq.column(j) * sign,
        }
    }

    /// Solves with the given linear term and right-hand sides. `warm` lists
    /// rows to try first (typically the previous active set).
    pub fn solve(
        &self,
        f: &DVector<f64>,
        b: &DVector<f64>,
        e_rhs: &DVector<f64>,
        warm: &[usize],
    ) -> Result<QpSolution> {
        let n = self.dim();
        let m = self.num_ineq();
        if f.len() != n || b.len() != m || e_rhs.len() != self.e.nrows() {
            return Err(Error::Dimension("QP vectors".into()));
        }
        let mut x = -self.chol.solve(f);
        let mut slack = &self.a * &x - b;
        let mut active: Vec<Row> = Vec::new();
        let mut lambda: Vec<f64> = Vec::new();
        let mut is_active = vec![false; m];
        let mut iterations = 0;
        let mut warm_queue: Vec<usize> = warm.iter().copied().filter(|&i| i < m).collect();
        warm_queue.reverse();
        let mut eq_next = 0;

        loop {
            // Pick the row to add: pending equalities, then warm rows that
            // are violated, then the most violated row.
            let pick: Option<(Row, f64)> = if eq_next < self.e.nrows() {
                let j = eq_next;
                eq_next += 1;
                let res = (self.e.row(j) * &x)[0] - e_rhs[j];
                let sign = if res >= 0.0 { 1.0 } else { -1.0 };
                Some((Row::Eq(j, sign), res.abs()))
            } else {
                let mut chosen = None;
                while let Some(i) = warm_queue.pop() {
                    if !is_active[i] && slack[i] / self.row_norm[i] > ADD_TOL * (1.0 + b[i].abs() / self.row_norm[i]) {
                        chosen = Some((Row::Ineq(i), slack[i]));
                        break;
                    }
                }
                if chosen.is_none() {
                    let mut best = 0.0;
                    for i in 0..m {
                        if is_active[i] {
                            continue;
                        }
                        let v = slack[i] / self.row_norm[i];
                        if v > ADD_TOL * (1.0 + b[i].abs() / self.row_norm[i]) && v > best {
                            best = v;
                            chosen = Some((Row::Ineq(i), slack[i]));
                        }
                    }
                }
                chosen
            };
            let Some((p, mut viol)) = pick else {
                break;
            };
            if viol == 0.0 {
                if let Row::Eq(..) = p {
                    active.push(p);
                    lambda.push(0.0);
                }
                continue;
            }
            let d_p = self.d(p);
            let mut t_p = 0.0;
            loop {
                iterations += 1;
                if iterations > QP_ITERATION_CAP {
                    return Ok(self.finish(QpStatus::MaxIter, x, &active, &lambda, iterations, None));
                }
                let k = active.len();
                let (w, rho) = if k == 0 {
                    (d_p.clone(), DVector::zeros(0))
                } else {
                    let mut da = DMatrix::zeros(n, k);
                    for (c, r) in active.iter().enumerate() {
                        da.set_column(c, &self.d(*r));
                    }
                    let gram = da.transpose() * &da;
                    let rhs = da.transpose() * &d_p;
                    let r = match Cholesky::new(gram.clone()) {
                        Some(c) => c.solve(&rhs),
                        None => gram
                            .lu()
                            .solve(&rhs)
                            .ok_or_else(|| Error::Numerical("active set became dependent".into()))?,
                    };
                    (&d_p - &da * &r, -r)
                };
                let w2 = w.norm_squared();
                let dependent = w2 <= 1e-14 * d_p.norm_squared().max(1e-300);
                // Largest dual step before an active inequality multiplier
                // reaches zero.
                let mut t2 = f64::INFINITY;
                let mut block = None;
                for (c, r) in active.iter().enumerate() {
                    if let Row::Ineq(_) = r {
                        if rho[c] < -1e-14 {
                            let t = lambda[c] / -rho[c];
                            if t < t2 {
                                t2 = t;
                                block = Some(c);
                            }
                        }
                    }
                }
                if dependent {
                    let Some(c) = block else {
                        let cert = match p {
                            Row::Ineq(i) => Some(i),
                            Row::Eq(..) => None,
                        };
                        return Ok(self.finish(QpStatus::Infeasible, x, &active, &lambda, iterations, cert));
                    };
                    for (li, ri) in lambda.iter_mut().zip(rho.iter()) {
                        *li += t2 * ri;
                    }
                    t_p += t2;
                    self.drop(&mut active, &mut lambda, &mut is_active, c);
                    continue;
                }
                let t1 = viol / w2;
                let t = t1.min(t2);
                let z = -self.chol.l().tr_solve_lower_triangular(&w).expect("triangular solve");
                x.axpy(t, &z, 1.0);
                slack.axpy(t, &(&self.a * &z), 1.0);
                for (li, ri) in lambda.iter_mut().zip(rho.iter()) {
                    *li += t * ri;
                }
                t_p += t;
                if t2 < t1 {
                    viol -= t * w2;
                    let c = block.expect("partial step has a blocking row");
                    self.drop(&mut active, &mut lambda, &mut is_active, c);
                    continue;
                }
                active.push(p);
                lambda.push(t_p);
                if let Row::Ineq(i) = p {
                    is_active[i] = true;
                    slack[i] = 0.0;
                }
                break;
            }
        }
        Ok(self.finish(QpStatus::Optimal, x, &active, &lambda, iterations, None))
    }

    fn drop(&self, active: &mut Vec<Row>, lambda: &mut Vec<f64>, is_active: &mut [bool], c: usize) {
        if let Row::Ineq(i) = active[c] {
            is_active[i] = false;
        }
        active.remove(c);
        lambda.remove(c);
    }

    fn finish(
        &self,
        status: QpStatus,
        x: DVector<f64>,
        active: &[Row],
        lambda: &[f64],
        iterations: usize,
        certificate: Option<usize>,
    ) -> QpSolution {
        let mut rows = Vec::new();
        let mut mult = Vec::new();
        for (r, l) in active.iter().zip(lambda) {
            if let Row::Ineq(i) = r {
                rows.push(*i);
                mult.push(*l);
            }
        }
        QpSolution {
            status,
            x,
            active: rows,
            multipliers: mult,
            iterations,
            certificate,
        }
    }
}

/// One-shot solve.
pub fn solve_qp(qp: &QpProblem) -> Result<QpSolution> {
    let prep = PreparedQp::new(&qp.h, &qp.a_ineq, &qp.a_eq)?;
    prep.solve(&qp.f, &qp.b_ineq, &qp.b_eq, &[])
}

/// Largest constraint violation of `x`, equalities counted in absolute value.
pub fn max_violation(qp: &QpProblem, x: &DVector<f64>) -> f64 {
    let mut v: f64 = 0.0;
    if qp.a_ineq.nrows() > 0 {
        v = v.max((&qp.a_ineq * x - &qp.b_ineq).max());
    }
    if qp.a_eq.nrows() > 0 {
        v = v.max((&qp.a_eq * x - &qp.b_eq).amax());
    }
    v
}
