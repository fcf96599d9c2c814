use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::DriveLog;
use crate::models::{ArmaxModel, FitReport};
use crate::{Error, Result};

/// `(n_a, n_b, n_c, n_k)`.
pub type Orders = (usize, usize, usize, usize);

const TOL_MP: f64 = 1e-9;
const PLR_MAX_ITER: usize = 50;
const PLR_TOL: f64 = 1e-8;

/// `1 - |y - y_sim| / |y - mean(y)|`.
pub fn nrmse(y_true: &[f64], y_sim: &[f64]) -> Result<f64> {
    if y_true.len() != y_sim.len() || y_true.is_empty() {
        return Err(Error::Dimension(format!(
            "nrmse of {} and {} samples",
            y_true.len(),
            y_sim.len()
        )));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let spread: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum::<f64>().sqrt();
    if spread == 0.0 {
        return Err(Error::Identification("NRMSE of a constant signal is undefined".into()));
    }
    let err: f64 = y_true
        .iter()
        .zip(y_sim)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(1.0 - err / spread)
}

/// All zeros of the b-polynomial strictly inside the unit circle.
pub fn is_minimum_phase(m: &ArmaxModel) -> Result<bool> {
    Ok(m.zeros()?.iter().all(|z| z.norm() < 1.0 - TOL_MP))
}

fn lag(orders: Orders) -> usize {
    let (na, nb, nc, nk) = orders;
    na.max(nk + nb - 1).max(nc)
}

/// ARX part of the regressor for target sample `t`.
fn arx_row(log: &DriveLog, t: usize, orders: Orders, out: &mut [f64]) {
    let (na, nb, _, nk) = orders;
    for i in 0..na {
        out[i] = -log.a_veh[t - 1 - i];
    }
    for j in 0..nb {
        out[na + j] = log.a_set[t - nk - j];
    }
}

/// Fits the whole log as a single segment.
pub fn fit_armax(log: &DriveLog, orders: Orders) -> Result<(ArmaxModel, FitReport)> {
    fit_armax_segments(log, &[0..log.len()], orders)
}

/// Pseudo-linear regression over the given runs. Only regression rows whose
/// whole lag window lies inside a run are used.
pub fn fit_armax_segments(
    log: &DriveLog,
    segments: &[Range<usize>],
    orders: Orders,
) -> Result<(ArmaxModel, FitReport)> {
    let (na, nb, nc, nk) = orders;
    if nb == 0 || nk == 0 {
        return Err(Error::Identification("orders need n_b >= 1 and n_k >= 1".into()));
    }
    let dt = log.dt().ok_or_else(|| Error::Identification("log too short".into()))?;
    let l = lag(orders);
    let targets: Vec<usize> = segments.iter().flat_map(|r| (r.start + l)..r.end).collect();
    let n_ab = na + nb;
    let n_par = n_ab + nc;
    if targets.len() < 10 * n_par {
        return Err(Error::Identification(format!(
            "{} regression rows for {} parameters",
            targets.len(),
            n_par
        )));
    }
    let y = DVector::from_iterator(targets.len(), targets.iter().map(|&t| log.a_veh[t]));
    let mut phi = DMatrix::zeros(targets.len(), n_ab);
    let mut row = vec![0.0; n_ab];
    for (r, &t) in targets.iter().enumerate() {
        arx_row(log, t, orders, &mut row);
        for (c, v) in row.iter().enumerate() {
            phi[(r, c)] = *v;
        }
    }
    if phi.amax() == 0.0 && y.amax() == 0.0 {
        let model = ArmaxModel::new(vec![0.0; na], vec![0.0; nb], vec![0.0; nc], nk, dt)?;
        let report = FitReport {
            orders,
            nrmse: None,
            minimum_phase: false,
            stable: true,
            sample_count: targets.len(),
            degenerate: true,
            fallback_arx: false,
        };
        return Ok((model, report));
    }
    let theta_arx = least_squares(&phi, &y)?;
    let mut model = split(&theta_arx, orders, false, dt)?;
    let mut fallback = false;

    if nc > 0 {
        let mut theta = DVector::zeros(n_par);
        theta.rows_mut(0, n_ab).copy_from(&theta_arx);
        let mut converged = false;
        for _ in 0..PLR_MAX_ITER {
            let resid = residuals(log, segments, orders, &theta);
            let mut phi_c = DMatrix::zeros(targets.len(), n_par);
            phi_c.view_mut((0, 0), (targets.len(), n_ab)).copy_from(&phi);
            for (r, &t) in targets.iter().enumerate() {
                for i in 0..nc {
                    phi_c[(r, n_ab + i)] = resid[t - 1 - i];
                }
            }
            let Ok(next) = least_squares(&phi_c, &y) else {
                break;
            };
            let change = (&next - &theta).amax();
            theta = next;
            if !theta.iter().all(|v| v.is_finite()) {
                break;
            }
            if change < PLR_TOL {
                converged = true;
                break;
            }
        }
        let candidate = split(&theta, orders, true, dt);
        let noise_stable = candidate.as_ref().is_ok_and(|m| {
            let mut cpoly = vec![1.0];
            cpoly.extend(&m.c);
            crate::linalg::poly_roots(&cpoly).iter().all(|z| z.norm() < 1.0)
        });
        match candidate {
            Ok(m) if converged && noise_stable => model = m,
            _ => {
                fallback = true;
                model.c = vec![0.0; nc];
            }
        }
    }

    let fit = free_run_nrmse(&model, log, segments)?;
    let report = FitReport {
        orders,
        nrmse: fit,
        minimum_phase: is_minimum_phase(&model).unwrap_or(false),
        stable: model.is_stable(),
        sample_count: targets.len(),
        degenerate: fit.is_none(),
        fallback_arx: fallback,
    };
    Ok((model, report))
}

fn least_squares(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if phi.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite regression data".into()));
    }
    let svd = phi.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < 1e-10 {
        return Err(Error::Identification("rank-deficient regressor".into()));
    }
    svd.solve(y, 0.0).map_err(|e| Error::Numerical(e.to_string()))
}

fn split(theta: &DVector<f64>, orders: Orders, with_c: bool, dt: f64) -> Result<ArmaxModel> {
    let (na, nb, nc, nk) = orders;
    let a = theta.rows(0, na).iter().copied().collect();
    let b = theta.rows(na, nb).iter().copied().collect();
    let c = if with_c {
        theta.rows(na + nb, nc).iter().copied().collect()
    } else {
        Vec::new()
    };
    ArmaxModel::new(a, b, c, nk, dt)
}

/// One-step prediction errors of the current estimate; zero before the lag
/// window of each run is filled.
fn residuals(log: &DriveLog, segments: &[Range<usize>], orders: Orders, theta: &DVector<f64>) -> Vec<f64> {
    let (na, nb, nc, _) = orders;
    let l = lag(orders);
    let mut e = vec![0.0; log.len()];
    let mut row = vec![0.0; na + nb];
    for seg in segments {
        for t in (seg.start + l)..seg.end {
            arx_row(log, t, orders, &mut row);
            let mut pred: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            for i in 0..nc {
                pred += theta[na + nb + i] * e[t - 1 - i];
            }
            e[t] = log.a_veh[t] - pred;
        }
    }
    e
}

/// Free-run NRMSE over the runs: each run is simulated from its measured
/// initial outputs with the measured input and no noise. `None` when the
/// measured output is constant.
pub fn free_run_nrmse(m: &ArmaxModel, log: &DriveLog, segments: &[Range<usize>]) -> Result<Option<f64>> {
    let l = m.max_lag();
    let mut y_true = Vec::new();
    let mut y_sim = Vec::new();
    for seg in segments {
        if seg.len() <= l {
            continue;
        }
        let u = &log.a_set[seg.clone()];
        let mut ys = log.a_veh[seg.clone()].to_vec();
        for t in l..ys.len() {
            let mut v = 0.0;
            for (i, ai) in m.a.iter().enumerate() {
                v -= ai * ys[t - 1 - i];
            }
            for (j, bj) in m.b.iter().enumerate() {
                v += bj * u[t - m.nk - j];
            }
            ys[t] = v;
        }
        y_true.extend_from_slice(&log.a_veh[seg.start + l..seg.end]);
        y_sim.extend_from_slice(&ys[l..]);
    }
    if y_true.is_empty() {
        return Ok(None);
    }
    match nrmse(&y_true, &y_sim) {
        Ok(v) => Ok(Some(v)),
        Err(Error::Identification(_)) => Ok(None),
        Err(e) => Err(e),
    }
}
