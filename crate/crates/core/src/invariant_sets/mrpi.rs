use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{BoxImage, HPolytope, SupportFunction};
use crate::linalg::{inf_norm, is_schur_stable};
use crate::{Error, Result};

/// Largest truncation index tried before giving up.
pub const MRPI_MAX_TERMS: usize = 500;
const REPAIR_CAP: usize = 500;
/// Residual invariance violation accepted on the template, relative to the
/// largest offset.
pub const REPAIR_TOL: f64 = 1e-9;
/// Extra spread directions in the template (half of them are negations).
const SPREAD_DIRECTIONS: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MrpiResult {
    pub z: HPolytope,
    /// Number of explicit terms `A^i W` summed.
    pub s: usize,
    /// Radius of the infinity-norm ball bounding the neglected tail.
    pub alpha: f64,
    /// Template repair sweeps needed to make the set invariant.
    pub repair_sweeps: usize,
}

fn wnorm_inf(w: &BoxImage) -> f64 {
    (0..w.center.len())
        .map(|i| w.center[i].abs() + w.generators.row(i).iter().map(|g| g.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Template directions: coordinate axes, their images under powers of
/// `A'`, and seeded spread directions.
pub fn template_directions(a: &DMatrix<f64>, seed: u64) -> Vec<DVector<f64>> {
    let n = a.nrows();
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    let push = |d: DVector<f64>, dirs: &mut Vec<DVector<f64>>| {
        let nrm = d.norm();
        if nrm < 1e-12 {
            return;
        }
        let d = d / nrm;
        if !dirs.iter().any(|e| (e - &d).norm() < 1e-9) {
            dirs.push(-&d);
            dirs.push(d);
        }
    };
    let at = a.transpose();
    // Powers until the map has contracted noticeably, at most 12.
    let mut depth = 1;
    let mut p = a.clone();
    while depth < 12 && inf_norm(&p) > 0.5 {
        p = &p * a;
        depth += 1;
    }
    for i in 0..n {
        let mut d = DVector::zeros(n);
        d[i] = 1.0;
        for _ in 0..=depth {
            push(d.clone(), &mut dirs);
            d = &at * d;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SPREAD_DIRECTIONS / 2 {
        let d = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        push(d, &mut dirs);
    }
    dirs
}

/// Outer approximation of the minimal RPI set of `x+ = A x + w`, `w in W`.
///
/// The sum `F_s = ⊕_{i<s} A^i W` is truncated once the tail is bounded by an
/// infinity-norm ball of radius `alpha <= eps`; the template polytope with
/// offsets `h_{F_s} + alpha |d|_1` contains the mRPI set. Its offsets are then
/// raised until `A Z ⊕ W ⊆ Z` holds on the template, which keeps the set an
/// outer approximation and makes it invariant.
pub fn mrpi_outer(a: &DMatrix<f64>, w: &BoxImage, eps: f64, seed: u64) -> Result<MrpiResult> {
    let n = a.nrows();
    if a.ncols() != n || w.center.len() != n {
        return Err(Error::Dimension("mRPI operands".into()));
    }
    if !is_schur_stable(a) {
        return Err(Error::Synthesis("closed loop is not Schur stable".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Synthesis("mRPI accuracy must be positive".into()));
    }
    let wn = wnorm_inf(w);
    // Contraction root: smallest m with |A^m| < 1.
    let mut powers = vec![DMatrix::identity(n, n)];
    let mut m = 0;
    while m == 0 || inf_norm(&powers[m]) >= 1.0 {
        if powers.len() > 4 * MRPI_MAX_TERMS {
            return Err(Error::Synthesis("spectral radius too close to one".into()));
        }
        let next = &powers[powers.len() - 1] * a;
        powers.push(next);
        m = powers.len() - 1;
    }
    let kappa = inf_norm(&powers[m]);
    let power = |powers: &mut Vec<DMatrix<f64>>, i: usize| {
        while powers.len() <= i {
            let next = &powers[powers.len() - 1] * a;
            powers.push(next);
        }
    };
    let mut s = 1;
    let alpha = loop {
        if s > MRPI_MAX_TERMS {
            return Err(Error::Synthesis(format!(
                "mRPI truncation exceeds {MRPI_MAX_TERMS} terms; spectral radius too close to one"
            )));
        }
        power(&mut powers, s + m);
        let block: f64 = (s..s + m).map(|i| inf_norm(&powers[i])).sum();
        let tail = wn * block / (1.0 - kappa);
        if tail <= eps {
            break tail;
        }
        s += 1;
    };

    let dirs = template_directions(a, seed);
    let mut g = DMatrix::zeros(dirs.len(), n);
    for (i, d) in dirs.iter().enumerate() {
        g.row_mut(i).copy_from(&d.transpose());
    }
    let mut c = DVector::zeros(dirs.len());
    for (i, d) in dirs.iter().enumerate() {
        let mut h = 0.0;
        for p in powers.iter().take(s) {
            h += w.support(&(p.transpose() * d))?;
        }
        c[i] = h + alpha * d.iter().map(|x| x.abs()).sum::<f64>();
    }
    let hw: Vec<f64> = dirs.iter().map(|d| w.support(d)).collect::<Result<_>>()?;
    let at_dirs: Vec<DVector<f64>> = dirs.iter().map(|d| a.transpose() * d).collect();
    let mut sweeps = 0;
    let mut prev_gap = f64::INFINITY;
    let mut since_jump = 0;
    loop {
        let poly = HPolytope::new(g.clone(), c.clone())?;
        let mut delta = DVector::zeros(dirs.len());
        for i in 0..dirs.len() {
            let need = poly.support(&at_dirs[i])? + hw[i];
            if need > c[i] {
                delta[i] = need - c[i];
            }
        }
        let gap = delta.max();
        if gap <= REPAIR_TOL * (1.0 + c.amax()) {
            break;
        }
        sweeps += 1;
        if sweeps > REPAIR_CAP {
            return Err(Error::Synthesis("template RPI repair did not converge".into()));
        }
        // The increments shrink geometrically; jump ahead by the estimated
        // remaining sum once the ratio has settled.
        let ratio = gap / prev_gap;
        prev_gap = gap;
        since_jump += 1;
        if since_jump >= 4 && ratio < 0.999 {
            c += delta * (1.1 / (1.0 - ratio));
            since_jump = 0;
        } else {
            c += delta;
        }
    }
    let z = HPolytope::new(g, c)?.remove_redundancy()?;
    Ok(MrpiResult {
        z,
        s,
        alpha,
        repair_sweeps: sweeps,
    })
}
