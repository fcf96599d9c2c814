use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::DelayedStateSpace;
use crate::geometry::{affine_image_box, minkowski_support, BoxImage, HPolytope, IntervalBox, SupportFunction};
use crate::{Error, Result};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::Config(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(r: f64) -> Self {
        Self {
            lo: -r.abs(),
            hi: r.abs(),
        }
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        other.lo >= self.lo && other.hi <= self.hi
    }

    pub fn to_box(&self) -> IntervalBox {
        IntervalBox {
            lo: vec![self.lo],
            hi: vec![self.hi],
        }
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// Operating cell of a model: half-open velocity and acceleration intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub v: Interval,
    pub a: Interval,
}

/// Physical limits shared by every model of a bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantLimits {
    /// Additive disturbance on the acceleration state.
    pub w_a: Interval,
    pub v: Interval,
    pub a: Interval,
    pub u_bar: Interval,
    pub du_bar: Interval,
}

impl PlantLimits {
    pub fn x_va(&self) -> HPolytope {
        HPolytope::from_box(&[self.v.lo, self.a.lo], &[self.v.hi, self.a.hi])
    }
}

/// Result of moving an input delay of `d` samples to the output.
#[derive(Debug, Clone)]
pub struct DeadTimeShift {
    pub x_tight: HPolytope,
    pub w: BoxImage,
}

/// Tightens `x` by `⊕_{k<d} A^k e W` and returns the shifted disturbance
/// image `A^d e W`.
pub fn dead_time_shift(
    a: &DMatrix<f64>,
    e: &DVector<f64>,
    w: &Interval,
    x: &HPolytope,
    d: usize,
) -> Result<DeadTimeShift> {
    let n = a.nrows();
    if a.ncols() != n || e.len() != n || x.dim() != n {
        return Err(Error::Dimension("dead-time shift operands".into()));
    }
    let wbox = w.to_box();
    let mut maps = Vec::with_capacity(d);
    let mut col = e.clone();
    for _ in 0..d {
        maps.push(DMatrix::from_column_slice(n, 1, col.as_slice()));
        col = a * col;
    }
    let shifted = DMatrix::from_column_slice(n, 1, col.as_slice());
    let parts: Vec<(&DMatrix<f64>, &dyn SupportFunction)> =
        maps.iter().map(|m| (m, &wbox as &dyn SupportFunction)).collect();
    let mut off = x.offsets().clone();
    for i in 0..x.num_rows() {
        off[i] -= minkowski_support(&parts, &x.normals().row(i).transpose())?;
    }
    let x_tight = HPolytope::new(x.normals().clone(), off)?;
    let w = affine_image_box(&shifted, &DVector::zeros(n), &wbox)?;
    Ok(DeadTimeShift { x_tight, w })
}

/// Delay-compensated, input-rate system
/// `x(t+1) = A x(t) + B Δū(t) + w(t)` with `x = [s, v, a, latent..., ū(t-1)]`,
/// where the physical part of `x(t)` is the nominal prediction of the plant
/// state `d` samples ahead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantModel {
    #[serde(with = "crate::serde_mat::matrix")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub b: DVector<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub c: DMatrix<f64>,
    pub d: usize,
    pub dt: f64,
    pub state_labels: Vec<String>,
    /// Pre-shift model in `(s, v, a, latent...)` with input `ū(t-d)`.
    pub source: DelayedStateSpace,
    /// Tightened state constraints on the full state (position free).
    #[serde(rename = "X")]
    pub x_set: HPolytope,
    /// Input-rate constraints.
    #[serde(rename = "U")]
    pub u_set: HPolytope,
    /// Shifted disturbance image on the full state.
    #[serde(rename = "W")]
    pub w: BoxImage,
    pub w_a: Interval,
    pub limits: PlantLimits,
    #[serde(with = "crate::serde_mat::matrix")]
    pub a_breve: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    pub b_breve: DVector<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub c_breve: DMatrix<f64>,
    pub x_breve: HPolytope,
    pub w_breve: BoxImage,
    pub region: Region,
    pub is_backup: bool,
}

pub const IDX_S: usize = 0;
pub const IDX_V: usize = 1;
pub const IDX_A: usize = 2;

impl PlantModel {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nx_breve(&self) -> usize {
        self.a.nrows() - 1
    }

    pub fn u_prev_index(&self) -> usize {
        self.a.nrows() - 1
    }

    /// Dimension of the identified model's own state (acceleration + latent).
    pub fn id_order(&self) -> usize {
        self.a.nrows() - 3
    }

    pub fn step(&self, x: &DVector<f64>, du: f64) -> DVector<f64> {
        &self.a * x + &self.b * du
    }

    /// Delay-compensated state from the pre-shift state `x_pre` at time `t`,
    /// the buffered inputs `ū(t-d), ..., ū(t-1)` and `ū(t-1)`.
    pub fn compensate(&self, x_pre: &DVector<f64>, buffered: &[f64], u_prev: f64) -> Result<DVector<f64>> {
        if x_pre.len() != self.source.order() || buffered.len() != self.d {
            return Err(Error::Dimension(format!(
                "pre-shift state of length {} with {} buffered inputs; expected {} and {}",
                x_pre.len(),
                buffered.len(),
                self.source.order(),
                self.d
            )));
        }
        let mut x = x_pre.clone();
        for u in buffered {
            x = &self.source.a * x + &self.source.b * *u;
        }
        let mut out = DVector::zeros(self.nx());
        out.rows_mut(0, x.len()).copy_from(&x);
        out[self.u_prev_index()] = u_prev;
        Ok(out)
    }

    /// Breve coordinates: everything but the position.
    pub fn to_breve(&self, x: &DVector<f64>) -> DVector<f64> {
        x.rows(1, x.len() - 1).into_owned()
    }
}

/// Builds the delay-compensated, input-rate model from the augmented
/// `(s, v, a, latent)` realization.
#[allow(clippy::too_many_arguments)]
pub fn build_plant_model(
    ss: &DelayedStateSpace,
    w_a: Interval,
    x_va: &HPolytope,
    u_bar: Interval,
    du_bar: Interval,
    region: Region,
    is_backup: bool,
) -> Result<PlantModel> {
    let nb = ss.order();
    if nb < 3 || ss.c.nrows() != 3 {
        return Err(Error::Model("expected an (s, v, a, ...) augmented realization".into()));
    }
    if x_va.dim() != 2 {
        return Err(Error::Dimension("velocity/acceleration set must be 2-D".into()));
    }
    for (name, iv) in [("W_a", &w_a), ("u_bar", &u_bar), ("du_bar", &du_bar)] {
        if !iv.contains(0.0, 0.0) || !iv.lo.is_finite() || !iv.hi.is_finite() {
            return Err(Error::Config(format!("{name} must be bounded and contain 0")));
        }
    }
    let nx = nb + 1;
    let mut a = DMatrix::zeros(nx, nx);
    a.view_mut((0, 0), (nb, nb)).copy_from(&ss.a);
    a.view_mut((0, nb), (nb, 1)).copy_from(&ss.b);
    a[(nb, nb)] = 1.0;
    let mut b = DVector::zeros(nx);
    b.rows_mut(0, nb).copy_from(&ss.b);
    b[nb] = 1.0;
    let mut c = DMatrix::zeros(3, nx);
    c.view_mut((0, 0), (3, nb)).copy_from(&ss.c);

    let mut e = DVector::zeros(nx);
    e[IDX_A] = 1.0;
    let x_full = x_va
        .embed(nx, &[IDX_V, IDX_A])?
        .stack(&HPolytope::from_box(&[u_bar.lo], &[u_bar.hi]).embed(nx, &[nb])?)?;
    let shift = dead_time_shift(&a, &e, &w_a, &x_full, ss.d)?;
    if shift.x_tight.is_empty()? {
        return Err(Error::Synthesis("disturbance too large for constraints".into()));
    }
    if !shift.x_tight.contains_tol(&DVector::zeros(nx), 0.0) {
        return Err(Error::Synthesis(
            "origin is not inside the delay-tightened state constraints".into(),
        ));
    }
    let u_set = HPolytope::from_box(&[du_bar.lo], &[du_bar.hi]);

    let a_breve = a.view((1, 1), (nx - 1, nx - 1)).into_owned();
    let b_breve = b.rows(1, nx - 1).into_owned();
    let mut c_breve = DMatrix::zeros(2, nx - 1);
    c_breve[(0, 0)] = 1.0;
    c_breve[(1, 1)] = 1.0;
    let x_breve = HPolytope::new(
        shift.x_tight.normals().columns(1, nx - 1).into_owned(),
        shift.x_tight.offsets().clone(),
    )?;
    let shifted_e = crate::linalg::matrix_power(&a, ss.d) * &e;
    let w_breve = affine_image_box(
        &DMatrix::from_column_slice(nx - 1, 1, shifted_e.rows(1, nx - 1).as_slice()),
        &DVector::zeros(nx - 1),
        &w_a.to_box(),
    )?;

    let mut labels = vec!["s".to_string(), "v".to_string(), "a".to_string()];
    for k in 3..nb {
        labels.push(format!("latent{}", k - 2));
    }
    labels.push("u_prev".to_string());

    let bb = x_va.bounding_box()?;
    let limits = PlantLimits {
        w_a,
        v: Interval::new(bb.lo[0], bb.hi[0])?,
        a: Interval::new(bb.lo[1], bb.hi[1])?,
        u_bar,
        du_bar,
    };
    Ok(PlantModel {
        a,
        b,
        c,
        d: ss.d,
        dt: ss.dt,
        state_labels: labels,
        source: ss.clone(),
        x_set: shift.x_tight,
        u_set,
        w: shift.w,
        w_a,
        limits,
        a_breve,
        b_breve,
        c_breve,
        x_breve,
        w_breve,
        region,
        is_backup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{armax_to_ss, augment_position_velocity, ArmaxModel};

    fn region() -> Region {
        Region {
            v: Interval::new(0.0, 5.0).unwrap(),
            a: Interval::new(-1.0, 1.0).unwrap(),
        }
    }

    fn build(m: &ArmaxModel, w: f64) -> PlantModel {
        let ss = augment_position_velocity(&armax_to_ss(m).unwrap(), m.dt).unwrap();
        let lim = PlantLimits {
            w_a: Interval::symmetric(w),
            v: Interval::new(-1.0, 20.0).unwrap(),
            a: Interval::new(-4.0, 3.0).unwrap(),
            u_bar: Interval::new(-4.0, 3.0).unwrap(),
            du_bar: Interval::symmetric(0.15),
        };
        build_plant_model(&ss, lim.w_a, &lim.x_va(), lim.u_bar, lim.du_bar, region(), false).unwrap()
    }

    #[test]
    fn scalar_chain_tightening() {
        // a+ = 0.5 a + u(t-2) + w, |a| <= 1, W = [-0.1, 0.1].
        let a = DMatrix::from_element(1, 1, 0.5);
        let e = DVector::from_element(1, 1.0);
        let x = HPolytope::from_box(&[-1.0], &[1.0]);
        let s = dead_time_shift(&a, &e, &Interval::symmetric(0.1), &x, 2).unwrap();
        let expected = HPolytope::from_box(&[-0.85], &[0.85]);
        assert!(s.x_tight.set_equal(&expected, 1e-12).unwrap());
        assert!((s.w.support(&DVector::from_element(1, 1.0)).unwrap() - 0.025).abs() < 1e-15);
    }

    #[test]
    fn zero_disturbance_is_identity() {
        let m = ArmaxModel::new(vec![-0.9], vec![0.1], vec![], 4, 0.04).unwrap();
        let p = build(&m, 0.0);
        let mut nominal = PlantLimits {
            w_a: Interval::symmetric(0.0),
            ..p.limits
        }
        .x_va()
        .embed(p.nx(), &[IDX_V, IDX_A])
        .unwrap();
        nominal = nominal
            .stack(
                &HPolytope::from_box(&[-4.0], &[3.0])
                    .embed(p.nx(), &[p.u_prev_index()])
                    .unwrap(),
            )
            .unwrap();
        assert!(p.x_set.set_equal(&nominal, 1e-12).unwrap());
        assert_eq!(p.w.support(&DVector::from_element(p.nx(), 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn block_structure() {
        let m = ArmaxModel::new(vec![-1.1, 0.24], vec![0.14, 0.02], vec![], 3, 0.04).unwrap();
        let p = build(&m, 0.05);
        for i in 1..p.nx() {
            assert_eq!(p.a[(i, IDX_S)], 0.0);
        }
        assert_eq!(p.b[IDX_S], 0.0);
        assert_eq!(p.a[(IDX_S, IDX_S)], 1.0);
        assert_eq!(p.a[(IDX_S, IDX_V)], 0.04);
        assert_eq!(p.a[(IDX_V, IDX_A)], 0.04);
        assert_eq!(p.state_labels.last().unwrap(), "u_prev");
        assert_eq!(p.d, 2);
    }

    #[test]
    fn shifted_prediction_matches_buffered_plant() {
        let m = ArmaxModel::new(vec![-1.25, 0.34], vec![0.06, 0.03], vec![], 3, 0.04).unwrap();
        let p = build(&m, 0.05);
        let d = p.d;
        let steps = 100;
        let u: Vec<f64> = (0..steps + d).map(|k| ((k * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        // Pre-shift plant with an explicit FIFO; inputs before t=0 are the
        // first d entries of u.
        let x0 = DVector::from_vec(vec![0.3, 2.0, 0.1, -0.05]);
        let mut xs = vec![x0.clone()];
        for k in 0..steps + d {
            let x = &p.source.a * &xs[k] + &p.source.b * u[k];
            xs.push(x);
        }
        // At t = 0 the buffer holds u[0..d], the last applied input is u[d-1].
        let mut z = p.compensate(&x0, &u[..d], u[d - 1]).unwrap();
        for k in 0..steps {
            let du = u[d + k] - z[p.u_prev_index()];
            let y = &p.c * &z;
            let y_ref = &p.source.c * &xs[k + d];
            assert!((y - y_ref).amax() < 1e-12);
            z = p.step(&z, du);
            assert!((z[p.u_prev_index()] - u[d + k]).abs() < 1e-15);
        }
    }

    #[test]
    fn input_rate_bookkeeping() {
        let m = ArmaxModel::new(vec![-0.8], vec![0.12, 0.08], vec![], 2, 0.04).unwrap();
        let p = build(&m, 0.05);
        let mut z = DVector::zeros(p.nx());
        let u0 = 0.25;
        z[p.u_prev_index()] = u0;
        let mut total = u0;
        for k in 0..200 {
            let du = 0.1 * ((k as f64) * 0.37).sin();
            z = p.step(&z, du);
            total += du;
            assert_eq!(z[p.u_prev_index()], total);
        }
    }

    #[test]
    fn breve_disturbance_drops_position() {
        let m = ArmaxModel::new(vec![-0.85], vec![0.15], vec![], 3, 0.04).unwrap();
        let p = build(&m, 0.05);
        assert!(p.w.degenerate);
        assert_eq!(p.w_breve.center.len(), p.nx_breve());
        for j in 0..p.nx_breve() {
            let mut dir = DVector::zeros(p.nx_breve());
            dir[j] = 1.0;
            let mut full = DVector::zeros(p.nx());
            full[j + 1] = 1.0;
            assert!((p.w_breve.support(&dir).unwrap() - p.w.support(&full).unwrap()).abs() < 1e-15);
        }
    }
}
