use std::ops::Range;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::observer::{observer_gain, observer_step, ObserverState};
use super::prediction::{
    build_error_maps, build_prediction, offset_cost_maps, CostMaps, CostWeights, ReferenceTrajectory,
};
use super::qp::{PreparedQp, QpProblem, QpSolution, QpStatus};
use super::switching::{switching_signal, Switcher};
use crate::defaults;
use crate::geometry::HPolytope;
use crate::invariant_sets::ControllerBundle;
use crate::models::ModelBank;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub weights: CostWeights,
    /// Multi-model feasibility constraints and intersected sets.
    pub mmrrf: bool,
    pub dwell: usize,
    pub observer_radius: f64,
    /// Hessian regularizer on the tube offset, measured state and θ.
    pub regularization: f64,
    /// When the multi-model problem is infeasible, solve the problem without
    /// the feasible-set rows before holding the command.
    pub relax_on_infeasible: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            mmrrf: true,
            dwell: defaults::DWELL,
            observer_radius: 0.5,
            regularization: 1e-6,
            relax_on_infeasible: true,
        }
    }
}

/// Offsets of the blocks of `O = [U, o2, o3, θ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub horizon: usize,
    pub nb: usize,
}

impl Layout {
    pub fn u(&self) -> Range<usize> {
        0..self.horizon
    }
    pub fn o2(&self) -> Range<usize> {
        self.horizon..self.horizon + self.nb
    }
    pub fn o3(&self) -> Range<usize> {
        self.horizon + self.nb..self.horizon + 2 * self.nb
    }
    pub fn theta(&self) -> usize {
        self.horizon + 2 * self.nb
    }
    pub fn len(&self) -> usize {
        self.horizon + 2 * self.nb + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    Tube,
    State(usize),
    Input(usize),
    Terminal,
    Feasible(usize),
    FeasibleMinusTube,
}

/// Inequality rows `A O <= b` and the equality block `o3 = x̆_meas`.
#[derive(Debug, Clone)]
pub struct Constraints {
    pub layout: Layout,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub blocks: Vec<(Block, Range<usize>)>,
}

struct RowBuilder {
    layout: Layout,
    gamma: DMatrix<f64>,
    omega: DMatrix<f64>,
    rows: Vec<DVector<f64>>,
    rhs: Vec<f64>,
    blocks: Vec<(Block, Range<usize>)>,
}

impl RowBuilder {
    /// `G z(i) <= g` for the nominal breve state at step `i`.
    fn state(&mut self, block: Block, p: &HPolytope, i: usize) {
        let nb = self.layout.nb;
        let start = self.rows.len();
        for (r, g) in p.normals().row_iter().zip(p.offsets().iter()) {
            let h = r.transpose();
            let mut row = DVector::zeros(self.layout.len());
            if i == 0 {
                row.rows_mut(self.layout.o2().start, nb).copy_from(&-&h);
                row.rows_mut(self.layout.o3().start, nb).copy_from(&h);
            } else {
                let gi = self.gamma.rows((i - 1) * nb, nb);
                let oi = self.omega.rows((i - 1) * nb, nb);
                let hu = gi.transpose() * &h;
                let hz = oi.transpose() * &h;
                row.rows_mut(0, self.layout.horizon).copy_from(&hu);
                row.rows_mut(self.layout.o2().start, nb).copy_from(&-&hz);
                row.rows_mut(self.layout.o3().start, nb).copy_from(&hz);
            }
            self.rows.push(row);
            self.rhs.push(*g);
        }
        self.blocks.push((block, start..self.rows.len()));
    }

    fn input(&mut self, p: &HPolytope, i: usize) {
        let start = self.rows.len();
        for (r, g) in p.normals().row_iter().zip(p.offsets().iter()) {
            let mut row = DVector::zeros(self.layout.len());
            row[i] = r[0];
            self.rows.push(row);
            self.rhs.push(*g);
        }
        self.blocks.push((Block::Input(i), start..self.rows.len()));
    }

    fn tube(&mut self, z: &HPolytope) {
        let nb = self.layout.nb;
        let start = self.rows.len();
        for (r, g) in z.normals().row_iter().zip(z.offsets().iter()) {
            let mut row = DVector::zeros(self.layout.len());
            row.rows_mut(self.layout.o2().start, nb).copy_from(&r.transpose());
            self.rows.push(row);
            self.rhs.push(*g);
        }
        self.blocks.push((Block::Tube, start..self.rows.len()));
    }
}

/// Constraint rows of the problem for one bundle. With `mmrrf` the shared
/// sets and the feasibility constraints are used; without, the model's own
/// tightened sets and terminal set.
///
/// `z(i) ∈ F_all` is imposed through its shared-coordinate factor: the
/// model's own `F` is implied by the remaining constraints since the
/// nominal trajectory reaches the terminal set within the horizon.
pub fn assemble_constraints(bundle: &ControllerBundle, mmrrf: bool) -> Result<Constraints> {
    let nb = bundle.nb();
    let n = bundle.horizon;
    let layout = Layout { horizon: n, nb };
    let (gamma, omega) = build_prediction(&bundle.plant.a_breve, &bundle.plant.b_breve, n)?;
    let mut rb = RowBuilder {
        layout,
        gamma,
        omega,
        rows: Vec::new(),
        rhs: Vec::new(),
        blocks: Vec::new(),
    };
    let (x_set, u_set, term) = if mmrrf {
        (&bundle.x_tilde, &bundle.u_tilde, &bundle.o_breve)
    } else {
        (&bundle.x_tight, &bundle.u_tight, &bundle.o_breve_own)
    };
    rb.tube(&bundle.z);
    for i in 0..=n {
        rb.state(Block::State(i), x_set, i);
    }
    for i in 0..n {
        rb.input(u_set, i);
    }
    rb.state(Block::Terminal, term, n);
    if mmrrf {
        let shared = bundle.f_shared.embed(nb, &bundle.shared_coords)?;
        for i in 0..=n {
            rb.state(Block::Feasible(i), &shared, i);
        }
        rb.state(Block::FeasibleMinusTube, &bundle.f_all_minus_s, 1);
    }
    let m = rb.rows.len();
    let mut a_ineq = DMatrix::zeros(m, layout.len());
    for (i, r) in rb.rows.iter().enumerate() {
        a_ineq.set_row(i, &r.transpose());
    }
    let mut a_eq = DMatrix::zeros(nb, layout.len());
    for j in 0..nb {
        a_eq[(j, layout.o3().start + j)] = 1.0;
    }
    Ok(Constraints {
        layout,
        a_ineq,
        b_ineq: DVector::from_vec(rb.rhs),
        a_eq,
        blocks: rb.blocks,
    })
}

/// Decoded optimizer.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub u: DVector<f64>,
    pub o2: DVector<f64>,
    pub o3: DVector<f64>,
    pub theta: f64,
    /// Nominal breve trajectory `z(0..=N)` from `x̆_rob = o3 - o2`.
    pub z: Vec<DVector<f64>>,
}

pub fn decode(bundle: &ControllerBundle, o: &DVector<f64>) -> Decoded {
    let layout = Layout {
        horizon: bundle.horizon,
        nb: bundle.nb(),
    };
    let u = o.rows(0, layout.horizon).into_owned();
    let o2 = o.rows(layout.o2().start, layout.nb).into_owned();
    let o3 = o.rows(layout.o3().start, layout.nb).into_owned();
    let mut z = vec![&o3 - &o2];
    for i in 0..layout.horizon {
        let next = &bundle.plant.a_breve * &z[i] + &bundle.plant.b_breve * u[i];
        z.push(next);
    }
    Decoded {
        u,
        o2,
        o3,
        theta: o[layout.theta()],
        z,
    }
}

/// Direct membership check of a decoded solution against the sets.
/// Membership tolerance of the decoded optimizer.
pub const DECODE_TOL: f64 = 1e-6;

pub fn check_decoded(
    bundle: &ControllerBundle,
    d: &Decoded,
    x_meas: &DVector<f64>,
    mmrrf: bool,
    tol: f64,
) -> std::result::Result<(), String> {
    let n = bundle.horizon;
    if (&d.o3 - x_meas).amax() > tol {
        return Err("o3 differs from the measured state".into());
    }
    if !bundle.z.contains_tol(&d.o2, tol) {
        return Err("tube offset outside Z".into());
    }
    let (x_set, u_set, term) = if mmrrf {
        (&bundle.x_tilde, &bundle.u_tilde, &bundle.o_breve)
    } else {
        (&bundle.x_tight, &bundle.u_tight, &bundle.o_breve_own)
    };
    for (i, z) in d.z.iter().enumerate() {
        if !x_set.contains_tol(z, tol) {
            return Err(format!("state {i} outside the tightened state set"));
        }
        if mmrrf && !bundle.f_all.contains_tol(z, tol) {
            return Err(format!("state {i} outside F_all"));
        }
    }
    for i in 0..n {
        if !u_set.contains_tol(&DVector::from_element(1, d.u[i]), tol) {
            return Err(format!("input {i} outside the tightened input set"));
        }
    }
    if !term.contains_tol(&d.z[n], tol) {
        return Err("terminal state outside the terminal set".into());
    }
    if mmrrf && !bundle.f_all_minus_s.contains_tol(&d.z[1], tol) {
        return Err("first state outside F_all ⊖ Z".into());
    }
    Ok(())
}

/// Tube law `Δū = u*(0) + K (x̆_meas - x̆*_rob)`.
pub fn tube_feedback(o: &DVector<f64>, bundle: &ControllerBundle) -> f64 {
    let d = decode(bundle, o);
    d.u[0] + (&bundle.k * &d.o2)[0]
}

/// Per-model data that stays fixed between samples.
#[derive(Debug, Clone)]
struct ModelQp {
    prepared: PreparedQp,
    /// Problem without the feasible-set rows and its right-hand side.
    relaxed: Option<(PreparedQp, DVector<f64>)>,
    constraints: Constraints,
    cost: CostMaps,
    h: DMatrix<f64>,
}

impl ModelQp {
    fn new(bundle: &ControllerBundle, cfg: &ControllerConfig) -> Result<Self> {
        let constraints = assemble_constraints(bundle, cfg.mmrrf)?;
        let n = bundle.horizon;
        let (gamma, omega) = build_prediction(&bundle.plant.a, &bundle.plant.b, n)?;
        let dummy = crate::controller::prediction::ReferenceWindow {
            t: (0..=n).map(|k| k as f64).collect(),
            s: vec![0.0; n + 1],
            v: vec![0.0; n + 1],
            a: vec![0.0; n + 1],
        };
        let maps = build_error_maps(&dummy, n, bundle.nx())?;
        let cost = offset_cost_maps(&gamma, &omega, &maps.lambda, &cfg.weights)?;
        let nv = constraints.layout.len();
        let mut h = DMatrix::zeros(nv, nv);
        let m = cost.h_u.nrows();
        h.view_mut((0, 0), (m, m)).copy_from(&cost.h_u);
        let delta = cfg.regularization * (1.0 + cost.h_u.diagonal().amax());
        for i in n..nv {
            h[(i, i)] += delta;
        }
        let prepared = PreparedQp::new(&h, &constraints.a_ineq, &constraints.a_eq)?;
        let relaxed = if cfg.mmrrf && cfg.relax_on_infeasible {
            let keep: Vec<usize> = constraints
                .blocks
                .iter()
                .filter(|(b, _)| !matches!(b, Block::Feasible(_) | Block::FeasibleMinusTube))
                .flat_map(|(_, r)| r.clone())
                .collect();
            let a = constraints.a_ineq.select_rows(&keep);
            let b = constraints.b_ineq.select_rows(&keep);
            Some((PreparedQp::new(&h, &a, &constraints.a_eq)?, b))
        } else {
            None
        };
        Ok(Self {
            prepared,
            relaxed,
            constraints,
            cost,
            h,
        })
    }

    fn linear_term(
        &self,
        x_t: &DVector<f64>,
        window: &crate::controller::prediction::ReferenceWindow,
    ) -> Result<DVector<f64>> {
        let n = self.constraints.layout.horizon;
        let maps = build_error_maps(window, n, x_t.len())?;
        let mut f = DVector::zeros(self.constraints.layout.len());
        let m = self.cost.h_u.nrows();
        f.rows_mut(0, m)
            .copy_from(&(&self.cost.f_r * &maps.r_all + &self.cost.f_x * x_t));
        Ok(f)
    }
}

/// Builds the full QP for one bundle at a measured state.
pub fn build_qp(
    bundle: &ControllerBundle,
    cfg: &ControllerConfig,
    x_meas: &DVector<f64>,
    window: &crate::controller::prediction::ReferenceWindow,
) -> Result<QpProblem> {
    let mq = ModelQp::new(bundle, cfg)?;
    let f = mq.linear_term(x_meas, window)?;
    Ok(QpProblem {
        h: mq.h.clone(),
        f,
        a_ineq: mq.constraints.a_ineq.clone(),
        b_ineq: mq.constraints.b_ineq.clone(),
        a_eq: mq.constraints.a_eq.clone(),
        b_eq: bundle.plant.to_breve(x_meas),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub active_model: usize,
    pub model_id: String,
    pub switched: bool,
    pub backup: bool,
    pub qp_status: QpStatus,
    /// Wall-clock seconds spent assembling and solving the QP.
    pub solve_time: f64,
    pub cost: f64,
    pub terminal_active: bool,
    pub iterations: usize,
    pub du: f64,
    pub u_bar: f64,
    pub x_breve_meas: Vec<f64>,
    pub x_breve_rob: Vec<f64>,
    /// Largest violation of `x̆_meas - x̆_rob ∈ Z` (non-positive when contained).
    pub tube_violation: f64,
    /// Constraint blocks with at least one active row.
    pub active_blocks: Vec<Block>,
    /// First set-membership failure of the decoded optimizer, checked on
    /// optimal steps of the full problem.
    pub decode_error: Option<String>,
}

/// Serializable run-time state: observers, input history, switching and
/// warm starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub step: usize,
    pub observers: Vec<ObserverState>,
    /// `ū(t-1), ū(t-2), ...`
    pub u_hist: Vec<f64>,
    pub switcher: Switcher,
    pub warm: Vec<Vec<usize>>,
}

pub struct Controller {
    bank: ModelBank,
    bundles: Vec<ControllerBundle>,
    cfg: ControllerConfig,
    qps: Vec<ModelQp>,
    state: ControllerState,
}

impl Controller {
    /// `bundles` must follow the order of `bank.models`.
    pub fn new(bank: ModelBank, bundles: Vec<ControllerBundle>, cfg: ControllerConfig) -> Result<Self> {
        bank.validate()?;
        if bundles.len() != bank.models.len() {
            return Err(Error::Config(format!(
                "{} bundles for {} models",
                bundles.len(),
                bank.models.len()
            )));
        }
        for (b, e) in bundles.iter().zip(&bank.models) {
            if b.model_id != e.id {
                return Err(Error::Config(format!(
                    "bundle {} does not match model {}",
                    b.model_id, e.id
                )));
            }
            if (b.plant.dt - bank.dt).abs() > 1e-12 {
                return Err(Error::Config("bundle dt differs from the bank dt".into()));
            }
        }
        if bundles.windows(2).any(|w| w[0].horizon != w[1].horizon) {
            return Err(Error::Config("bundles use different horizons".into()));
        }
        cfg.weights.validate()?;
        let qps = bundles
            .iter()
            .map(|b| ModelQp::new(b, &cfg))
            .collect::<Result<Vec<_>>>()?;
        let max_d = bundles.iter().map(|b| b.plant.d).max().unwrap_or(0);
        let observers = bundles
            .iter()
            .map(|b| {
                let src = &b.plant.source;
                let l = observer_gain(&src.a, &src.c, cfg.observer_radius)?;
                Ok(ObserverState::new(DVector::zeros(src.order()), l))
            })
            .collect::<Result<Vec<_>>>()?;
        let active = switching_signal(0.0, 0.0, &bank);
        let state = ControllerState {
            step: 0,
            observers,
            u_hist: vec![0.0; max_d + 1],
            switcher: Switcher::new(active, cfg.dwell),
            warm: vec![Vec::new(); bundles.len()],
        };
        Ok(Self {
            bank,
            bundles,
            cfg,
            qps,
            state,
        })
    }

    pub fn bundles(&self) -> &[ControllerBundle] {
        &self.bundles
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn active_model(&self) -> usize {
        self.state.switcher.active
    }

    pub fn u_prev(&self) -> f64 {
        self.state.u_hist[0]
    }

    /// Initializes all observers at the measured `(s, v, a)` with zero latent
    /// states, and the input history at `u0`.
    pub fn reset(&mut self, y0: &DVector<f64>, u0: f64) {
        for o in &mut self.state.observers {
            o.x_hat.fill(0.0);
            o.x_hat.rows_mut(0, 3).copy_from(y0);
            o.innovations.clear();
        }
        self.state.u_hist.iter_mut().for_each(|u| *u = u0);
        self.state.step = 0;
        let active = switching_signal(y0[1], y0[2], &self.bank);
        self.state.switcher = Switcher::new(active, self.cfg.dwell);
        self.state.warm.iter_mut().for_each(Vec::clear);
    }

    pub fn checkpoint(&self) -> ControllerState {
        self.state.clone()
    }

    pub fn restore(&mut self, state: ControllerState) -> Result<()> {
        if state.observers.len() != self.bundles.len() || state.u_hist.len() != self.state.u_hist.len() {
            return Err(Error::Config("checkpoint does not match the controller".into()));
        }
        self.state = state;
        Ok(())
    }

    /// One sample: switching, delay compensation, QP, tube law, observer
    /// updates. `y` is the measured `(s, v, a)` and `reference` the full
    /// reference trajectory indexed by sample.
    pub fn control_step(&mut self, y: &DVector<f64>, reference: &ReferenceTrajectory) -> Result<StepDiagnostics> {
        if y.len() != 3 {
            return Err(Error::Dimension("measurement must be (s, v, a)".into()));
        }
        let k = self.state.step;
        let target = switching_signal(y[1], y[2], &self.bank);
        let switched = self.state.switcher.update(target);
        let l = self.state.switcher.active;
        let bundle = &self.bundles[l];
        let plant = &bundle.plant;
        let u_prev = self.state.u_hist[0];

        let started = Instant::now();
        let x_pre = self.state.observers[l].current(y);
        let buffered: Vec<f64> = (0..plant.d).rev().map(|j| self.state.u_hist[j]).collect();
        let x_c = plant.compensate(&x_pre, &buffered, u_prev)?;
        let xb = plant.to_breve(&x_c);
        let window = reference.window(k + plant.d, bundle.horizon);
        let qp = &self.qps[l];
        let f = qp.linear_term(&x_c, &window)?;
        let mut sol = qp
            .prepared
            .solve(&f, &qp.constraints.b_ineq, &xb, &self.state.warm[l])?;
        let mut relaxed = false;
        if sol.status != QpStatus::Optimal {
            if let Some((prep, b)) = &qp.relaxed {
                let alt = prep.solve(&f, b, &xb, &[])?;
                if alt.status == QpStatus::Optimal {
                    sol = alt;
                    relaxed = true;
                }
            }
        }
        let solve_time = started.elapsed().as_secs_f64();

        let mut decode_error = None;
        let (du, x_rob, tube_violation, cost, terminal_active) = if sol.status == QpStatus::Optimal {
            // Active indices of the relaxed problem refer to other rows.
            self.state.warm[l] = if relaxed { Vec::new() } else { sol.active.clone() };
            let d = decode(bundle, &sol.x);
            if !relaxed {
                decode_error = check_decoded(bundle, &d, &xb, self.cfg.mmrrf, DECODE_TOL).err();
            }
            let du = d.u[0] + (&bundle.k * &d.o2)[0];
            let e = &xb - &d.z[0];
            let term = qp
                .constraints
                .blocks
                .iter()
                .find(|(b, _)| *b == Block::Terminal)
                .map(|(_, r)| !relaxed && sol.active.iter().any(|i| r.contains(i)))
                .unwrap_or(false);
            let cost = 0.5 * sol.x.dot(&(&qp.h * &sol.x)) + f.dot(&sol.x);
            (du, d.z[0].clone(), bundle.z.max_violation(&e), cost, term)
        } else {
            self.state.warm[l].clear();
            (0.0, xb.clone(), f64::NAN, f64::NAN, false)
        };
        let active_blocks = if sol.status == QpStatus::Optimal && !relaxed {
            qp.constraints
                .blocks
                .iter()
                .filter(|(_, r)| sol.active.iter().any(|i| r.contains(i)))
                .map(|(b, _)| *b)
                .collect()
        } else {
            Vec::new()
        };
        let u_bar = u_prev + du;

        for (m, (obs, b)) in self.state.observers.iter_mut().zip(&self.bundles).enumerate() {
            let d = b.plant.d;
            let u_in = if d == 0 { u_bar } else { self.state.u_hist[d - 1] };
            let src = &b.plant.source;
            observer_step(obs, &src.a, &src.b, &src.c, u_in, y)
                .map_err(|e| Error::Numerical(format!("observer {m}: {e}")))?;
        }
        self.state.u_hist.rotate_right(1);
        self.state.u_hist[0] = u_bar;
        self.state.step += 1;

        Ok(StepDiagnostics {
            step: k,
            active_model: l,
            model_id: bundle.model_id.clone(),
            switched,
            backup: bundle.plant.is_backup,
            qp_status: if relaxed { QpStatus::Relaxed } else { sol.status },
            solve_time,
            cost,
            terminal_active,
            iterations: sol.iterations,
            du,
            u_bar,
            x_breve_meas: xb.iter().copied().collect(),
            x_breve_rob: x_rob.iter().copied().collect(),
            tube_violation,
            active_blocks,
            decode_error,
        })
    }

    /// Solves the QP of model `l` at a given compensated state without
    /// touching the run-time state.
    pub fn solve_at(
        &self,
        l: usize,
        x_c: &DVector<f64>,
        reference: &ReferenceTrajectory,
        k: usize,
    ) -> Result<QpSolution> {
        let bundle = &self.bundles[l];
        let qp = &self.qps[l];
        let window = reference.window(k + bundle.plant.d, bundle.horizon);
        let f = qp.linear_term(x_c, &window)?;
        qp.prepared
            .solve(&f, &qp.constraints.b_ineq, &bundle.plant.to_breve(x_c), &[])
    }
}
