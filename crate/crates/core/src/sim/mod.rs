//! Closed-loop simulation harness.

mod metrics;
mod noise;
mod output;
mod plant;
mod reference;

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, percentile, LimitTable, Metrics, SolveTimeStats, Violations, VIOLATION_TOL};
pub use noise::{bounded_noise, HOLD_FRACTION};
pub use output::{format_sig, read_csv, render_svg, write_csv, CSV_HEADER};
pub use plant::Plant;
pub use reference::{generate_reference, ReferenceProfile};

use crate::controller::{Controller, ControllerConfig, QpStatus, StepDiagnostics};
use crate::defaults;
use crate::invariant_sets::{synthesize_bank, ControllerBundle, SynthesisConfig};
use crate::models::{Interval, ModelBank, PlantLimits};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisturbanceConfig {
    pub seed: u64,
    /// Acceleration disturbance bounds, m/s²; must lie inside the synthesis
    /// bounds.
    pub w_a: Interval,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            w_a: defaults::limits().w_a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub dt: f64,
    pub horizon: usize,
    pub duration: f64,
    pub reference: ReferenceProfile,
    pub disturbance: DisturbanceConfig,
    /// Model bank JSON, relative to the scenario file.
    pub bank: Option<PathBuf>,
    /// Directory with `model-<id>.bundle.json` files, relative to the
    /// scenario file.
    pub bundles: Option<PathBuf>,
    /// Upper velocity bound added to the state constraints, m/s.
    pub v_max: Option<f64>,
    /// Inject the disturbance on the measured acceleration instead of the
    /// plant state.
    pub feedback_noise: bool,
    pub limits: PlantLimits,
    pub controller: ControllerConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            dt: defaults::DT,
            horizon: defaults::HORIZON,
            duration: 33.0,
            reference: ReferenceProfile::default(),
            disturbance: DisturbanceConfig::default(),
            bank: None,
            bundles: None,
            v_max: None,
            feedback_noise: false,
            limits: defaults::limits(),
            controller: ControllerConfig::default(),
        }
    }
}

impl Scenario {
    /// Hard acceleration through the 5 m/s boundary of
    /// [`defaults::adversarial_bank`].
    pub fn adversarial() -> Self {
        Self {
            duration: 20.0,
            reference: ReferenceProfile {
                cruise_speed: 10.0,
                accel: 2.0,
                decel: 2.0,
                start_time: 1.0,
                cruise_time: 5.0,
            },
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut sc: Scenario =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut sc.bank, &mut sc.bundles].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.duration >= 0.0) || self.horizon == 0 {
            return Err(Error::Config("dt, duration and horizon must be positive".into()));
        }
        self.reference.validate()?;
        if !self.limits.w_a.contains_interval(&self.disturbance.w_a) {
            return Err(Error::Config("disturbance bounds exceed the synthesis bounds".into()));
        }
        if let Some(v) = self.v_max {
            if !(v > 0.0) {
                return Err(Error::Config("v_max must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Limits for counting violations: the scenario limits, per-model
    /// overrides from the bank and the velocity cap.
    pub fn limit_table(&self, bank: Option<&ModelBank>) -> LimitTable {
        let mut lt = LimitTable::uniform(self.limits);
        lt.v_max = self.v_max;
        for e in bank.iter().flat_map(|b| &b.models) {
            if let Some(l) = e.limits {
                lt.per_model.insert(e.id.clone(), l);
            }
        }
        lt
    }

    pub fn synthesis_config(&self) -> SynthesisConfig {
        SynthesisConfig {
            horizon: self.horizon,
            limits: self.limits,
            v_max: self.v_max,
            ..SynthesisConfig::default()
        }
    }
}

/// Loads the bank and bundles named by the scenario. Bundles are
/// synthesized when none are given or when a velocity cap is requested.
pub fn load_assets(sc: &Scenario) -> Result<(ModelBank, Vec<ControllerBundle>)> {
    let bank = match &sc.bank {
        Some(p) => ModelBank::load(p)?,
        None => return Err(Error::Config("scenario names no model bank".into())),
    };
    if (bank.dt - sc.dt).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "scenario dt {} differs from bank dt {}",
            sc.dt, bank.dt
        )));
    }
    let bundles = match (&sc.bundles, sc.v_max) {
        (Some(dir), None) => load_bundles(dir, &bank)?,
        _ => synthesize_bank(&bank, &sc.synthesis_config())?,
    };
    if bundles.iter().any(|b| b.horizon != sc.horizon) {
        return Err(Error::Config("bundle horizon differs from the scenario horizon".into()));
    }
    Ok((bank, bundles))
}

pub fn load_bundles(dir: &Path, bank: &ModelBank) -> Result<Vec<ControllerBundle>> {
    bank.models
        .iter()
        .map(|e| ControllerBundle::load(&dir.join(format!("model-{}.bundle.json", e.id))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub t: f64,
    pub s_ref: f64,
    pub v_ref: f64,
    pub a_ref: f64,
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub u_bar: f64,
    pub du: f64,
    pub e_s: f64,
    pub model: String,
    pub switched: bool,
    pub backup: bool,
    pub qp_status: QpStatus,
    pub solve_time: f64,
}

#[derive(Debug, Clone)]
pub struct SimLog {
    pub rows: Vec<SimRow>,
    /// Controller diagnostics per step (not written to CSV).
    pub diagnostics: Vec<StepDiagnostics>,
}

impl SimLog {
    pub fn infeasible_steps(&self) -> usize {
        self.rows.iter().filter(|r| !r.qp_status.is_solved()).count()
    }

    pub fn relaxed_steps(&self) -> usize {
        self.rows.iter().filter(|r| r.qp_status == QpStatus::Relaxed).count()
    }

    pub fn switches(&self) -> usize {
        self.rows.iter().filter(|r| r.switched).count()
    }

    pub fn backup_entries(&self) -> usize {
        self.rows.iter().filter(|r| r.switched && r.backup).count()
    }

    pub fn max_tube_violation(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.tube_violation)
            .fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { a } else { a.max(b) })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimOptions {
    /// Record wall-clock solve times; otherwise they are written as zero so
    /// that logs are reproducible.
    pub wall_time: bool,
}

/// Runs the scenario. The plant uses the model selected by the controller's
/// switching signal at every step.
pub fn run_closed_loop(
    sc: &Scenario,
    bank: &ModelBank,
    bundles: Vec<ControllerBundle>,
    opts: SimOptions,
) -> Result<SimLog> {
    sc.validate()?;
    let reference = generate_reference(&sc.reference, sc.dt, sc.duration)?;
    let steps = sc.steps();
    let noise = bounded_noise(sc.disturbance.seed, sc.disturbance.w_a, steps);
    let mut ctrl = Controller::new(bank.clone(), bundles, sc.controller.clone())?;
    let mut plant = Plant::new(bank);
    ctrl.reset(&DVector::from_column_slice(&plant.output()), 0.0);
    let mut rows = Vec::with_capacity(steps);
    let mut diagnostics = Vec::with_capacity(steps);
    for k in 0..steps {
        let [s, v, a] = plant.output();
        let a_meas = if sc.feedback_noise { a + noise[k] } else { a };
        let y = DVector::from_column_slice(&[s, v, a_meas]);
        let diag = ctrl.control_step(&y, &reference)?;
        let (s_ref, v_ref, a_ref) = reference.at(k);
        rows.push(SimRow {
            t: k as f64 * sc.dt,
            s_ref,
            v_ref,
            a_ref,
            s,
            v,
            a,
            u_bar: diag.u_bar,
            du: diag.du,
            e_s: s_ref - s,
            model: diag.model_id.clone(),
            switched: diag.switched,
            backup: diag.backup,
            qp_status: diag.qp_status,
            solve_time: if opts.wall_time { diag.solve_time } else { 0.0 },
        });
        let w = if sc.feedback_noise { 0.0 } else { noise[k] };
        plant.step(diag.active_model, diag.u_bar, w)?;
        diagnostics.push(diag);
    }
    Ok(SimLog { rows, diagnostics })
}
