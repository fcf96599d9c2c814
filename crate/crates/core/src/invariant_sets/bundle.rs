use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{backward_feasible_set, mpi_tracking, mrpi_outer, synthesize_feedback, tighten};
use crate::defaults;
use crate::geometry::HPolytope;
use crate::models::{
    acceleration_transform, armax_to_ss, augment_position_velocity, build_plant_model, ArmaxModel, ModelBank,
    PlantLimits, PlantModel, Region,
};
use crate::{Error, Result};

/// Diagonal LQR weights on the breve state `(v, a, latent..., ū(t-1))` and
/// the input rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrWeights {
    pub v: f64,
    pub a: f64,
    pub latent: f64,
    pub u_prev: f64,
    pub r: f64,
}

impl LqrWeights {
    pub fn q(&self, n: usize) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(n, n);
        q[(0, 0)] = self.v;
        q[(1, 1)] = self.a;
        for i in 2..n - 1 {
            q[(i, i)] = self.latent;
        }
        q[(n - 1, n - 1)] = self.u_prev;
        q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub horizon: usize,
    pub eps: f64,
    pub limits: PlantLimits,
    /// Optional upper velocity bound replacing `limits.v.hi`.
    pub v_max: Option<f64>,
    pub tube: LqrWeights,
    pub terminal: LqrWeights,
    /// Seed of the spread directions in the mRPI template.
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            horizon: defaults::HORIZON,
            eps: defaults::MRPI_EPS,
            limits: defaults::limits(),
            v_max: None,
            tube: LqrWeights {
                v: 1.0,
                a: 1.0,
                latent: 0.1,
                u_prev: 0.1,
                r: 20.0,
            },
            terminal: LqrWeights {
                v: 1e-3,
                a: 1.0,
                latent: 0.1,
                u_prev: 1.0,
                r: 50.0,
            },
            seed: 7,
        }
    }
}

impl SynthesisConfig {
    pub fn effective_limits(&self, over: Option<&PlantLimits>) -> Result<PlantLimits> {
        let mut l = *over.unwrap_or(&self.limits);
        if let Some(vmax) = self.v_max {
            if !(vmax > l.v.lo.max(0.0)) {
                return Err(Error::Config(format!("v_max {vmax} leaves no admissible velocity")));
            }
            l.v.hi = l.v.hi.min(vmax);
        }
        Ok(l)
    }
}

/// Offline artifacts of one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerBundle {
    pub model_id: String,
    pub plant: PlantModel,
    #[serde(rename = "N")]
    pub horizon: usize,
    /// Tube gain on the breve state.
    #[serde(rename = "K", with = "crate::serde_mat::matrix")]
    pub k: DMatrix<f64>,
    /// Terminal gain on the full state; zero on the position.
    #[serde(rename = "K_tr", with = "crate::serde_mat::matrix")]
    pub k_tr: DMatrix<f64>,
    #[serde(rename = "Z")]
    pub z: HPolytope,
    pub eps: f64,
    pub mrpi_terms: usize,
    pub mrpi_alpha: f64,
    #[serde(rename = "X_tight")]
    pub x_tight: HPolytope,
    #[serde(rename = "U_tight")]
    pub u_tight: HPolytope,
    #[serde(rename = "X_tilde")]
    pub x_tilde: HPolytope,
    #[serde(rename = "U_tilde")]
    pub u_tilde: HPolytope,
    #[serde(rename = "O_breve")]
    pub o_breve: HPolytope,
    /// Terminal set under the model's own tightened constraints, used when
    /// the multi-model constraints are switched off.
    #[serde(rename = "O_breve_own")]
    pub o_breve_own: HPolytope,
    #[serde(rename = "F")]
    pub f: HPolytope,
    #[serde(rename = "F_all")]
    pub f_all: HPolytope,
    #[serde(rename = "F_all_minus_S")]
    pub f_all_minus_s: HPolytope,
    /// Intersection of all feasibility sets projected on the shared
    /// coordinates; `F_all = F ∩ F_shared`.
    #[serde(rename = "F_shared")]
    pub f_shared: HPolytope,
    #[serde(rename = "M_theta")]
    pub m_theta: Vec<f64>,
    /// Breve indices of the physically shared coordinates `(v, a, ū(t-1))`.
    pub shared_coords: Vec<usize>,
}

impl ControllerBundle {
    pub fn nx(&self) -> usize {
        self.plant.nx()
    }

    pub fn nb(&self) -> usize {
        self.plant.nx_breve()
    }

    /// Closed loop of the tube feedback on the breve state.
    pub fn a_k(&self) -> DMatrix<f64> {
        &self.plant.a_breve + DMatrix::from_column_slice(self.nb(), 1, self.plant.b_breve.as_slice()) * &self.k
    }

    pub fn k_tr_breve(&self) -> DMatrix<f64> {
        self.k_tr.columns(1, self.nb()).into_owned()
    }

    pub fn file_name(&self) -> String {
        format!("model-{}.bundle.json", self.model_id)
    }

    pub fn save(&self, dir: &Path) -> Result<std::path::PathBuf> {
        let path = dir.join(self.file_name());
        let f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        serde_json::to_writer(f, self)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(
            path,
        )?))?)
    }
}

fn shared_coords(nb: usize) -> Vec<usize> {
    vec![0, 1, nb - 1]
}

/// Restricts a set whose rows only involve the shared coordinates to those
/// coordinates.
fn restrict_to_shared(p: &HPolytope, coords: &[usize]) -> Result<HPolytope> {
    let g = p.normals();
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if !coords.contains(&j) && g[(i, j)].abs() > 1e-12 {
                return Err(Error::Synthesis("constraint couples a model-specific state".into()));
            }
        }
    }
    let cols: Vec<_> = coords.iter().map(|&c| g.column(c).into_owned()).collect();
    HPolytope::new(DMatrix::from_columns(&cols), p.offsets().clone())
}

/// Per-model stage before the first barrier.
struct Stage1 {
    id: String,
    plant: PlantModel,
    k: DMatrix<f64>,
    z: HPolytope,
    mrpi_terms: usize,
    alpha: f64,
    x_tight: HPolytope,
    u_tight: HPolytope,
}

fn stage_one(
    id: &str,
    model: &ArmaxModel,
    limits: &PlantLimits,
    region: Region,
    is_backup: bool,
    cfg: &SynthesisConfig,
) -> Result<Stage1> {
    let ss = augment_position_velocity(&acceleration_transform(&armax_to_ss(model)?)?, model.dt)?;
    let plant = build_plant_model(
        &ss,
        limits.w_a,
        &limits.x_va(),
        limits.u_bar,
        limits.du_bar,
        region,
        is_backup,
    )?;
    let nb = plant.nx_breve();
    let k = synthesize_feedback(&plant.a_breve, &plant.b_breve, &cfg.tube.q(nb), cfg.tube.r)?;
    let a_k = &plant.a_breve + DMatrix::from_column_slice(nb, 1, plant.b_breve.as_slice()) * &k;
    let mrpi = mrpi_outer(&a_k, &plant.w_breve, cfg.eps, cfg.seed)?;
    let (x_tight, u_tight) =
        tighten(&plant.x_breve, &plant.u_set, &mrpi.z, &k).map_err(|e| Error::Synthesis(format!("model {id}: {e}")))?;
    Ok(Stage1 {
        id: id.to_string(),
        plant,
        k,
        z: mrpi.z,
        mrpi_terms: mrpi.s,
        alpha: mrpi.alpha,
        x_tight,
        u_tight,
    })
}

/// Synthesizes a single-model bundle (the cross-model sets equal its own).
pub fn synthesize_model(
    id: &str,
    model: &ArmaxModel,
    region: Region,
    is_backup: bool,
    cfg: &SynthesisConfig,
) -> Result<ControllerBundle> {
    let limits = cfg.effective_limits(None)?;
    let s1 = stage_one(id, model, &limits, region, is_backup, cfg)?;
    let mut bundles = finish(vec![s1], cfg)?;
    Ok(bundles.remove(0))
}

/// Synthesizes every model of the bank; per-model work runs in parallel
/// between the two cross-model barriers.
pub fn synthesize_bank(bank: &ModelBank, cfg: &SynthesisConfig) -> Result<Vec<ControllerBundle>> {
    bank.validate()?;
    if cfg.horizon == 0 {
        return Err(Error::Config("horizon must be at least one step".into()));
    }
    let stage: Vec<Stage1> = bank
        .models
        .par_iter()
        .map(|e| {
            let limits = cfg.effective_limits(e.limits.as_ref())?;
            stage_one(&e.id, &e.model, &limits, e.region, e.is_backup, cfg)
        })
        .collect::<Result<_>>()?;
    finish(stage, cfg)
}

fn finish(stage: Vec<Stage1>, cfg: &SynthesisConfig) -> Result<Vec<ControllerBundle>> {
    // Barrier one: shared state and input constraints.
    let shared: Vec<HPolytope> = stage
        .iter()
        .map(|s| restrict_to_shared(&s.x_tight, &shared_coords(s.plant.nx_breve())))
        .collect::<Result<_>>()?;
    let x_shared = HPolytope::intersect_all(&shared)?;
    let u_tilde = HPolytope::intersect_all(&stage.iter().map(|s| s.u_tight.clone()).collect::<Vec<_>>())?;
    if x_shared.is_empty()? || u_tilde.is_empty()? {
        return Err(Error::Synthesis("models mutually infeasible".into()));
    }

    let partial: Vec<ControllerBundle> = stage
        .into_par_iter()
        .map(|s| {
            let nb = s.plant.nx_breve();
            let coords = shared_coords(nb);
            let x_tilde = x_shared.embed(nb, &coords)?;
            let k_tr_b = synthesize_feedback(&s.plant.a_breve, &s.plant.b_breve, &cfg.terminal.q(nb), cfg.terminal.r)?;
            let m = x_tilde.cartesian_product(&u_tilde);
            let o_breve = mpi_tracking(&s.plant.a_breve, &s.plant.b_breve, &k_tr_b, &m)
                .map_err(|e| Error::Synthesis(format!("model {}: {e}", s.id)))?;
            let m_own = s.x_tight.cartesian_product(&s.u_tight);
            let o_breve_own = mpi_tracking(&s.plant.a_breve, &s.plant.b_breve, &k_tr_b, &m_own)
                .map_err(|e| Error::Synthesis(format!("model {}: {e}", s.id)))?;
            let f = backward_feasible_set(
                &s.plant.a_breve,
                &s.plant.b_breve,
                &o_breve,
                cfg.horizon,
                &x_tilde,
                &u_tilde,
            )
            .map_err(|e| Error::Synthesis(format!("model {}: {e}", s.id)))?;
            let mut k_tr = DMatrix::zeros(1, nb + 1);
            k_tr.view_mut((0, 1), (1, nb)).copy_from(&k_tr_b);
            let mut m_theta = vec![0.0; nb + 1];
            m_theta[0] = 1.0;
            Ok(ControllerBundle {
                model_id: s.id,
                horizon: cfg.horizon,
                k: s.k,
                k_tr,
                z: s.z,
                eps: cfg.eps,
                mrpi_terms: s.mrpi_terms,
                mrpi_alpha: s.alpha,
                x_tight: s.x_tight,
                u_tight: s.u_tight,
                x_tilde,
                u_tilde: u_tilde.clone(),
                f_all: f.clone(),
                f_all_minus_s: f.clone(),
                o_breve,
                o_breve_own,
                f_shared: HPolytope::universe(3),
                f,
                m_theta,
                shared_coords: coords,
                plant: s.plant,
            })
        })
        .collect::<Result<_>>()?;
    cross_model_intersections(partial)
}

/// Intersects the feasibility sets in the shared coordinates and stores
/// `F_all` and `F_all ⊖ Z` on every bundle.
pub fn cross_model_intersections(mut bundles: Vec<ControllerBundle>) -> Result<Vec<ControllerBundle>> {
    if bundles.is_empty() {
        return Err(Error::Synthesis("no bundles to intersect".into()));
    }
    let projected: Vec<HPolytope> = bundles
        .par_iter()
        .map(|b| b.f.project(&b.shared_coords))
        .collect::<Result<_>>()?;
    let f_shared = HPolytope::intersect_all(&projected)?;
    if f_shared.is_empty()? {
        return Err(Error::Synthesis(
            "models mutually infeasible: feasibility sets do not intersect".into(),
        ));
    }
    bundles.par_iter_mut().try_for_each(|b| -> Result<()> {
        let nb = b.nb();
        let f_all = b.f.intersect(&f_shared.embed(nb, &b.shared_coords)?)?;
        let origin = DVector::zeros(nb);
        if !f_all.contains(&origin) {
            return Err(Error::Synthesis(format!("model {}: origin outside F_all", b.model_id)));
        }
        let minus = f_all.pontryagin_diff(&b.z)?;
        if minus.is_empty()? {
            return Err(Error::Synthesis(format!("model {}: F_all ⊖ Z is empty", b.model_id)));
        }
        b.f_all = f_all;
        b.f_shared = f_shared.clone();
        b.f_all_minus_s = minus.remove_redundancy()?;
        Ok(())
    })?;
    Ok(bundles)
}
