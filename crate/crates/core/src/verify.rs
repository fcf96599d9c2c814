//! Property suite run on stored bundles and closed-loop logs.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{HPolytope, SupportFunction};
use crate::invariant_sets::{steering_feasible, ControllerBundle};
use crate::sim::{compute_metrics, LimitTable, SimLog};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub model: Option<String>,
    pub passed: bool,
    /// Check-specific figure: worst slack, worst excess or a rate.
    pub value: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, model: Option<&str>, passed: bool, value: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            model: model.map(Into::into),
            passed,
            value,
            detail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Boundary points of `Z` per bundle.
    pub boundary_samples: usize,
    /// Smallest accepted slack of `A_K z + w` in `Z`.
    pub mrpi_slack: f64,
    pub inside_samples: usize,
    pub outside_samples: usize,
    /// Points on the boundary of `F` are pushed out by this factor.
    pub outside_scale: f64,
    pub min_rejection: f64,
    /// Tolerance of the set-inclusion checks.
    pub set_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            boundary_samples: 1000,
            mrpi_slack: -1e-4,
            inside_samples: 200,
            outside_samples: 50,
            outside_scale: 1.05,
            min_rejection: 0.9,
            set_tol: 1e-6,
        }
    }
}

/// Distance along `d` from `c` to the boundary of `p`; `None` if the ray is
/// unbounded.
fn ray_length(p: &HPolytope, c: &DVector<f64>, d: &DVector<f64>) -> Option<f64> {
    let gd = p.normals() * d;
    let slack = p.offsets() - p.normals() * c;
    let mut t = f64::INFINITY;
    for i in 0..gd.len() {
        if gd[i] > 1e-14 {
            t = t.min(slack[i].max(0.0) / gd[i]);
        }
    }
    t.is_finite().then_some(t)
}

/// Points on the boundary of `p` by ray shooting from its Chebyshev center
/// in Gaussian directions, paired with the center. Unbounded rays are
/// redrawn.
pub fn boundary_points(p: &HPolytope, count: usize, seed: u64) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let (c, _) = p.chebyshev_center()?;
    let n = p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count && draws < 100 * count.max(1) {
        draws += 1;
        let d = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        if let Some(t) = ray_length(p, &c, &d) {
            out.push(&c + d * t);
        }
    }
    Ok((c, out))
}

/// `min_i (g_i - G_i x)`, negative when `x` lies outside.
fn slack(p: &HPolytope, x: &DVector<f64>) -> f64 {
    -p.max_violation(x)
}

/// Worst slack of `A_K z + w ∈ Z` over boundary points `z` of `Z` and all
/// vertices `w` of the disturbance set.
pub fn mrpi_slack(bundle: &ControllerBundle, samples: usize, seed: u64) -> Result<f64> {
    let a_k = bundle.a_k();
    let verts = bundle.plant.w_breve.vertices();
    let (_, pts) = boundary_points(&bundle.z, samples, seed)?;
    let mut worst = f64::INFINITY;
    for z in &pts {
        let az = &a_k * z;
        for w in &verts {
            worst = worst.min(slack(&bundle.z, &(&az + w)));
        }
    }
    Ok(worst)
}

/// Largest excess of `h_inner(g_i) + extra(g_i) - b_i` over the rows of
/// `outer`. Non-positive when `inner ⊕ extra ⊆ outer`.
fn inclusion_excess(
    inner: &dyn SupportFunction,
    extra: Option<&dyn SupportFunction>,
    outer: &HPolytope,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for (g, b) in outer.normals().row_iter().zip(outer.offsets().iter()) {
        let d = g.transpose();
        let mut h = inner.support(&d)?;
        if let Some(e) = extra {
            h += e.support(&d)?;
        }
        worst = worst.max(h - b);
    }
    Ok(worst)
}

/// Linear image `M S`, with support `h_S(M' d)`.
struct Image<'a> {
    m: &'a DMatrix<f64>,
    set: &'a HPolytope,
}

impl SupportFunction for Image<'_> {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        self.set.support(&(self.m.transpose() * dir))
    }
}

/// `X_tight ⊕ Z ⊆ X̆` and `U_tight ⊕ K Z ⊆ U`.
pub fn tightening_excess(bundle: &ControllerBundle) -> Result<f64> {
    let x = inclusion_excess(&bundle.x_tight, Some(&bundle.z), &bundle.plant.x_breve)?;
    let kz = Image {
        m: &bundle.k,
        set: &bundle.z,
    };
    let u = inclusion_excess(&bundle.u_tight, Some(&kz), &bundle.plant.u_set)?;
    Ok(x.max(u))
}

/// Invariance of `Ŏ` under the terminal gain together with `Ŏ ⊆ X̃` and
/// `K_tr Ŏ ⊆ Ũ`.
pub fn terminal_excess(bundle: &ControllerBundle) -> Result<f64> {
    let o = &bundle.o_breve;
    let k = bundle.k_tr_breve();
    let acl = &bundle.plant.a_breve + DMatrix::from_column_slice(bundle.nb(), 1, bundle.plant.b_breve.as_slice()) * &k;
    let image = Image { m: &acl, set: o };
    let inv = inclusion_excess(&image, None, o)?;
    let inside = inclusion_excess(o, None, &bundle.x_tilde)?;
    let ko = Image { m: &k, set: o };
    let input = inclusion_excess(&ko, None, &bundle.u_tilde)?;
    Ok(inv.max(inside).max(input))
}

/// `Ŏ ⊆ F`, `F_all ⊆ F` and `(F_all ⊖ Z) ⊕ Z ⊆ F_all`. The terminal set
/// is in general not inside `F_all`: its shared projection can leave
/// another model's feasible set.
pub fn feasible_set_excess(bundle: &ControllerBundle) -> Result<f64> {
    let a = inclusion_excess(&bundle.o_breve, None, &bundle.f)?;
    let b = inclusion_excess(&bundle.f_all, None, &bundle.f)?;
    let c = inclusion_excess(&bundle.f_all_minus_s, Some(&bundle.z), &bundle.f_all)?;
    Ok(a.max(b).max(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringRates {
    /// Fraction of interior samples of `F` the steering LP accepts.
    pub inside_accepted: f64,
    /// Fraction of pushed-out boundary samples it rejects.
    pub outside_rejected: f64,
}

/// Samples `F` and decides `N`-step steerability into `Ŏ` with states in
/// `X̃` and inputs in `Ũ` by LP, for interior and just-outside points.
pub fn steering_rates(
    bundle: &ControllerBundle,
    inside: usize,
    outside: usize,
    scale: f64,
    seed: u64,
) -> Result<SteeringRates> {
    let p = &bundle.f;
    let (c, bnd) = boundary_points(p, inside + outside, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let unit = Uniform::new(0.0, 1.0);
    let n = p.dim() as f64;
    let steer = |z: &DVector<f64>| {
        steering_feasible(
            &bundle.plant.a_breve,
            &bundle.plant.b_breve,
            z,
            &bundle.o_breve,
            bundle.horizon,
            &bundle.x_tilde,
            &bundle.u_tilde,
        )
    };
    let mut accepted = 0;
    for b in bnd.iter().take(inside) {
        let r: f64 = unit.sample(&mut rng);
        let z = &c + (b - &c) * r.powf(1.0 / n);
        if steer(&z)? {
            accepted += 1;
        }
    }
    let mut rejected = 0;
    for b in bnd.iter().skip(inside).take(outside) {
        let z = &c + (b - &c) * scale;
        if !steer(&z)? {
            rejected += 1;
        }
    }
    Ok(SteeringRates {
        inside_accepted: accepted as f64 / inside.max(1) as f64,
        outside_rejected: rejected as f64 / outside.max(1) as f64,
    })
}

fn model_checks(b: &ControllerBundle, cfg: &VerifyConfig) -> Vec<CheckResult> {
    let id = Some(b.model_id.as_str());
    let mut out = Vec::new();
    let bound = |name: &str, r: Result<f64>, tol: f64| match r {
        Ok(v) => CheckResult::new(name, id, v <= tol, v, format!("worst excess {v:.3e}, tol {tol:.0e}")),
        Err(e) => CheckResult::new(name, id, false, f64::NAN, e.to_string()),
    };
    out.push(match mrpi_slack(b, cfg.boundary_samples, cfg.seed) {
        Ok(v) => CheckResult::new(
            "mrpi_invariance",
            id,
            v >= cfg.mrpi_slack,
            v,
            format!("worst slack {v:.3e} over {} boundary points", cfg.boundary_samples),
        ),
        Err(e) => CheckResult::new("mrpi_invariance", id, false, f64::NAN, e.to_string()),
    });
    out.push(bound("tightening", tightening_excess(b), cfg.set_tol));
    out.push(bound("terminal_invariance", terminal_excess(b), cfg.set_tol));
    out.push(bound("feasible_sets", feasible_set_excess(b), cfg.set_tol));
    out.push(
        match steering_rates(b, cfg.inside_samples, cfg.outside_samples, cfg.outside_scale, cfg.seed) {
            Ok(r) => CheckResult::new(
                "steering",
                id,
                r.inside_accepted == 1.0 && r.outside_rejected >= cfg.min_rejection,
                r.outside_rejected,
                format!(
                    "inside accepted {:.3}, outside rejected {:.3}",
                    r.inside_accepted, r.outside_rejected
                ),
            ),
            Err(e) => CheckResult::new("steering", id, false, f64::NAN, e.to_string()),
        },
    );
    out
}

/// Runs every per-bundle check, bundles in parallel, plus the checks that
/// compare bundles.
pub fn verify_bundles(bundles: &[ControllerBundle], cfg: &VerifyConfig) -> Vec<CheckResult> {
    let mut out: Vec<CheckResult> = bundles.par_iter().flat_map(|b| model_checks(b, cfg)).collect();
    if let Some(first) = bundles.first() {
        let same = bundles.iter().all(|b| {
            b.u_tilde.set_equal(&first.u_tilde, cfg.set_tol).unwrap_or(false)
                && b.f_shared.set_equal(&first.f_shared, cfg.set_tol).unwrap_or(false)
        });
        out.push(CheckResult::new(
            "shared_sets",
            None,
            same,
            if same { 0.0 } else { 1.0 },
            "Ũ and the shared feasible set agree across bundles".into(),
        ));
    }
    out
}

/// Checks a closed-loop log: solved steps, constraint membership, tube
/// containment and the decoded optimizers.
pub fn verify_log(log: &SimLog, limits: &LimitTable, tube_tol: f64) -> Vec<CheckResult> {
    let m = compute_metrics(&log.rows, limits);
    let tube = log.max_tube_violation();
    let decode: Vec<_> = log
        .diagnostics
        .iter()
        .filter_map(|d| d.decode_error.as_ref().map(|e| (d.step, e)))
        .collect();
    vec![
        CheckResult::new(
            "qp_feasible",
            None,
            m.infeasible_steps == 0,
            m.infeasible_steps as f64,
            format!("{} infeasible, {} relaxed steps", m.infeasible_steps, m.relaxed_steps),
        ),
        CheckResult::new(
            "constraints",
            None,
            m.violations.total == 0,
            m.violations.total as f64,
            format!("{:?}", m.violations),
        ),
        CheckResult::new(
            "tube_containment",
            None,
            !(tube > tube_tol),
            tube,
            format!("largest violation {tube:.3e}, tol {tube_tol:.0e}"),
        ),
        CheckResult::new(
            "decoded_solutions",
            None,
            decode.is_empty(),
            decode.len() as f64,
            match decode.first() {
                Some((k, e)) => format!("step {k}: {e}"),
                None => "all optimal solutions satisfy their sets".into(),
            },
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_points_lie_on_the_boundary() {
        let p = HPolytope::from_box(&[-1.0, -2.0], &[1.0, 2.0]);
        let (_, pts) = boundary_points(&p, 50, 3).unwrap();
        assert_eq!(pts.len(), 50);
        for x in &pts {
            assert!(slack(&p, x).abs() < 1e-12);
        }
    }

    #[test]
    fn unbounded_rays_are_redrawn() {
        let p = HPolytope::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let p = p.intersect(&HPolytope::from_box(&[-5.0, -5.0], &[5.0, 5.0])).unwrap();
        let (_, pts) = boundary_points(&p, 10, 1).unwrap();
        assert_eq!(pts.len(), 10);
    }

    #[test]
    fn inclusion_excess_of_boxes() {
        let inner = HPolytope::from_box(&[-1.0], &[1.0]);
        let extra = HPolytope::from_box(&[-0.5], &[0.5]);
        let outer = HPolytope::from_box(&[-2.0], &[1.25]);
        let e = inclusion_excess(&inner, Some(&extra), &outer).unwrap();
        assert!((e - 0.25).abs() < 1e-9);
    }
}
