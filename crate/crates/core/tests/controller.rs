mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use tubempc::controller::{
    build_qp, solve_qp, Controller, ControllerConfig, QpProblem, QpStatus, ReferenceTrajectory, Switcher,
};
use tubempc::invariant_sets::ControllerBundle;
use tubempc::models::ModelBank;
use tubempc::sim::{generate_reference, load_bundles, run_closed_loop, Plant, Scenario, SimOptions};

fn default_assets() -> (ModelBank, Vec<ControllerBundle>) {
    let dir = data_dir().join("default");
    let bank = ModelBank::load(&dir.join("bank.json")).unwrap();
    let bundles = load_bundles(&dir, &bank).unwrap();
    (bank, bundles)
}

fn objective(qp: &QpProblem, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(&qp.h * x)) + qp.f.dot(x)
}

/// Minimum over all active sets: each equality-constrained minimizer that is
/// primal feasible is a candidate, and the optimum is among them.
fn brute_force(qp: &QpProblem) -> Option<f64> {
    let (m, n) = (qp.a_ineq.nrows(), qp.h.nrows());
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if rows.len() > n {
            continue;
        }
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&qp.f));
        for (j, &r) in rows.iter().enumerate() {
            for c in 0..n {
                kkt[(n + j, c)] = qp.a_ineq[(r, c)];
                kkt[(c, n + j)] = qp.a_ineq[(r, c)];
            }
            rhs[n + j] = qp.b_ineq[r];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        if (&qp.a_ineq * &x - &qp.b_ineq).max() <= 1e-9 {
            let v = objective(qp, &x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

fn random_qp(seed: u64, n: usize, m: usize) -> QpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &r * r.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    // the origin is strictly feasible
    let b = DVector::from_fn(m, |_, _| rng.gen_range(0.1..1.0));
    QpProblem {
        h,
        f,
        a_ineq: a,
        b_ineq: b,
        a_eq: DMatrix::zeros(0, n),
        b_eq: DVector::zeros(0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dual_active_set_matches_enumeration(seed in 0u64..100_000, n in 2usize..=4, m in 1usize..=8) {
        let qp = random_qp(seed, n, m);
        let sol = solve_qp(&qp).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let best = brute_force(&qp).unwrap();
        let got = objective(&qp, &sol.x);
        prop_assert!((got - best).abs() <= 1e-8 * (1.0 + best.abs()), "{got} vs {best}");
        prop_assert!((&qp.a_ineq * &sol.x - &qp.b_ineq).max() <= 1e-8);
    }

    #[test]
    fn dwell_filter_needs_consecutive_samples(targets in prop::collection::vec(0usize..3, 1..80), dwell in 1usize..5) {
        let mut sw = Switcher::new(0, dwell);
        for (k, &t) in targets.iter().enumerate() {
            let before = sw.active;
            let switched = sw.update(t);
            prop_assert_eq!(switched, sw.active != before);
            if switched {
                prop_assert!(k + 1 >= dwell);
                prop_assert!(targets[k + 1 - dwell..=k].iter().all(|&x| x == t));
            }
        }
    }
}

#[test]
fn infeasible_qp_is_reported() {
    let qp = QpProblem {
        h: DMatrix::identity(1, 1),
        f: DVector::zeros(1),
        a_ineq: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
        b_ineq: DVector::from_vec(vec![-1.0, -1.0]),
        a_eq: DMatrix::zeros(0, 1),
        b_eq: DVector::zeros(0),
    };
    assert_eq!(solve_qp(&qp).unwrap().status, QpStatus::Infeasible);
}

#[test]
fn hessian_is_positive_definite_for_every_model() {
    let (_, bundles) = default_assets();
    let cfg = ControllerConfig::default();
    let reference = generate_reference(&Scenario::default().reference, 0.04, 5.0).unwrap();
    for b in &bundles {
        let qp = build_qp(b, &cfg, &DVector::zeros(b.nx()), &reference.window(0, b.horizon)).unwrap();
        assert!(qp.h.clone().cholesky().is_some(), "{}", b.model_id);
        assert!((&qp.h - qp.h.transpose()).amax() < 1e-9);
    }
}

#[test]
fn standstill_keeps_zero_command() {
    let (bank, bundles) = default_assets();
    let mut c = Controller::new(bank, bundles, ControllerConfig::default()).unwrap();
    let y = DVector::zeros(3);
    c.reset(&y, 0.0);
    let reference = ReferenceTrajectory {
        dt: 0.04,
        s: vec![0.0; 200],
        v: vec![0.0; 200],
        a: vec![0.0; 200],
    };
    for _ in 0..50 {
        let d = c.control_step(&y, &reference).unwrap();
        assert_eq!(d.qp_status, QpStatus::Optimal);
        assert!(d.u_bar.abs() < 1e-9 && d.du.abs() < 1e-9, "u {} du {}", d.u_bar, d.du);
    }
}

#[test]
fn restore_replays_identically() {
    let (bank, bundles) = default_assets();
    let mut c = Controller::new(bank.clone(), bundles, ControllerConfig::default()).unwrap();
    let sc = Scenario::default();
    let reference = generate_reference(&sc.reference, sc.dt, sc.duration).unwrap();
    let mut plant = Plant::new(&bank);
    c.reset(&DVector::zeros(3), 0.0);
    let measure = |p: &Plant| DVector::from_row_slice(&p.output());
    let mut saved = None;
    let mut inputs = Vec::new();
    let mut first = Vec::new();
    for k in 0..120 {
        if k == 80 {
            saved = Some(c.checkpoint());
        }
        let y = measure(&plant);
        let d = c.control_step(&y, &reference).unwrap();
        if k >= 80 {
            inputs.push(y);
            first.push(d.u_bar);
        }
        plant.step(c.active_model(), d.u_bar, 0.0).unwrap();
    }
    c.restore(saved.unwrap()).unwrap();
    for (y, u) in inputs.iter().zip(&first) {
        assert_eq!(c.control_step(y, &reference).unwrap().u_bar, *u);
    }
}

#[test]
fn switch_steps_solve_the_full_problem() {
    let (bank, bundles) = default_assets();
    let mut sc = Scenario::default();
    sc.disturbance.seed = 2;
    let log = run_closed_loop(&sc, &bank, bundles, SimOptions::default()).unwrap();
    assert!(log.switches() >= 3);
    for (r, d) in log.rows.iter().zip(&log.diagnostics) {
        if r.switched {
            assert_eq!(r.qp_status, QpStatus::Optimal, "step {}", d.step);
        }
        assert!(d.decode_error.is_none(), "step {}: {:?}", d.step, d.decode_error);
    }
}
