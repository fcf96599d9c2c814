mod common;

use proptest::prelude::*;

use common::*;
use tubempc::controller::QpStatus;
use tubempc::models::Interval;
use tubempc::sim::{
    bounded_noise, compute_metrics, format_sig, generate_reference, load_assets, percentile, read_csv, run_closed_loop,
    write_csv, LimitTable, ReferenceProfile, Scenario, SimOptions, SimRow, HOLD_FRACTION,
};

fn csv_of(rows: &[SimRow]) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(rows, &mut out).unwrap();
    out
}

fn row(e_s: f64, v: f64, switched: bool) -> SimRow {
    SimRow {
        t: 0.0,
        s_ref: 0.0,
        v_ref: 0.0,
        a_ref: 0.0,
        s: 0.0,
        v,
        a: 0.0,
        u_bar: 0.0,
        du: 0.0,
        e_s,
        model: "m".into(),
        switched,
        backup: false,
        qp_status: QpStatus::Optimal,
        solve_time: if switched { 2.0 } else { 1.0 },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn noise_stays_in_the_box(seed in 0u64..1000, lo in -0.5..0.0f64, hi in 0.0..0.5f64, len in 1usize..800) {
        prop_assume!(hi > lo);
        let w = Interval { lo, hi };
        let n = bounded_noise(seed, w, len);
        prop_assert_eq!(n.len(), len);
        prop_assert!(n.iter().all(|x| lo <= *x && *x <= hi));
        let at_vertex = n.iter().filter(|x| **x == lo || **x == hi).count();
        prop_assert!(at_vertex as f64 >= HOLD_FRACTION * len as f64);
    }

    #[test]
    fn reference_is_consistent(v in 0.5..20.0f64, acc in 0.2..3.0f64, dec in 0.2..3.0f64, cruise in 0.0..10.0f64) {
        let p = ReferenceProfile { cruise_speed: v, accel: acc, decel: dec, start_time: 0.5, cruise_time: cruise };
        let dt = 0.04;
        let r = generate_reference(&p, dt, p.stop_time() + 1.0).unwrap();
        for k in 0..r.v.len() - 1 {
            prop_assert!((r.s[k + 1] - r.s[k] - dt * r.v[k]).abs() < 1e-12);
            prop_assert!((r.v[k + 1] - r.v[k] - dt * r.a[k]).abs() < 1e-12);
            prop_assert!(r.v[k] >= 0.0 && r.v[k] <= v + 1e-12);
        }
        prop_assert_eq!(*r.v.last().unwrap(), 0.0);
    }

    #[test]
    fn sig_format_keeps_nine_digits(x in -1e6..1e6f64, scale in -12i32..12) {
        let x = x * 10f64.powi(scale);
        let back: f64 = format_sig(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-9 * x.abs());
    }

    #[test]
    fn percentile_is_nearest_rank(data in prop::collection::vec(-100.0..100.0f64, 1..60), p in 0.0..=100.0f64) {
        let q = percentile(&data, p);
        let below = data.iter().filter(|x| **x <= q).count();
        let rank = ((p / 100.0) * data.len() as f64).ceil().max(1.0) as usize;
        prop_assert!(below >= rank);
        prop_assert!(data.iter().filter(|x| **x < q).count() < rank);
    }
}

#[test]
fn same_seed_gives_identical_logs() {
    let sc = Scenario::load(&default_config()).unwrap();
    let (bank, bundles) = load_assets(&sc).unwrap();
    let a = run_closed_loop(&sc, &bank, bundles.clone(), SimOptions::default()).unwrap();
    let b = run_closed_loop(&sc, &bank, bundles.clone(), SimOptions::default()).unwrap();
    assert_eq!(csv_of(&a.rows), csv_of(&b.rows));
    let mut other = sc.clone();
    other.disturbance.seed += 1;
    let c = run_closed_loop(&other, &bank, bundles, SimOptions::default()).unwrap();
    assert_ne!(csv_of(&a.rows), csv_of(&c.rows));
}

#[test]
fn csv_round_trip() {
    let sc = Scenario::load(&default_config()).unwrap();
    let (bank, bundles) = load_assets(&sc).unwrap();
    let log = run_closed_loop(&sc, &bank, bundles, SimOptions::default()).unwrap();
    let text = csv_of(&log.rows);
    let back = read_csv(text.as_slice()).unwrap();
    assert_eq!(back.len(), log.rows.len());
    let close = |a: f64, b: f64| (a - b).abs() <= 5e-9 * b.abs().max(1e-300);
    for (r, o) in back.iter().zip(&log.rows) {
        assert!(close(r.s, o.s) && close(r.v, o.v) && close(r.a, o.a) && close(r.u_bar, o.u_bar));
        assert_eq!(
            (&r.model, r.switched, r.backup, r.qp_status),
            (&o.model, o.switched, o.backup, o.qp_status)
        );
    }
    // a re-written log is byte-identical
    assert_eq!(csv_of(&back), text);
}

#[test]
fn metrics_on_hand_rows() {
    let rows = vec![
        row(0.5, 1.0, false),
        row(-2.0, 1.0, true),
        row(1.0, 99.0, false),
        row(0.0, 1.0, false),
    ];
    let m = compute_metrics(&rows, &LimitTable::uniform(Scenario::default().limits));
    assert_eq!(m.steps, 4);
    assert_eq!(m.max_abs_e_s, 2.0);
    assert!((m.rms_e_s - (5.25f64 / 4.0).sqrt()).abs() < 1e-15);
    assert_eq!(m.violations.v, 1);
    assert_eq!(m.violations.total, 1);
    assert_eq!(m.switches, 1);
    assert_eq!((m.solve_time_switch.count, m.solve_time_non_switch.count), (1, 3));
    assert_eq!(m.solve_time.max_step, Some(1));
}

#[test]
fn bad_scenarios_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let cases = [
        r#"{"dt": 0.0}"#,
        r#"{"horizon": 0}"#,
        r#"{"reference": {"cruise_speed": 5.0, "accel": 0.0}}"#,
        r#"{"disturbance": {"w_a": {"lo": -9.0, "hi": 9.0}}}"#,
        r#"{"v_max": -1.0}"#,
        r#"{"dt": "fast"}"#,
    ];
    for c in cases {
        std::fs::write(&path, c).unwrap();
        assert!(Scenario::load(&path).is_err(), "{c}");
    }
    std::fs::write(&path, "{}").unwrap();
    let sc = Scenario::load(&path).unwrap();
    assert_eq!(sc, Scenario::default());
    assert!(load_assets(&sc).is_err());
}

#[test]
fn relative_paths_follow_the_config() {
    let sc = Scenario::load(&default_config()).unwrap();
    let base = default_config().parent().unwrap().to_path_buf();
    assert!(sc.bank.unwrap().starts_with(&base));
    assert!(sc.bundles.unwrap().starts_with(&base));
}
