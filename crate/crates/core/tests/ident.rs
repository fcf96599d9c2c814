use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tubempc::defaults;
use tubempc::ident::{
    fit_armax, generate_synthetic_drive, nrmse, partition_data, select_models, DriveLog, DriveProfile, SelectionConfig,
};
use tubempc::models::{simulate_armax, ArmaxModel};

fn excited_log(m: &ArmaxModel, len: usize, seed: u64) -> DriveLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = Vec::with_capacity(len);
    let mut level = 0.0;
    for k in 0..len {
        if k % 7 == 0 {
            level = rng.gen_range(-1.5..1.5);
        }
        u.push(level);
    }
    let y = simulate_armax(m, &u, &vec![0.0; len]).unwrap();
    let mut v = vec![5.0; len];
    for k in 1..len {
        v[k] = v[k - 1] + m.dt * y[k - 1];
    }
    DriveLog {
        t: (0..len).map(|k| k as f64 * m.dt).collect(),
        a_set: u,
        a_veh: y,
        v_veh: v,
    }
}

#[test]
fn least_squares_recovers_noiseless_coefficients() {
    let cases = [
        ArmaxModel::new(vec![-0.85], vec![0.15], vec![], 2, 0.04).unwrap(),
        ArmaxModel::new(vec![-1.25, 0.34], vec![0.06, 0.03], vec![], 2, 0.04).unwrap(),
        ArmaxModel::new(vec![-0.8], vec![0.12, 0.08], vec![], 3, 0.04).unwrap(),
    ];
    for (i, m) in cases.iter().enumerate() {
        let log = excited_log(m, 600, i as u64);
        let (fit, report) = fit_armax(&log, (m.a.len(), m.b.len(), 0, m.nk)).unwrap();
        for (a, b) in fit.a.iter().chain(&fit.b).zip(m.a.iter().chain(&m.b)) {
            assert!((a - b).abs() < 1e-8, "case {i}: {:?} vs {:?}", fit, m);
        }
        assert!(report.nrmse.unwrap() > 0.999_999);
    }
}

#[test]
fn nrmse_reference_points() {
    let y: Vec<f64> = (0..50).map(|k| (k as f64 * 0.2).sin()).collect();
    assert!((nrmse(&y, &y).unwrap() - 1.0).abs() < 1e-15);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    assert!(nrmse(&y, &vec![mean; y.len()]).unwrap().abs() < 1e-12);
}

#[test]
fn partition_runs_stay_inside_their_cell() {
    let log = generate_synthetic_drive(&defaults::true_bank(), &DriveProfile::city_loop(), 0.0, 3).unwrap();
    let grid = defaults::grid();
    let part = partition_data(&log, &grid, 10);
    let kept: usize = (0..grid.cell_count()).map(|c| part.sample_count(c)).sum();
    assert_eq!(kept + part.discarded, log.len());
    for (c, runs) in part.cells.iter().enumerate() {
        for r in runs {
            assert!(r.len() >= 10);
            assert!(r.clone().all(|k| grid.cell(log.v_veh[k], log.a_veh[k]) == c));
        }
    }
}

#[test]
fn synthetic_bank_has_region_models_and_backup() {
    let log = generate_synthetic_drive(&defaults::true_bank(), &DriveProfile::city_loop(), 0.0, 1).unwrap();
    let bank = select_models(&log, &defaults::grid(), &SelectionConfig::default()).unwrap();
    bank.validate().unwrap();
    let regions = bank.models.iter().filter(|e| !e.is_backup).count();
    assert!(regions >= 4, "{regions} region models");
    assert_eq!(bank.models.iter().filter(|e| e.is_backup).count(), 1);
    assert!(bank.models[bank.backup].is_backup);
    for e in &bank.models {
        let f = e.fit.as_ref().unwrap();
        assert!(f.stable && f.minimum_phase, "{}", e.id);
    }
    // cells without a region model of their own fall back to the backup
    for (cell, &m) in bank.cells.iter().enumerate() {
        let e = &bank.models[m];
        assert!(e.is_backup || e.region == bank.grid.region(cell));
    }
}

#[test]
fn starved_cells_map_to_backup() {
    let log = generate_synthetic_drive(&defaults::true_bank(), &DriveProfile::city_loop(), 0.0, 1).unwrap();
    let cfg = SelectionConfig {
        min_samples: usize::MAX,
        ..SelectionConfig::default()
    };
    let bank = select_models(&log, &defaults::grid(), &cfg).unwrap();
    assert_eq!(bank.models.len(), 1);
    assert!(bank.cells.iter().all(|&m| m == bank.backup));
}

#[test]
fn drive_log_csv_round_trip() {
    let m = ArmaxModel::new(vec![-0.85], vec![0.15], vec![], 2, 0.04).unwrap();
    let log = excited_log(&m, 100, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("drive.csv");
    log.write_csv(&path).unwrap();
    let back = DriveLog::read_csv(&path).unwrap();
    assert_eq!(back.len(), log.len());
    for (a, b) in back.a_veh.iter().zip(&log.a_veh) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn noisy_data_is_reproducible_per_seed() {
    let bank = defaults::true_bank();
    let a = generate_synthetic_drive(&bank, &DriveProfile::city_loop(), 0.01, 4).unwrap();
    let b = generate_synthetic_drive(&bank, &DriveProfile::city_loop(), 0.01, 4).unwrap();
    let c = generate_synthetic_drive(&bank, &DriveProfile::city_loop(), 0.01, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.a_veh, c.a_veh);
}
