//! Default parameters of the vehicle setup. None of these values are
//! properties of a real vehicle; they are chosen so that every stage of the
//! pipeline has non-trivial work to do at desk scale.

use crate::models::{ArmaxModel, BankEntry, Interval, ModelBank, PlantLimits, RegionGrid};

/// Sample time in seconds.
pub const DT: f64 = 0.04;
/// Prediction horizon in steps (one second).
pub const HORIZON: usize = 25;
/// Accuracy of the outer mRPI approximation.
pub const MRPI_EPS: f64 = 1e-4;
/// Samples a new cell must persist before the controller switches.
pub const DWELL: usize = 3;

pub fn grid() -> RegionGrid {
    RegionGrid {
        v_edges: vec![0.0, 5.0, 40.0],
        a_edges: vec![-6.0, -0.4, 0.4, 6.0],
    }
}

pub fn limits() -> PlantLimits {
    PlantLimits {
        w_a: Interval { lo: -0.02, hi: 0.02 },
        v: Interval { lo: -1.0, hi: 20.0 },
        a: Interval { lo: -4.0, hi: 3.0 },
        u_bar: Interval { lo: -4.0, hi: 3.0 },
        du_bar: Interval { lo: -0.3, hi: 0.3 },
    }
}

/// Ground-truth bank driving the synthetic data generator. All models have
/// unit static gain; the high-speed braking cell reuses the coasting model
/// because the default drive profile never visits it.
pub fn true_bank() -> ModelBank {
    let g = grid();
    let m = |a: Vec<f64>, b: Vec<f64>, nk| ArmaxModel {
        a,
        b,
        c: vec![],
        nk,
        dt: DT,
    };
    let models = vec![
        ("lv-brake", 0, m(vec![-0.85], vec![0.15], 2)),
        ("lv-coast", 1, m(vec![-1.1, 0.24], vec![0.14], 1)),
        ("lv-accel", 2, m(vec![-0.8], vec![0.12, 0.08], 2)),
        ("hv-accel", 5, m(vec![-0.9], vec![0.1], 3)),
        ("hv-coast", 4, m(vec![-1.25, 0.34], vec![0.06, 0.03], 2)),
    ];
    let mut cells = vec![0; g.cell_count()];
    let mut entries = Vec::new();
    for (k, (id, cell, model)) in models.into_iter().enumerate() {
        cells[cell] = k;
        entries.push(BankEntry {
            id: id.into(),
            model,
            fit: None,
            region: g.region(cell),
            is_backup: false,
            limits: None,
        });
    }
    // high-speed braking
    cells[3] = 4;
    ModelBank {
        dt: DT,
        grid: g,
        models: entries,
        cells,
        backup: 4,
    }
}

/// Two-model bank split at 5 m/s whose input boxes conflict: the high-speed
/// model only admits `ū <= 1.5`, while the low-speed model is driven above
/// that when accelerating hard. A state admissible for the low-speed
/// problem at the switch is then infeasible for the high-speed one unless
/// the constraints are intersected across models.
pub fn adversarial_bank() -> ModelBank {
    let grid = RegionGrid {
        v_edges: vec![0.0, 5.0, 40.0],
        a_edges: vec![-6.0, 6.0],
    };
    let mut hv_limits = limits();
    hv_limits.u_bar = Interval { lo: -4.0, hi: 1.5 };
    let m = |a: Vec<f64>, b: Vec<f64>, nk| ArmaxModel {
        a,
        b,
        c: vec![],
        nk,
        dt: DT,
    };
    let entries = vec![
        BankEntry {
            id: "lv".into(),
            model: m(vec![-0.8], vec![0.2], 1),
            fit: None,
            region: grid.region(0),
            is_backup: false,
            limits: None,
        },
        BankEntry {
            id: "hv".into(),
            model: m(vec![-0.9], vec![0.1], 2),
            fit: None,
            region: grid.region(1),
            is_backup: false,
            limits: Some(hv_limits),
        },
    ];
    ModelBank {
        dt: DT,
        grid,
        models: entries,
        cells: vec![0, 1],
        backup: 1,
    }
}
