use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimRow;
use crate::controller::QpStatus;
use crate::models::PlantLimits;

/// Membership tolerance for the constraint check.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    pub v: usize,
    pub a: usize,
    pub u_bar: usize,
    pub du: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTimeStats {
    pub count: usize,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
    /// Step index of the maximum.
    pub max_step: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub steps: usize,
    pub max_abs_e_s: f64,
    pub rms_e_s: f64,
    pub violations: Violations,
    pub switches: usize,
    pub backup_switches: usize,
    pub infeasible_steps: usize,
    /// Steps solved without the multi-model feasibility rows.
    pub relaxed_steps: usize,
    pub solve_time: SolveTimeStats,
    pub solve_time_switch: SolveTimeStats,
    pub solve_time_non_switch: SolveTimeStats,
}

/// Limits used to count violations: per model id, with a fallback.
#[derive(Debug, Clone)]
pub struct LimitTable {
    pub default: PlantLimits,
    pub per_model: BTreeMap<String, PlantLimits>,
    pub v_max: Option<f64>,
}

impl LimitTable {
    pub fn uniform(limits: PlantLimits) -> Self {
        Self {
            default: limits,
            per_model: BTreeMap::new(),
            v_max: None,
        }
    }

    fn get(&self, model: &str) -> &PlantLimits {
        self.per_model.get(model).unwrap_or(&self.default)
    }
}

/// Nearest-rank percentile of unsorted data; 0 for empty input.
pub fn percentile(data: &[f64], p: f64) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

fn stats(samples: &[(usize, f64)]) -> SolveTimeStats {
    let values: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let mut max_step = None;
    let mut max = 0.0;
    for &(k, t) in samples {
        if max_step.is_none() || t > max {
            max = t;
            max_step = Some(k);
        }
    }
    SolveTimeStats {
        count: samples.len(),
        p50: percentile(&values, 50.0),
        p95: percentile(&values, 95.0),
        max,
        max_step,
    }
}

pub fn compute_metrics(rows: &[SimRow], limits: &LimitTable) -> Metrics {
    let mut m = Metrics {
        steps: rows.len(),
        ..Metrics::default()
    };
    let mut sq = 0.0;
    let mut all = Vec::new();
    let mut sw = Vec::new();
    let mut non = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        m.max_abs_e_s = m.max_abs_e_s.max(r.e_s.abs());
        sq += r.e_s * r.e_s;
        let lim = limits.get(&r.model);
        let v_hi = limits.v_max.map_or(lim.v.hi, |c| c.min(lim.v.hi));
        let mut any = false;
        if !(r.v >= lim.v.lo - VIOLATION_TOL && r.v <= v_hi + VIOLATION_TOL) {
            m.violations.v += 1;
            any = true;
        }
        if !lim.a.contains(r.a, VIOLATION_TOL) {
            m.violations.a += 1;
            any = true;
        }
        if !lim.u_bar.contains(r.u_bar, VIOLATION_TOL) {
            m.violations.u_bar += 1;
            any = true;
        }
        if !lim.du_bar.contains(r.du, VIOLATION_TOL) {
            m.violations.du += 1;
            any = true;
        }
        if any {
            m.violations.total += 1;
        }
        if r.switched {
            m.switches += 1;
            if r.backup {
                m.backup_switches += 1;
            }
            sw.push((k, r.solve_time));
        } else {
            non.push((k, r.solve_time));
        }
        match r.qp_status {
            QpStatus::Optimal => {}
            QpStatus::Relaxed => m.relaxed_steps += 1,
            QpStatus::Infeasible | QpStatus::MaxIter => m.infeasible_steps += 1,
        }
        all.push((k, r.solve_time));
    }
    if !rows.is_empty() {
        m.rms_e_s = (sq / rows.len() as f64).sqrt();
    }
    m.solve_time = stats(&all);
    m.solve_time_switch = stats(&sw);
    m.solve_time_non_switch = stats(&non);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults;

    fn row(k: usize) -> SimRow {
        SimRow {
            t: k as f64 * 0.04,
            s_ref: 0.0,
            v_ref: 0.0,
            a_ref: 0.0,
            s: 0.0,
            v: 0.0,
            a: 0.0,
            u_bar: 0.0,
            du: 0.0,
            e_s: 0.0,
            model: "m".into(),
            switched: false,
            backup: false,
            qp_status: QpStatus::Optimal,
            solve_time: 0.0,
        }
    }

    #[test]
    fn zero_run_gives_zeros() {
        let rows: Vec<SimRow> = (0..50).map(row).collect();
        let m = compute_metrics(&rows, &LimitTable::uniform(defaults::limits()));
        assert_eq!(m.max_abs_e_s, 0.0);
        assert_eq!(m.rms_e_s, 0.0);
        assert_eq!(m.violations, Violations::default());
        assert_eq!((m.switches, m.infeasible_steps), (0, 0));
        assert_eq!(m.solve_time.p95, 0.0);
    }

    #[test]
    fn spike_is_the_maximum() {
        let mut rows: Vec<SimRow> = (0..100).map(row).collect();
        for (k, r) in rows.iter_mut().enumerate() {
            r.solve_time = 1e-3 * (1.0 + (k % 7) as f64 * 0.1);
        }
        rows[42].solve_time = 0.5;
        rows[42].switched = true;
        let m = compute_metrics(&rows, &LimitTable::uniform(defaults::limits()));
        assert_eq!(m.solve_time.max, 0.5);
        assert_eq!(m.solve_time.max_step, Some(42));
        assert_eq!(
            percentile(&rows.iter().map(|r| r.solve_time).collect::<Vec<_>>(), 100.0),
            0.5
        );
        assert_eq!(m.solve_time_switch.count, 1);
        assert_eq!(m.solve_time_switch.p95, 0.5);
        assert!(m.solve_time_non_switch.max < 0.01);
    }

    #[test]
    fn nearest_rank() {
        let d: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&d, 95.0), 19.0);
        assert_eq!(percentile(&d, 50.0), 10.0);
        assert_eq!(percentile(&d, 0.0), 1.0);
        assert_eq!(percentile(&[], 95.0), 0.0);
    }

    #[test]
    fn counts_each_violation_kind() {
        let lim = defaults::limits();
        let mut rows: Vec<SimRow> = (0..4).map(row).collect();
        rows[0].v = lim.v.hi + 1e-6;
        rows[1].a = lim.a.lo - 1e-6;
        rows[2].u_bar = lim.u_bar.hi + 1e-3;
        rows[3].du = lim.du_bar.hi + 1e-8;
        rows[3].a = lim.a.hi + 1e-10;
        let m = compute_metrics(&rows, &LimitTable::uniform(lim));
        assert_eq!(
            m.violations,
            Violations {
                v: 1,
                a: 1,
                u_bar: 1,
                du: 1,
                total: 4
            }
        );
    }
}
