use serde::{Deserialize, Serialize};

use crate::models::ModelBank;

/// Model selected by the cell containing `(v, a)`; out-of-grid values fall
/// into the boundary cells.
pub fn switching_signal(v: f64, a: f64, bank: &ModelBank) -> usize {
    bank.model_for(v, a)
}

/// Dwell filter: the active model changes only after the target has been
/// the same for `dwell` consecutive samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Switcher {
    pub active: usize,
    pub candidate: usize,
    pub count: usize,
    pub dwell: usize,
}

impl Switcher {
    pub fn new(active: usize, dwell: usize) -> Self {
        Self {
            active,
            candidate: active,
            count: 0,
            dwell: dwell.max(1),
        }
    }

    /// Feeds the target of this sample; returns `true` on a switch.
    pub fn update(&mut self, target: usize) -> bool {
        if target == self.active {
            self.candidate = target;
            self.count = 0;
            return false;
        }
        if target == self.candidate {
            self.count += 1;
        } else {
            self.candidate = target;
            self.count = 1;
        }
        if self.count >= self.dwell {
            self.active = target;
            self.count = 0;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults;

    #[test]
    fn cell_center_selects_its_model() {
        let bank = defaults::true_bank();
        for (cell, &m) in bank.cells.iter().enumerate() {
            let r = bank.grid.region(cell);
            let v = 0.5 * (r.v.lo + r.v.hi);
            let a = 0.5 * (r.a.lo + r.a.hi);
            assert_eq!(switching_signal(v, a, &bank), m);
        }
    }

    #[test]
    fn short_excursion_does_not_switch() {
        let mut s = Switcher::new(0, 3);
        assert!(!s.update(1));
        assert!(!s.update(1));
        assert!(!s.update(0));
        assert!(!s.update(1));
        assert_eq!(s.active, 0);
    }

    #[test]
    fn sweep_across_edge_switches_once() {
        let bank = defaults::true_bank();
        let mut s = Switcher::new(switching_signal(4.0, 0.0, &bank), 3);
        let mut switches = 0;
        for k in 0..200 {
            let v = 4.0 + 2.0 * k as f64 / 199.0;
            if s.update(switching_signal(v, 0.0, &bank)) {
                switches += 1;
            }
        }
        assert_eq!(switches, 1);
        assert_eq!(s.active, switching_signal(6.0, 0.0, &bank));
    }
}
