use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::models::Interval;

/// Fraction of samples at a box vertex.
pub const HOLD_FRACTION: f64 = 0.2;
const HOLD_MIN: usize = 10;
const HOLD_MAX: usize = 50;

/// Uniform samples in `w` with vertex-hold segments (constant at `w.lo` or
/// `w.hi`) covering at least [`HOLD_FRACTION`] of the steps.
pub fn bounded_noise(seed: u64, w: Interval, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if w.lo == w.hi {
        return vec![w.lo; len];
    }
    let mut out: Vec<f64> = (0..len).map(|_| rng.gen_range(w.lo..=w.hi)).collect();
    let mut held = vec![false; len];
    let target = (HOLD_FRACTION * len as f64).ceil() as usize;
    let mut covered = 0;
    while covered < target && len > 0 {
        let start = rng.gen_range(0..len);
        let n = rng.gen_range(HOLD_MIN..=HOLD_MAX);
        let value = if rng.gen_bool(0.5) { w.hi } else { w.lo };
        for k in start..(start + n).min(len) {
            if !held[k] {
                held[k] = true;
                covered += 1;
            }
            out[k] = value;
        }
    }
    out
}
