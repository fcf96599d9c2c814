use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DriveLog;
use crate::models::ModelBank;
use crate::{Error, Result};

/// Condition that ends a phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum PhaseEnd {
    Duration(f64),
    VelocityAbove(f64),
    VelocityBelow(f64),
}

/// Commanded acceleration `mean ± amplitude`, the sign flipped at random
/// after a hold of `hold_min..=hold_max` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub mean: f64,
    pub amplitude: f64,
    pub hold_min: usize,
    pub hold_max: usize,
    pub until: PhaseEnd,
    /// Safety limit on the phase length in seconds.
    pub max_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveProfile {
    pub phases: Vec<Phase>,
    pub repeats: usize,
    /// Commanded acceleration is clipped to this range.
    pub a_set_limits: (f64, f64),
}

impl DriveProfile {
    /// Stop-and-go loop covering low-speed braking, coasting and accelerating
    /// and high-speed accelerating and coasting. High-speed braking beyond a
    /// gentle coast-down is never commanded, so that cell stays starved.
    pub fn city_loop() -> Self {
        let p = |mean, amplitude, until, max_duration| Phase {
            mean,
            amplitude,
            hold_min: 2,
            hold_max: 12,
            until,
            max_duration,
        };
        Self {
            phases: vec![
                p(1.0, 0.3, PhaseEnd::VelocityAbove(4.5), 20.0),
                p(0.0, 0.15, PhaseEnd::Duration(8.0), 8.0),
                p(-1.0, 0.3, PhaseEnd::VelocityBelow(0.5), 20.0),
                p(1.0, 0.3, PhaseEnd::VelocityAbove(12.0), 30.0),
                p(0.0, 0.15, PhaseEnd::Duration(10.0), 10.0),
                p(-0.2, 0.1, PhaseEnd::VelocityBelow(4.8), 60.0),
                p(-1.0, 0.3, PhaseEnd::VelocityBelow(0.5), 20.0),
                p(0.0, 0.1, PhaseEnd::Duration(1.0), 1.0),
            ],
            repeats: 4,
            a_set_limits: (-4.0, 3.0),
        }
    }
}

/// Simulates the switched bank on the profile. The active model follows the
/// cell of the current velocity and the previous acceleration; all models
/// share the input/output history. Gaussian noise is added to the measured
/// acceleration only.
pub fn generate_synthetic_drive(
    bank: &ModelBank,
    profile: &DriveProfile,
    noise_std: f64,
    seed: u64,
) -> Result<DriveLog> {
    if profile.phases.is_empty() {
        return Err(Error::Config("drive profile has no phases".into()));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::Config("noise_std must be non-negative".into()));
    }
    let dt = bank.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE)).map_err(|e| Error::Config(e.to_string()))?;
    let mut u: Vec<f64> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    let mut v: Vec<f64> = Vec::new();
    let mut vel = 0.0;
    for _ in 0..profile.repeats {
        for ph in &profile.phases {
            let start = u.len();
            let mut sign = 1.0;
            let mut hold = 0usize;
            loop {
                let elapsed = (u.len() - start) as f64 * dt;
                let done = match ph.until {
                    PhaseEnd::Duration(s) => elapsed >= s,
                    PhaseEnd::VelocityAbove(x) => vel >= x,
                    PhaseEnd::VelocityBelow(x) => vel <= x,
                };
                if done || elapsed >= ph.max_duration {
                    break;
                }
                if hold == 0 {
                    sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    hold = rng.gen_range(ph.hold_min.max(1)..=ph.hold_max.max(ph.hold_min.max(1)));
                }
                hold -= 1;
                let cmd = (ph.mean + sign * ph.amplitude).clamp(profile.a_set_limits.0, profile.a_set_limits.1);
                let t = u.len();
                u.push(cmd);
                let a_prev = if t > 0 { y[t - 1] } else { 0.0 };
                let m = &bank.models[bank.model_for(vel, a_prev)].model;
                let yt = m.output_at(t, &y, &u, &[]);
                y.push(yt);
                v.push(vel);
                vel += dt * yt;
            }
        }
    }
    let n = u.len();
    let a_veh = y
        .iter()
        .map(|yt| {
            if noise_std > 0.0 {
                yt + noise.sample(&mut rng)
            } else {
                *yt
            }
        })
        .collect();
    Ok(DriveLog {
        t: (0..n).map(|k| k as f64 * dt).collect(),
        a_set: u,
        a_veh,
        v_veh: v,
    })
}
