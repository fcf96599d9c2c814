use serde::{Deserialize, Serialize};

use crate::controller::ReferenceTrajectory;
use crate::{Error, Result};

/// Start, accelerate to cruise speed, hold, brake to standstill.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceProfile {
    /// m/s
    pub cruise_speed: f64,
    /// m/s², positive
    pub accel: f64,
    /// m/s², positive magnitude of the braking deceleration
    pub decel: f64,
    /// Standstill before the start, s.
    pub start_time: f64,
    /// Duration of the constant-speed phase, s.
    pub cruise_time: f64,
}

impl Default for ReferenceProfile {
    fn default() -> Self {
        Self {
            cruise_speed: 10.0,
            accel: 1.0,
            decel: 1.0,
            start_time: 1.0,
            cruise_time: 8.0,
        }
    }
}

impl ReferenceProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = self.cruise_speed >= 0.0
            && self.start_time >= 0.0
            && self.cruise_time >= 0.0
            && (self.cruise_speed == 0.0 || (self.accel > 0.0 && self.decel > 0.0));
        if !ok {
            return Err(Error::Config("inconsistent reference profile".into()));
        }
        Ok(())
    }

    /// Time at which the vehicle is back at standstill.
    pub fn stop_time(&self) -> f64 {
        if self.cruise_speed == 0.0 {
            return self.start_time;
        }
        self.start_time + self.cruise_speed / self.accel + self.cruise_time + self.cruise_speed / self.decel
    }

    /// Time interval of the constant-speed phase.
    pub fn cruise_interval(&self) -> (f64, f64) {
        let t0 = self.start_time
            + if self.cruise_speed > 0.0 {
                self.cruise_speed / self.accel
            } else {
                0.0
            };
        (t0, t0 + self.cruise_time)
    }

    fn speed(&self, t: f64) -> f64 {
        if self.cruise_speed == 0.0 || t <= self.start_time {
            return 0.0;
        }
        let (c0, c1) = self.cruise_interval();
        if t < c0 {
            (t - self.start_time) * self.accel
        } else if t <= c1 {
            self.cruise_speed
        } else {
            (self.cruise_speed - (t - c1) * self.decel).max(0.0)
        }
    }
}

/// Trapezoidal speed profile sampled at `dt`; positions by exact discrete
/// integration `s(k+1) = s(k) + dt v(k)`, accelerations by forward
/// differences.
pub fn generate_reference(profile: &ReferenceProfile, dt: f64, duration: f64) -> Result<ReferenceTrajectory> {
    profile.validate()?;
    if !(dt > 0.0) || !(duration >= 0.0) {
        return Err(Error::Config(
            "reference needs dt > 0 and a non-negative duration".into(),
        ));
    }
    let steps = (duration / dt).round() as usize;
    let v: Vec<f64> = (0..=steps).map(|k| profile.speed(k as f64 * dt)).collect();
    let mut s = vec![0.0; steps + 1];
    for k in 0..steps {
        s[k + 1] = s[k] + dt * v[k];
    }
    let mut a: Vec<f64> = (0..steps).map(|k| (v[k + 1] - v[k]) / dt).collect();
    a.push(0.0);
    Ok(ReferenceTrajectory { dt, s, v, a })
}
