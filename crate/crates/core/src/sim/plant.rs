use crate::models::{ArmaxModel, ModelBank};
use crate::{Error, Result};

/// Ground-truth vehicle: the active bank model's difference equation on a
/// shared acceleration history, an explicit FIFO of past commands for the
/// dead time, and Euler integration of speed and position.
#[derive(Debug, Clone)]
pub struct Plant {
    models: Vec<ArmaxModel>,
    dt: f64,
    pub s: f64,
    pub v: f64,
    pub a: f64,
    /// `a(t), a(t-1), ...`
    a_hist: Vec<f64>,
    /// `ū(t), ū(t-1), ...` once the current command is pushed.
    fifo: Vec<f64>,
}

impl Plant {
    pub fn new(bank: &ModelBank) -> Self {
        let models: Vec<ArmaxModel> = bank.models.iter().map(|e| e.model.clone()).collect();
        let a_len = models.iter().map(|m| m.a.len()).max().unwrap_or(0).max(1);
        let u_len = models.iter().map(|m| m.nk + m.b.len()).max().unwrap_or(1);
        Self {
            models,
            dt: bank.dt,
            s: 0.0,
            v: 0.0,
            a: 0.0,
            a_hist: vec![0.0; a_len],
            fifo: vec![0.0; u_len],
        }
    }

    pub fn output(&self) -> [f64; 3] {
        [self.s, self.v, self.a]
    }

    /// Applies `ū(t)` with model `model` and acceleration disturbance `w`.
    pub fn step(&mut self, model: usize, u_bar: f64, w: f64) -> Result<()> {
        let m = self
            .models
            .get(model)
            .ok_or_else(|| Error::Config(format!("plant has no model {model}")))?;
        self.fifo.rotate_right(1);
        self.fifo[0] = u_bar;
        let mut a_next = w;
        for (i, ai) in m.a.iter().enumerate() {
            a_next -= ai * self.a_hist[i];
        }
        for (j, bj) in m.b.iter().enumerate() {
            a_next += bj * self.fifo[m.nk - 1 + j];
        }
        let (s, v, a) = (self.s, self.v, self.a);
        self.s = s + self.dt * v;
        self.v = v + self.dt * a;
        self.a = a_next;
        self.a_hist.rotate_right(1);
        self.a_hist[0] = a_next;
        if !(self.s.is_finite() && self.v.is_finite() && self.a.is_finite()) || self.v.abs() > 1e3 {
            return Err(Error::Numerical(format!(
                "plant state diverged (s={}, v={}, a={})",
                self.s, self.v, self.a
            )));
        }
        Ok(())
    }
}
