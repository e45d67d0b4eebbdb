use serde::{Deserialize, Serialize};

use super::Loss;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    /// Fraction the cycle peak drops by each epoch.
    pub peak_decay: f64,
    pub dropout: f64,
    #[serde(with = "loss_name")]
    pub loss: Loss,
    pub seed: u64,
}

mod loss_name {
    use super::Loss;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(l: &Loss, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&l.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Loss, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch: 50,
            lr_max: 1e-3,
            lr_min: 1e-7,
            peak_decay: 0.2,
            dropout: 0.3,
            loss: Loss::L1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 || self.batch == 0 {
            return bad("epochs and batch must be positive");
        }
        if !(self.lr_min > 0.0 && self.lr_min < self.lr_max && self.lr_max.is_finite()) {
            return bad("need 0 < lr_min < lr_max");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.peak_decay) {
            return bad("peak_decay must be in [0, 1)");
        }
        Ok(())
    }

    pub fn peak(&self, epoch: usize) -> f64 {
        self.lr_max * (1.0 - self.peak_decay).powi(epoch as i32)
    }
}

/// Triangular schedule: `lr_min` at the first step of each epoch, rising
/// linearly to the epoch's peak at step `steps_per_epoch / 2`, then back
/// down toward `lr_min`.
pub fn cyclical_lr(epoch: usize, step: usize, steps_per_epoch: usize, cfg: &TrainConfig) -> f64 {
    assert!(
        step < steps_per_epoch,
        "step {step} outside epoch of {steps_per_epoch}"
    );
    let peak = cfg.peak(epoch);
    if steps_per_epoch == 1 {
        return peak;
    }
    let mid = steps_per_epoch / 2;
    let frac = if step <= mid {
        step as f64 / mid as f64
    } else {
        (steps_per_epoch - step) as f64 / (steps_per_epoch - mid) as f64
    };
    if frac == 1.0 {
        peak
    } else if frac == 0.0 {
        cfg.lr_min
    } else {
        peak * frac + cfg.lr_min * (1.0 - frac)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One bias-corrected update. Rejects non-finite gradients before
    /// touching any state.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Diverged(format!(
                "non-finite gradient {} at parameter {i}",
                grad[i]
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
