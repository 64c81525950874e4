use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Cosine logit scale `s`.
    pub scale: f64,
    /// Additive margin `m`.
    pub margin: f64,
    /// Pseudo-label confidence threshold `tau`.
    pub tau: f64,
    /// Centroid EMA rate `alpha`.
    pub alpha: f64,
    /// Centroid loss weight `lambda`.
    pub lambda: f64,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub lr_power: f64,
    /// Decay cycles in stage 1; each new cycle restarts at `lr_start`.
    pub lr_cycles: usize,
    /// Decay cycles in stage 2, which itself restarts the schedule.
    pub lr_cycles_stage2: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    /// Share of source samples in the stage-1 unlabeled (mixed) batch.
    pub mixed_source_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scale: 10.0,
            margin: 0.2,
            tau: 0.97,
            alpha: 0.05,
            lambda: 1.0,
            batch_size: 64,
            lr_start: 1e-3,
            lr_end: 1e-5,
            lr_power: 2.0,
            lr_cycles: 2,
            lr_cycles_stage2: 1,
            epochs_stage1: 160,
            epochs_stage2: 60,
            mixed_source_fraction: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: &str| Err(Error::Config(format!("train.{field} {why}")));
        if !(self.scale > 0.0) {
            return fail("scale", "must be positive");
        }
        if !(self.margin >= 0.0) {
            return fail("margin", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail("tau", "must lie in [0, 1]");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail("alpha", "must lie in (0, 1]");
        }
        if !(self.lambda >= 0.0) {
            return fail("lambda", "must be non-negative");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be positive");
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return fail("lr_start", "and lr_end must satisfy 0 < lr_end <= lr_start");
        }
        if !(self.lr_power > 0.0) {
            return fail("lr_power", "must be positive");
        }
        if self.lr_cycles == 0 || self.lr_cycles_stage2 == 0 {
            return fail("lr_cycles", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mixed_source_fraction) {
            return fail("mixed_source_fraction", "must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Polynomial decay from `lr_start` to `lr_end`, repeated `cycles` times
/// over `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, cycles: usize, cfg: &TrainConfig) -> f64 {
    let cycle = total_steps.div_ceil(cycles).max(1);
    let frac = (step % cycle) as f64 / cycle as f64;
    cfg.lr_end + (cfg.lr_start - cfg.lr_end) * (1.0 - frac).powf(cfg.lr_power)
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
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

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_and_restart() {
        let cfg = TrainConfig::default();
        let total = 1000;
        let l = total / cfg.lr_cycles;
        assert_eq!(lr_at(0, total, cfg.lr_cycles, &cfg), 1e-3);
        assert!((lr_at(l - 1, total, cfg.lr_cycles, &cfg) - 1e-5).abs() < 1e-8);
        assert_eq!(lr_at(l, total, cfg.lr_cycles, &cfg), 1e-3);
        for s in 1..l {
            assert!(lr_at(s, total, cfg.lr_cycles, &cfg) < lr_at(s - 1, total, cfg.lr_cycles, &cfg));
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(2);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[0.5, -3.0], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn invalid_fields_are_named() {
        let cfg = TrainConfig {
            alpha: 0.0,
            ..TrainConfig::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("alpha"));
    }
}
