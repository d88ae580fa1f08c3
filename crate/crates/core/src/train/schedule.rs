use crate::error::{Error, Result};

/// Optimizer and schedule settings. Iterations, not epochs, drive the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_initial: f64,
    pub warmup: bool,
    pub warmup_lr: f64,
    pub warmup_iters: usize,
    /// Iterations at which the rate is multiplied by `decay_factor`.
    pub decay_points: Vec<usize>,
    pub decay_factor: f64,
    pub total_iters: usize,
    pub weight_decay: f64,
    /// Apply weight decay to BN and gate parameters as well.
    pub decay_all_params: bool,
    pub momentum: f64,
    pub batch_size: usize,
    pub augment: bool,
    /// Iterations per metrics row.
    pub log_every: usize,
    /// Iterations between test evaluations; the final iteration is always evaluated.
    pub eval_every: usize,
    pub seed: u64,
    /// Zero the wall-clock column so metric streams are reproducible byte for byte.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_initial: 0.1,
            warmup: true,
            warmup_lr: 0.01,
            warmup_iters: 400,
            decay_points: vec![32_000, 48_000],
            decay_factor: 0.1,
            total_iters: 64_000,
            weight_decay: 1e-4,
            decay_all_params: false,
            momentum: 0.9,
            batch_size: 128,
            augment: true,
            log_every: 100,
            eval_every: 2_000,
            seed: 0,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return bad(format!("lr_initial {}", self.lr_initial));
        }
        if self.warmup && !(self.warmup_lr > 0.0 && self.warmup_lr.is_finite()) {
            return bad(format!("warmup_lr {}", self.warmup_lr));
        }
        if self.decay_points.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("decay points {:?} must be strictly increasing", self.decay_points));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!("decay_factor {}", self.decay_factor));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {}", self.weight_decay));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch normalization".into());
        }
        if self.total_iters == 0 || self.log_every == 0 || self.eval_every == 0 {
            return bad("total_iters, log_every and eval_every must be positive".into());
        }
        Ok(())
    }
}

/// Learning rate for the update with 0-based index `iter`.
///
/// Decays divide by `1 / decay_factor`, so a factor of 0.1 yields exactly
/// 0.1, 0.01 and 0.001.
pub fn lr_at(iter: usize, cfg: &TrainConfig) -> f64 {
    if cfg.warmup && iter < cfg.warmup_iters {
        return cfg.warmup_lr;
    }
    let divisor = 1.0 / cfg.decay_factor;
    cfg.decay_points
        .iter()
        .filter(|&&p| iter >= p)
        .fold(cfg.lr_initial, |lr, _| lr / divisor)
}
