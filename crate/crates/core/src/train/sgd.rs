use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::{ParamKind, Parameterized};
use crate::scalar::Scalar;

/// `v ← momentum·v + g + weight_decay·p`, then `p ← p − lr·v`, elementwise.
pub fn sgd_update<T: Scalar>(param: &mut [T], grad: &[T], velocity: &mut [T], lr: f64, momentum: f64, weight_decay: f64) {
    let (lr, m, wd) = (T::from_f64_lossy(lr), T::from_f64_lossy(momentum), T::from_f64_lossy(weight_decay));
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = m * *v + g + wd * *p;
        *p -= lr * *v;
    }
}

/// Momentum buffers keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SgdState<T> {
    pub velocity: HashMap<String, Vec<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdParams {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Decay every trainable tensor instead of weights only.
    pub decay_all: bool,
}

/// One momentum step over every trainable tensor that has a gradient.
///
/// Weight decay applies to conv/gate/FC weights; BN parameters, biases and
/// gate biases are exempt unless `decay_all` is set. A zero rate leaves
/// parameters untouched.
pub fn sgd_step<T: Scalar>(
    params: &mut impl Parameterized<T>,
    grads: &HashMap<String, Vec<T>>,
    state: &mut SgdState<T>,
    hp: SgdParams,
) -> Result<()> {
    if !(hp.lr >= 0.0 && hp.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {} must be finite and non-negative", hp.lr)));
    }
    let mut problem = None;
    params.visit_mut(&mut |name, kind, t| {
        if !kind.trainable() || problem.is_some() {
            return;
        }
        let Some(g) = grads.get(name) else { return };
        if g.len() != t.numel() {
            problem = Some(format!("{name}: gradient of {} values for {} parameters", g.len(), t.numel()));
            return;
        }
        let v = state
            .velocity
            .entry(name.to_string())
            .or_insert_with(|| vec![T::zero(); t.numel()]);
        let wd = if hp.decay_all || kind == ParamKind::Weight { hp.weight_decay } else { 0.0 };
        sgd_update(t.data_mut(), g, v, hp.lr, hp.momentum, wd);
    });
    match problem {
        Some(p) => Err(Error::InvalidArgument(p)),
        None => Ok(()),
    }
}
