use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::augment::augment;
use super::schedule::{lr_at, TrainConfig};
use super::sgd::{sgd_step, SgdParams, SgdState};
use crate::autograd::Graph;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::nn::{ForwardCtx, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const METRICS_HEADER: &str = "iter,epoch,lr,train_loss,train_err,test_err,wall_ms";

/// Test error above this percentage marks a run as failed.
pub const FAIL_THRESHOLD_PCT: f64 = 20.0;

/// One logged window of training.
///
/// `iter` counts completed updates and `lr` is the rate of the latest one,
/// `lr_at(iter − 1)`. Loss and error are means over the window since the
/// previous row. `test_err` is present on evaluation rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub epoch: f64,
    pub lr: f64,
    pub train_loss: f64,
    pub train_err: f64,
    pub test_err: Option<f64>,
    pub wall_ms: u64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let test = self.test_err.map(|t| t.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.iter, self.epoch, self.lr, self.train_loss, self.train_err, test, self.wall_ms
        )
    }

    pub fn parse_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        let bad = || Error::InvalidArgument(format!("malformed metrics row: {line:?}"));
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            iter: f[0].parse().map_err(|_| bad())?,
            epoch: num(f[1])?,
            lr: num(f[2])?,
            train_loss: num(f[3])?,
            train_err: num(f[4])?,
            test_err: if f[5].is_empty() { None } else { Some(num(f[5])?) },
            wall_ms: f[6].parse().map_err(|_| bad())?,
        })
    }
}

/// Parses a metrics CSV including its header.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == METRICS_HEADER => {}
        _ => return Err(Error::InvalidArgument(format!("metrics CSV must start with {METRICS_HEADER:?}"))),
    }
    lines.filter(|l| !l.trim().is_empty()).map(MetricsRow::parse_csv).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub final_train_loss: f64,
    pub final_test_err: Option<f64>,
}

impl TrainOutcome {
    pub fn failed(&self) -> bool {
        !self.final_train_loss.is_finite() || self.final_test_err.is_some_and(|e| e > FAIL_THRESHOLD_PCT)
    }
}

/// Indices of misclassified rows of a `[N, K]` logit matrix.
fn count_wrong<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> usize {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &l)| {
            let pred = (0..k).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap_or(std::cmp::Ordering::Equal)).unwrap_or(0);
            pred != l
        })
        .count()
}

/// Test error in percent with BN in inference mode and no augmentation.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Dataset, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut wrong = 0;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(batch_size.max(1)) {
        let mut g = Graph::new();
        let x = g.constant(data.batch::<T>(chunk));
        let mut ctx = ForwardCtx::new(Mode::Eval, &mut rng).frozen();
        let logits = net.forward(&mut g, x, &mut ctx)?;
        wrong += count_wrong(g.value(logits), &data.batch_labels(chunk));
    }
    Ok(100.0 * wrong as f64 / data.len() as f64)
}

/// Forward, backward and one SGD update on a batch. Returns the batch loss
/// and the number of misclassified examples.
#[allow(clippy::too_many_arguments)]
pub fn train_step<T: Scalar>(
    net: &mut Network<T>,
    state: &mut SgdState<T>,
    x: Tensor<T>,
    labels: &[usize],
    hp: SgdParams,
    iter: usize,
    rng: &mut dyn RngCore,
) -> Result<(f64, usize)> {
    let mut g = Graph::new();
    let xi = g.constant(x);
    let mut ctx = ForwardCtx::new(Mode::Train, rng);
    let logits = net.forward(&mut g, xi, &mut ctx)?;
    let loss = g.softmax_xent(logits, labels)?;
    let loss_value = g.value(loss).data()[0].as_f64();
    if !loss_value.is_finite() {
        return Err(Error::NanLoss { iter });
    }
    let wrong = count_wrong(g.value(logits), labels);
    g.backward(loss)?;
    let grads: HashMap<String, Vec<T>> = ctx
        .bindings
        .iter()
        .filter_map(|(name, id)| g.grad(*id).map(|gr| (name.clone(), gr.to_vec())))
        .collect();
    let stats = std::mem::take(&mut ctx.bn_stats);
    drop(ctx);
    sgd_step(net, &grads, state, hp)?;
    net.update_running_stats(&stats)?;
    Ok((loss_value, wrong))
}

/// Runs the configured number of iterations, calling `on_row` for every
/// logged window.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    on_row: &mut dyn FnMut(&MetricsRow, &Network<T>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.len() < cfg.batch_size {
        return Err(Error::InvalidConfig(format!(
            "batch size {} exceeds the {} training examples",
            cfg.batch_size,
            train_set.len()
        )));
    }
    let shape = train_set.image_shape();
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd1b5_4a32_d192_ed03);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut data_rng);
    let mut cursor = 0;
    let mut state = SgdState::default();
    let start = Instant::now();
    let mut rows = Vec::new();
    let (mut win_loss, mut win_wrong, mut win_seen, mut win_iters) = (0.0, 0usize, 0usize, 0usize);
    let mut final_test_err = None;
    let mut last_loss = f64::NAN;
    for iter in 0..cfg.total_iters {
        if cursor + cfg.batch_size > order.len() {
            order.shuffle(&mut data_rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + cfg.batch_size];
        cursor += cfg.batch_size;
        let mut pixels = Vec::with_capacity(idx.len() * train_set.image_len());
        for &i in idx {
            let img = train_set.image(i);
            if cfg.augment {
                pixels.extend(augment(img, shape, &mut data_rng).into_iter().map(|v| T::from_f64_lossy(f64::from(v))));
            } else {
                pixels.extend(img.iter().map(|&v| T::from_f64_lossy(f64::from(v))));
            }
        }
        let x = Tensor::new(vec![idx.len(), shape[0], shape[1], shape[2]], pixels)?;
        let labels = train_set.batch_labels(idx);
        let lr = lr_at(iter, cfg);
        let hp = SgdParams {
            lr,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
            decay_all: cfg.decay_all_params,
        };
        let (loss, wrong) = train_step(net, &mut state, x, &labels, hp, iter, &mut noise_rng)?;
        last_loss = loss;
        win_loss += loss;
        win_wrong += wrong;
        win_seen += labels.len();
        win_iters += 1;

        let done = iter + 1;
        let last = done == cfg.total_iters;
        if done % cfg.log_every == 0 || last {
            let test_err = match test_set {
                Some(t) if done % cfg.eval_every == 0 || last => Some(evaluate(net, t, 250)?),
                _ => None,
            };
            if last {
                final_test_err = test_err;
            }
            let row = MetricsRow {
                iter: done,
                epoch: (done * cfg.batch_size) as f64 / train_set.len() as f64,
                lr,
                train_loss: win_loss / win_iters as f64,
                train_err: 100.0 * win_wrong as f64 / win_seen as f64,
                test_err,
                wall_ms: if cfg.deterministic { 0 } else { start.elapsed().as_millis() as u64 },
            };
            on_row(&row, net)?;
            rows.push(row);
            (win_loss, win_wrong, win_seen, win_iters) = (0.0, 0, 0, 0);
        }
    }
    Ok(TrainOutcome {
        final_train_loss: rows.last().map_or(last_loss, |r| r.train_loss),
        rows,
        final_test_err,
    })
}
