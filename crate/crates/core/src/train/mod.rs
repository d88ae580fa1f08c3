//! SGD training with the step schedule, augmentation and metric logging.

mod augment;
mod fit;
mod schedule;
mod sgd;
#[cfg(test)]
mod tests;

pub use augment::{augment, crop_flip, PAD};
pub use fit::{
    evaluate, parse_metrics_csv, train, train_step, MetricsRow, TrainOutcome, FAIL_THRESHOLD_PCT, METRICS_HEADER,
};
pub use schedule::{lr_at, TrainConfig};
pub use sgd::{sgd_step, sgd_update, SgdParams, SgdState};
