//! CIFAR-style residual networks assembled from depth and variant settings.

mod checkpoint;
mod config;
mod model;
mod summary;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC, VERSION};
pub use config::NetworkConfig;
pub use model::{Network, NetworkNodes};
pub use summary::{forward_macs, param_summary, ParamRow, SummaryTable};
