//! Datasets: CIFAR binary files, stratified subsets and synthetic images.

mod cifar;
mod dataset;
mod synthetic;

pub use cifar::{
    dataset_from_records, decode_records, encode_records, load_cifar10, load_cifar100, normalize_pixels, CifarFormat, RawRecord,
    CIFAR_MEAN, CIFAR_STD, IMAGE_BYTES, RECORDS_PER_BATCH,
};
pub use dataset::{subset, subset_indices, Dataset, Split};
pub use synthetic::{synthetic, SyntheticSpec};
