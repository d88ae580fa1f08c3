//! Class-conditional Gaussian-blob images for offline runs.
//!
//! Each class owns a prototype made of a few coloured Gaussian blobs. A
//! sample shifts every blob by up to `jitter` pixels, rescales its
//! amplitude and adds white pixel noise of standard deviation `noise`.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::{Dataset, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub train: usize,
    pub test: usize,
    pub classes: usize,
    /// Images are `3 × size × size`.
    pub size: usize,
    pub blobs_per_class: usize,
    pub noise: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(train: usize, test: usize, classes: usize, size: usize, seed: u64) -> Self {
        Self {
            train,
            test,
            classes,
            size,
            blobs_per_class: 3,
            noise: 0.5,
            jitter: 1.5,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    color: [f64; 3],
}

fn normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

fn prototypes(spec: &SyntheticSpec, rng: &mut dyn RngCore) -> Vec<Vec<Blob>> {
    let s = spec.size as f64;
    (0..spec.classes)
        .map(|_| {
            (0..spec.blobs_per_class)
                .map(|_| Blob {
                    cx: rng.random_range(0.0..s),
                    cy: rng.random_range(0.0..s),
                    radius: rng.random_range(s / 8.0..s / 3.0),
                    color: [normal(rng), normal(rng), normal(rng)],
                })
                .collect()
        })
        .collect()
}

fn render(blobs: &[Blob], spec: &SyntheticSpec, rng: &mut dyn RngCore, out: &mut Vec<f32>) {
    let size = spec.size;
    let placed: Vec<(Blob, f64)> = blobs
        .iter()
        .map(|b| {
            let mut b = b.clone();
            b.cx += spec.jitter * rng.random_range(-1.0..=1.0);
            b.cy += spec.jitter * rng.random_range(-1.0..=1.0);
            (b, rng.random_range(0.6..1.4))
        })
        .collect();
    for c in 0..3 {
        for y in 0..size {
            for x in 0..size {
                let mut v = 0.0;
                for (b, amp) in &placed {
                    let d2 = (x as f64 - b.cx).powi(2) + (y as f64 - b.cy).powi(2);
                    v += amp * b.color[c] * (-d2 / (2.0 * b.radius * b.radius)).exp();
                }
                v += spec.noise * normal(rng);
                out.push(v as f32);
            }
        }
    }
}

fn sample(spec: &SyntheticSpec, protos: &[Vec<Blob>], n: usize, split: Split, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
    labels.shuffle(rng);
    let mut images = Vec::with_capacity(n * 3 * spec.size * spec.size);
    for &l in &labels {
        render(&protos[l], spec, rng, &mut images);
    }
    Dataset::new(images, labels, spec.classes, [3, spec.size, spec.size], split)
}

/// Generates balanced train and test splits sharing the same class prototypes.
pub fn synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    if spec.classes < 2 || spec.size < 4 || spec.blobs_per_class == 0 {
        return Err(Error::InvalidArgument(format!(
            "synthetic data needs ≥ 2 classes, size ≥ 4 and at least one blob, got {spec:?}"
        )));
    }
    if !(spec.noise >= 0.0 && spec.jitter >= 0.0) {
        return Err(Error::InvalidArgument("noise and jitter must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let protos = prototypes(spec, &mut rng);
    let mut train_rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let mut test_rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(2));
    Ok((
        sample(spec, &protos, spec.train, Split::Train, &mut train_rng)?,
        sample(spec, &protos, spec.test, Split::Test, &mut test_rng)?,
    ))
}
