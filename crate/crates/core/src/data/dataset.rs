use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Normalized images `[N, C, H, W]` with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<f32>,
    labels: Vec<usize>,
    num_classes: usize,
    image_shape: [usize; 3],
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Vec<f32>, labels: Vec<usize>, num_classes: usize, image_shape: [usize; 3], split: Split) -> Result<Self> {
        let per = image_shape.iter().product::<usize>();
        if per == 0 || images.len() != labels.len() * per {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} images of shape {image_shape:?}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: num_classes,
            });
        }
        Ok(Self {
            images,
            labels,
            num_classes,
            image_shape,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_shape(&self) -> [usize; 3] {
        self.image_shape
    }

    pub fn image_len(&self) -> usize {
        self.image_shape.iter().product()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.images[i * n..(i + 1) * n]
    }

    /// Stacks the selected images into a `[len, C, H, W]` tensor.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> Tensor<T> {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| T::from_f64_lossy(f64::from(v))));
        }
        let [c, h, w] = self.image_shape;
        Tensor::new(vec![indices.len(), c, h, w], data).expect("consistent batch")
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Copies the selected examples, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Dataset {
            images,
            labels: self.batch_labels(indices),
            num_classes: self.num_classes,
            image_shape: self.image_shape,
            split: self.split,
        }
    }

    /// Number of examples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Seeded class-stratified sample of `n` indices, `n / classes` per class,
/// returned in shuffled order.
pub fn subset_indices(ds: &Dataset, n: usize, seed: u64) -> Result<Vec<usize>> {
    let classes = ds.num_classes();
    if n > ds.len() {
        return Err(Error::InvalidArgument(format!("subset of {n} from {} examples", ds.len())));
    }
    if !n.is_multiple_of(classes) {
        return Err(Error::InvalidArgument(format!(
            "stratified subset size {n} is not divisible by {classes} classes"
        )));
    }
    let per_class = n / classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut out = Vec::with_capacity(n);
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.len() < per_class {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} examples, stratified subset needs {per_class}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..per_class]);
    }
    out.shuffle(&mut rng);
    Ok(out)
}

pub fn subset(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    Ok(ds.select(&subset_indices(ds, n, seed)?))
}
