//! Batch normalization over the `N, H, W` axes of `[N, C, H, W]` (or `[N, C]`).

use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-channel statistics of one training batch (biased variance).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [n, c] => Ok((n, c, 1)),
        [n, c, h, w] => Ok((n, c, h * w)),
        _ => Err(Error::InvalidShape {
            op: "batchnorm",
            detail: format!("expected [N, C] or [N, C, H, W], got {shape:?}"),
        }),
    }
}

fn check_channels(op: &'static str, shape: &[usize], channels: usize) -> Result<()> {
    if shape != [channels] {
        return Err(Error::ShapeMismatch {
            op,
            lhs: shape.to_vec(),
            rhs: vec![channels],
        });
    }
    Ok(())
}

impl<T: Scalar> Graph<T> {
    /// Normalizes with the batch's own statistics and returns them alongside
    /// the output so the caller can update running averages.
    pub fn batch_norm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: T,
    ) -> Result<(NodeId, BatchStats<T>)> {
        let (n, c, p) = layout(self.shape(x))?;
        check_channels("batchnorm (gamma)", self.shape(gamma), c)?;
        check_channels("batchnorm (beta)", self.shape(beta), c)?;
        if n < 2 {
            return Err(Error::InvalidArgument(
                "batch norm in train mode needs a batch of at least 2".into(),
            ));
        }
        let count = T::from_usize_lossy(n * p);
        let src = self.value(x).data();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ch in 0..c {
            let mut s = T::zero();
            for b in 0..n {
                for &v in &src[(b * c + ch) * p..][..p] {
                    s += v;
                }
            }
            let m = s / count;
            let mut sq = T::zero();
            for b in 0..n {
                for &v in &src[(b * c + ch) * p..][..p] {
                    sq += (v - m) * (v - m);
                }
            }
            mean[ch] = m;
            var[ch] = sq / count;
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); src.len()];
        let mut out = vec![T::zero(); src.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * p;
                for i in off..off + p {
                    xhat[i] = (src[i] - mean[ch]) * inv_std[ch];
                    out[i] = xhat[i] * gv[ch] + bv[ch];
                }
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        let id = self.record(
            "batchnorm",
            value,
            &[x, gamma, beta],
            Box::new(move |ctx| {
                let dy = ctx.upstream;
                let gv = ctx.inputs[1].data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * p;
                        for i in off..off + p {
                            dgamma[ch] += dy[i] * xhat[i];
                            dbeta[ch] += dy[i];
                        }
                    }
                }
                let dx = ctx.needs[0].then(|| {
                    let mut dx = vec![T::zero(); dy.len()];
                    for ch in 0..c {
                        let mean_dy = dbeta[ch] / count;
                        let mean_dy_xhat = dgamma[ch] / count;
                        let k = gv[ch] * inv_std[ch];
                        for b in 0..n {
                            let off = (b * c + ch) * p;
                            for i in off..off + p {
                                dx[i] = k * (dy[i] - mean_dy - xhat[i] * mean_dy_xhat);
                            }
                        }
                    }
                    dx
                });
                vec![dx, ctx.needs[1].then_some(dgamma), ctx.needs[2].then_some(dbeta)]
            }),
        )?;
        Ok((id, BatchStats { mean, var }))
    }

    /// Normalizes with fixed (running) statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: &[T],
        var: &[T],
        eps: T,
    ) -> Result<NodeId> {
        let (n, c, p) = layout(self.shape(x))?;
        check_channels("batchnorm (gamma)", self.shape(gamma), c)?;
        check_channels("batchnorm (beta)", self.shape(beta), c)?;
        if mean.len() != c || var.len() != c {
            return Err(Error::InvalidArgument(format!(
                "running statistics have {} / {} entries for {c} channels",
                mean.len(),
                var.len()
            )));
        }
        if let Some(v) = var.iter().find(|v| **v < T::zero()) {
            return Err(Error::InvalidArgument(format!("negative running variance {v}")));
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mean = mean.to_vec();
        let src = self.value(x).data();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![T::zero(); src.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * p;
                for i in off..off + p {
                    out[i] = (src[i] - mean[ch]) * inv_std[ch] * gv[ch] + bv[ch];
                }
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        self.record(
            "batchnorm_eval",
            value,
            &[x, gamma, beta],
            Box::new(move |ctx| {
                let (dy, src, gv) = (ctx.upstream, ctx.inputs[0].data(), ctx.inputs[1].data());
                let mut dx = vec![T::zero(); dy.len()];
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * p;
                        for i in off..off + p {
                            dx[i] = dy[i] * gv[ch] * inv_std[ch];
                            dgamma[ch] += dy[i] * (src[i] - mean[ch]) * inv_std[ch];
                            dbeta[ch] += dy[i];
                        }
                    }
                }
                vec![
                    ctx.needs[0].then_some(dx),
                    ctx.needs[1].then_some(dgamma),
                    ctx.needs[2].then_some(dbeta),
                ]
            }),
        )
    }
}
