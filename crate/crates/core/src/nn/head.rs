//! Classifier head: global average pooling, fully-connected layer and
//! softmax cross-entropy.

use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean of `-log softmax(logits)[label]` over the batch, accumulated in `f64`.
pub fn softmax_xent_reference<T: Scalar>(logits: &[T], classes: usize, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &label) in logits.chunks(classes).zip(labels) {
        let row: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    total / labels.len() as f64
}

impl<T: Scalar> Graph<T> {
    /// `[N, C, H, W]` → `[N, C]`.
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let [n, c, h, w] = xs[..] else {
            return Err(Error::InvalidShape {
                op: "global_avg_pool",
                detail: format!("expected 4-D input, got {xs:?}"),
            });
        };
        let p = h * w;
        let inv = T::one() / T::from_usize_lossy(p);
        let data = self
            .value(x)
            .data()
            .chunks(p)
            .map(|plane| plane.iter().fold(T::zero(), |a, &v| a + v) * inv)
            .collect();
        let value = Tensor::new(vec![n, c], data)?;
        self.record(
            "global_avg_pool",
            value,
            &[x],
            Box::new(move |ctx| {
                let g = ctx.upstream.iter().flat_map(|&g| std::iter::repeat_n(g * inv, p)).collect();
                vec![Some(g)]
            }),
        )
    }

    /// `x · Wᵀ + b` with `x: [N, D]`, `W: [K, D]`, `b: [K]`.
    pub fn fully_connected(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(weight).to_vec());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::ShapeMismatch {
                op: "fully_connected",
                lhs: xs,
                rhs: ws,
            });
        }
        if self.shape(bias) != [ws[0]] {
            return Err(Error::ShapeMismatch {
                op: "fully_connected (bias)",
                lhs: self.shape(bias).to_vec(),
                rhs: vec![ws[0]],
            });
        }
        let (n, d, k) = (xs[0], xs[1], ws[0]);
        let mut out = Vec::with_capacity(n * k);
        for _ in 0..n {
            out.extend_from_slice(self.value(bias).data());
        }
        T::gemm(
            n,
            d,
            k,
            T::one(),
            self.value(x).data(),
            (d as isize, 1),
            self.value(weight).data(),
            (1, d as isize),
            T::one(),
            &mut out,
            (k as isize, 1),
        );
        let value = Tensor::new(vec![n, k], out)?;
        self.record(
            "fully_connected",
            value,
            &[x, weight, bias],
            Box::new(move |ctx| {
                let dy = ctx.upstream;
                let dx = ctx.needs[0].then(|| {
                    let mut dx = vec![T::zero(); n * d];
                    T::gemm(n, k, d, T::one(), dy, (k as isize, 1), ctx.inputs[1].data(), (d as isize, 1), T::zero(), &mut dx, (d as isize, 1));
                    dx
                });
                let dw = ctx.needs[1].then(|| {
                    let mut dw = vec![T::zero(); k * d];
                    T::gemm(k, n, d, T::one(), dy, (1, k as isize), ctx.inputs[0].data(), (d as isize, 1), T::zero(), &mut dw, (d as isize, 1));
                    dw
                });
                let db = ctx.needs[2].then(|| {
                    let mut db = vec![T::zero(); k];
                    for row in dy.chunks(k) {
                        db.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                    }
                    db
                });
                vec![dx, dw, db]
            }),
        )
    }

    /// Mean softmax cross-entropy of `[N, K]` logits against integer labels.
    pub fn softmax_xent(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let ls = self.shape(logits).to_vec();
        let [n, k] = ls[..] else {
            return Err(Error::InvalidShape {
                op: "softmax_xent",
                detail: format!("expected [N, K] logits, got {ls:?}"),
            });
        };
        if labels.len() != n {
            return Err(Error::ShapeMismatch {
                op: "softmax_xent (labels)",
                lhs: ls,
                rhs: vec![labels.len()],
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        let mut probs = Vec::with_capacity(n * k);
        let mut total = T::zero();
        for (row, &label) in self.value(logits).data().chunks(k).zip(labels) {
            let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
            let z = exps.iter().fold(T::zero(), |a, &v| a + v);
            total += m + z.ln() - row[label];
            probs.extend(exps.iter().map(|&e| e / z));
        }
        let inv_n = T::one() / T::from_usize_lossy(n);
        let value = Tensor::new(vec![1], vec![total * inv_n])?;
        let labels = labels.to_vec();
        self.record(
            "softmax_xent",
            value,
            &[logits],
            Box::new(move |ctx| {
                let scale = ctx.upstream[0] * inv_n;
                let mut g = probs.clone();
                for (row, &label) in g.chunks_mut(k).zip(&labels) {
                    row[label] -= T::one();
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                vec![Some(g)]
            }),
        )
    }
}
