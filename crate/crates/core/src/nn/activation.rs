use rand::{Rng, RngCore};

use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl<T: Scalar> Graph<T> {
    /// `max(0, x)`; the derivative at exactly zero is taken as zero.
    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        self.record(
            "relu",
            value,
            &[x],
            Box::new(|ctx| {
                let g = ctx
                    .upstream
                    .iter()
                    .zip(ctx.inputs[0].data())
                    .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                vec![Some(g)]
            }),
        )
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| sigmoid_scalar(v)).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        self.record(
            "sigmoid",
            value,
            &[x],
            Box::new(|ctx| {
                let g = ctx
                    .upstream
                    .iter()
                    .zip(ctx.output.data())
                    .map(|(&g, &s)| g * s * (T::one() - s))
                    .collect();
                vec![Some(g)]
            }),
        )
    }

    /// Inverted dropout: zeroes each element with probability `rate` and
    /// scales survivors by `1 / (1 - rate)`. Pass `train = false` for the
    /// identity used at evaluation time.
    pub fn dropout(&mut self, x: NodeId, rate: f64, train: bool, rng: &mut dyn RngCore) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).numel())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        self.record(
            "dropout",
            value,
            &[x],
            Box::new(move |ctx| vec![Some(ctx.upstream.iter().zip(&mask).map(|(&g, &m)| g * m).collect())]),
        )
    }

    /// Adds a per-channel bias `[C]` to `[N, C, ...]`.
    pub fn add_channel_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || self.shape(bias) != [xs[1]] {
            return Err(Error::ShapeMismatch {
                op: "add_channel_bias",
                lhs: xs,
                rhs: self.shape(bias).to_vec(),
            });
        }
        let (c, p) = (xs[1], xs[2..].iter().product::<usize>());
        let b = self.value(bias).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for (i, chunk) in data.chunks_mut(p).enumerate() {
            let bc = b[i % c];
            chunk.iter_mut().for_each(|v| *v += bc);
        }
        let value = Tensor::new(xs, data)?;
        self.record(
            "add_channel_bias",
            value,
            &[x, bias],
            Box::new(move |ctx| {
                let db = ctx.needs[1].then(|| {
                    let mut db = vec![T::zero(); c];
                    for (i, chunk) in ctx.upstream.chunks(p).enumerate() {
                        db[i % c] += chunk.iter().fold(T::zero(), |a, &v| a + v);
                    }
                    db
                });
                vec![ctx.needs[0].then(|| ctx.upstream.to_vec()), db]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{grad_check, grad_check_many};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_definition() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64(vec![3], &[-1.0, 0.0, 2.0]).unwrap().with_grad());
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        let l = g.sum(y).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn sigmoid_values() {
        let expected = 1.0 / (1.0 + 6f64.exp());
        assert!((sigmoid_scalar(-6.0f64) - expected).abs() < 1e-15);
        assert!((sigmoid_scalar(-6.0f64) - 0.002_472_623_156_634_774).abs() < 1e-9);
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_f64(vec![3], &[0.1, 0.2, 0.3]).unwrap());
        let y = g.dropout(x, 0.5, false, &mut rng).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut g = Graph::<f64>::new();
        let n = 200_000;
        let x = g.leaf(Tensor::full(vec![n], 1.0));
        let y = g.dropout(x, 0.5, true, &mut rng).unwrap();
        let mean = g.value(y).data().iter().sum::<f64>() / n as f64;
        assert!((0.99..=1.01).contains(&mean), "{mean}");
        assert!(g.value(y).data().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(g.dropout(x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn smooth_op_gradients() {
        let x = Tensor::from_f64(vec![2, 2, 1, 2], &[-1.3, 0.4, 2.2, -0.1, 0.7, -2.0, 0.05, 1.1]).unwrap();
        let probe = Tensor::from_f64(vec![2, 2, 1, 2], &[0.3, -1.0, 0.8, 0.5, -0.4, 0.9, 1.2, -0.6]).unwrap();
        let r = grad_check(
            |g, x| {
                let y = g.sigmoid(x)?;
                g.weighted_sum(y, &probe)
            },
            &x,
            1e-3,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "sigmoid {}", r.max_rel_error);
        let r = grad_check(
            |g, x| {
                let y = g.relu(x)?;
                g.weighted_sum(y, &probe)
            },
            &x,
            1e-3,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "relu {} {:?} {:?} {:?}", r.max_rel_error, r.worst, r.analytic, r.numeric);
        let b = Tensor::from_f64(vec![2], &[0.2, -0.3]).unwrap();
        let r = grad_check_many(
            |g, ids| {
                let y = g.add_channel_bias(ids[0], ids[1])?;
                let y = g.mul(y, y)?;
                g.weighted_sum(y, &probe)
            },
            &[x, b],
            1e-3,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "bias {}", r.max_rel_error);
    }
}
