//! Element-wise arithmetic and reductions.

use super::graph::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

impl<T: Scalar> Graph<T> {
    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn unary(
        &mut self,
        op: &'static str,
        a: NodeId,
        f: impl Fn(T) -> T,
        backward: super::graph::BackwardFn<T>,
    ) -> Result<NodeId> {
        let x = self.value(a);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())?;
        self.record(op, value, &[a], backward)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.record(
            "add",
            value,
            &[a, b],
            Box::new(|ctx| {
                let g = ctx.upstream.to_vec();
                vec![ctx.needs[0].then(|| g.clone()), ctx.needs[1].then_some(g)]
            }),
        )
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p - q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.record(
            "sub",
            value,
            &[a, b],
            Box::new(|ctx| {
                vec![
                    ctx.needs[0].then(|| ctx.upstream.to_vec()),
                    ctx.needs[1].then(|| ctx.upstream.iter().map(|&g| -g).collect()),
                ]
            }),
        )
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.record(
            "mul",
            value,
            &[a, b],
            Box::new(|ctx| {
                let (x, y) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let times = |other: &[T]| ctx.upstream.iter().zip(other).map(|(&g, &o)| g * o).collect();
                vec![ctx.needs[0].then(|| times(y)), ctx.needs[1].then(|| times(x))]
            }),
        )
    }

    /// `s * a`. Scaling by exactly one copies the input bits.
    pub fn scale(&mut self, a: NodeId, s: T) -> Result<NodeId> {
        self.unary(
            "scale",
            a,
            move |v| v * s,
            Box::new(move |ctx| vec![Some(ctx.upstream.iter().map(|&g| g * s).collect())]),
        )
    }

    /// `s * a + shift`, element-wise.
    pub fn affine(&mut self, a: NodeId, s: T, shift: T) -> Result<NodeId> {
        self.unary(
            "affine",
            a,
            move |v| v * s + shift,
            Box::new(move |ctx| vec![Some(ctx.upstream.iter().map(|&g| g * s).collect())]),
        )
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let total = self.value(a).data().iter().fold(T::zero(), |acc, &v| acc + v);
        let value = Tensor::new(vec![1], vec![total])?;
        self.record(
            "sum",
            value,
            &[a],
            Box::new(|ctx| vec![Some(vec![ctx.upstream[0]; ctx.inputs[0].numel()])]),
        )
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = T::from_usize_lossy(self.value(a).numel());
        let s = self.sum(a)?;
        self.scale(s, T::one() / n)
    }

    /// `Σ a ⊙ weights` for a fixed weight tensor; handy as a generic scalar
    /// probe of a tensor-valued function.
    pub fn weighted_sum(&mut self, a: NodeId, weights: &Tensor<T>) -> Result<NodeId> {
        if self.shape(a) != weights.shape() {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum",
                lhs: self.shape(a).to_vec(),
                rhs: weights.shape().to_vec(),
            });
        }
        let w = self.constant(weights.clone());
        let p = self.mul(a, w)?;
        self.sum(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn add_is_elementwise() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(t(&[2], &[1.0, 2.0]));
        let b = g.leaf(t(&[2], &[3.0, 4.0]));
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[4.0, 6.0]);
    }

    #[test]
    fn add_shape_mismatch_names_both_shapes() {
        let mut g = Graph::<f32>::new();
        let a = g.leaf(Tensor::zeros(vec![2, 3]));
        let b = g.leaf(Tensor::zeros(vec![3, 2]));
        let msg = g.add(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn scale_by_one_is_bit_identical() {
        let mut g = Graph::<f64>::new();
        let vals = [0.1f64, -3.7e-300, 1.0 / 3.0, f64::MAX];
        let a = g.leaf(t(&[4], &vals));
        let s = g.scale(a, 1.0).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(g.value(s).data()), bits(&vals));
    }

    #[test]
    fn mul_gradient_swaps_operands() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(t(&[1], &[2.0]).with_grad());
        let b = g.leaf(t(&[1], &[5.0]).with_grad());
        let c = g.mul(a, b).unwrap();
        g.backward(c).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[5.0]);
        assert_eq!(g.grad(b).unwrap(), &[2.0]);
    }

    #[test]
    fn mul_gradient_matches_finite_difference() {
        // central difference, step 1e-6
        let h = 1e-6;
        let f = |a: f64, b: f64| a * b;
        let da = (f(2.0 + h, 5.0) - f(2.0 - h, 5.0)) / (2.0 * h);
        let db = (f(2.0, 5.0 + h) - f(2.0, 5.0 - h)) / (2.0 * h);
        assert!((da - 5.0).abs() < 1e-8 && (db - 2.0).abs() < 1e-8);
    }

    #[test]
    fn backward_of_scaled_sum() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]).with_grad());
        let y = g.scale(x, 3.0).unwrap();
        let l = g.sum(y).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[3], &[1.0, -2.0, 0.5]).with_grad());
        let y = g.add(x, x).unwrap();
        let l = g.sum(y).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_double_calls() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]).with_grad());
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
        let l = g.sum(x).unwrap();
        g.backward(l).unwrap();
        assert!(matches!(g.backward(l), Err(Error::BackwardTwice)));
        g.reset();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn unreached_parameters_get_zero_gradients() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]).with_grad());
        let unused = g.leaf(t(&[3], &[1.0, 2.0, 3.0]).with_grad());
        let l = g.sum(x).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(unused).unwrap(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]).with_grad());
        let d = g.detach(x);
        let y = g.mul(x, d).unwrap();
        let l = g.sum(y).unwrap();
        g.backward(l).unwrap();
        // only the non-detached operand contributes
        assert_eq!(g.grad(x).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn finite_checks_name_the_op() {
        let mut g = Graph::with_finite_checks();
        let x = g.leaf(t(&[1], &[f64::MAX]));
        let err = g.scale(x, 10.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { op: "scale", .. }));
    }
}
