//! Numerical checks of how signals move through stacks of residual units:
//! telescoping forward sums, the two-term gradient split, and the product
//! of shortcut scales.
//!
//! A slice `[l, upper)` names units `l..upper`; `x_i` is the input of unit
//! `i`, so `x_upper` is the output of unit `upper - 1`. Slices must stay
//! inside one stage and may not contain a unit that changes shape.

use std::io::Write;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::network::{Network, NetworkNodes};
use crate::nn::{ForwardCtx, Mode};
use crate::scalar::Scalar;
use crate::tensor::{norm_l2, Tensor};
use crate::units::{ShortcutKind, UnitTrace};

/// A validated run of shape-preserving units within one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSlice<T> {
    pub unit_indices: Range<usize>,
    pub traces: Vec<UnitTrace<T>>,
}

/// Checks that `[l, upper)` is a single-stage slice of shape-preserving units.
pub fn validate_slice<T: Scalar>(net: &Network<T>, l: usize, upper: usize) -> Result<()> {
    let err = |reason: String| Err(Error::InvalidSlice { l, upper, reason });
    if l > upper {
        return err("l exceeds upper".into());
    }
    if upper > net.num_units() {
        return err(format!("the network has {} units", net.num_units()));
    }
    if l == upper {
        return Ok(());
    }
    let fits = net
        .shape_preserving_ranges()
        .iter()
        .any(|r| r.start <= l && upper <= r.end);
    if fits {
        Ok(())
    } else {
        err("crosses a stage boundary or includes a shape-changing unit".into())
    }
}

/// Seed used for dropout masks inside the checks, so repeated passes see
/// identical forward values.
const PASS_SEED: u64 = 0x5eed;

fn run<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    labels: Option<&[usize]>,
    mode: Mode,
    detach: Option<Range<usize>>,
) -> Result<(Graph<T>, NetworkNodes)> {
    let mut rng = ChaCha8Rng::seed_from_u64(PASS_SEED);
    let mut g = Graph::new();
    let input = g.leaf(x.clone().with_grad());
    let mut ctx = ForwardCtx::new(mode, &mut rng).frozen();
    if let Some(r) = detach {
        ctx = ctx.detaching(r);
    }
    let nodes = net.forward_nodes(&mut g, input, &mut ctx)?;
    if let Some(labels) = labels {
        let loss = g.softmax_xent(nodes.logits, labels)?;
        g.backward(loss)?;
    }
    Ok((g, nodes))
}

/// Traces of the units in `[l, upper)` from one forward pass.
pub fn trace_slice<T: Scalar>(net: &Network<T>, x: &Tensor<T>, l: usize, upper: usize, mode: Mode) -> Result<StageSlice<T>> {
    validate_slice(net, l, upper)?;
    let (g, nodes) = run(net, x, None, mode, None)?;
    Ok(StageSlice {
        unit_indices: l..upper,
        traces: nodes.units[l..upper].iter().map(|u| UnitTrace::from_graph(&g, u)).collect(),
    })
}

/// `‖x_upper − (x_l + Σ F_i)‖₂ / ‖x_upper‖₂` over the slice, accumulated in
/// `f64` from the traced values. Zero for an empty slice.
pub fn telescope_check<T: Scalar>(net: &Network<T>, x: &Tensor<T>, l: usize, upper: usize, mode: Mode) -> Result<f64> {
    validate_slice(net, l, upper)?;
    if l == upper {
        return Ok(0.0);
    }
    let (g, nodes) = run(net, x, None, mode, None)?;
    let mut acc: Vec<f64> = g.value(nodes.signal(l)).data().iter().map(|v| v.as_f64()).collect();
    for unit in &nodes.units[l..upper] {
        for (a, f) in acc.iter_mut().zip(g.value(unit.branch_out).data()) {
            *a += f.as_f64();
        }
    }
    let x_upper = g.value(nodes.signal(upper)).data();
    let diff: Vec<f64> = x_upper.iter().zip(&acc).map(|(v, a)| v.as_f64() - a).collect();
    let denom = norm_l2(x_upper);
    Ok(if denom == 0.0 { norm_l2(&diff) } else { norm_l2(&diff) / denom })
}

/// `∂E/∂x_l` split into the term that bypasses every branch of the slice
/// and the remainder that flows through the branch weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GradDecomposition<T> {
    pub total: Tensor<T>,
    pub direct: Tensor<T>,
    /// `total − direct`.
    pub through_weights: Tensor<T>,
    /// `∂E/∂x_upper` of the same pass.
    pub upper_grad: Tensor<T>,
}

impl<T: Scalar> GradDecomposition<T> {
    /// `max |direct + through_weights − total|`.
    pub fn invariant_error(&self) -> f64 {
        self.direct
            .data()
            .iter()
            .zip(self.through_weights.data())
            .zip(self.total.data())
            .map(|((&d, &w), &t)| (d + w - t).as_f64().abs())
            .fold(0.0, f64::max)
    }
}

/// Splits `∂E/∂x_l` under softmax cross-entropy. The direct term comes from
/// a second backward pass in which every branch of the slice is a constant.
pub fn gradient_decompose<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    labels: &[usize],
    l: usize,
    upper: usize,
    mode: Mode,
) -> Result<GradDecomposition<T>> {
    validate_slice(net, l, upper)?;
    let grad_of = |g: &Graph<T>, nodes: &NetworkNodes, i: usize| -> Result<Tensor<T>> {
        g.grad_tensor(nodes.signal(i)).ok_or(Error::UnknownNode(nodes.signal(i).index()))
    };
    let (g, nodes) = run(net, x, Some(labels), mode, None)?;
    let total = grad_of(&g, &nodes, l)?;
    let upper_grad = grad_of(&g, &nodes, upper)?;
    let (g2, nodes2) = run(net, x, Some(labels), mode, Some(l..upper))?;
    let direct = grad_of(&g2, &nodes2, l)?;
    let through: Vec<T> = total.data().iter().zip(direct.data()).map(|(&t, &d)| t - d).collect();
    let through_weights = Tensor::new(total.shape().to_vec(), through)?;
    Ok(GradDecomposition {
        total,
        direct,
        through_weights,
        upper_grad,
    })
}

/// `‖∂E/∂x_l‖ / ‖∂E/∂x_upper‖` for a network whose units scale the shortcut
/// by a constant `λ > 0` and whose branches in the slice output zero.
pub fn lambda_product_check<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    labels: &[usize],
    l: usize,
    upper: usize,
    mode: Mode,
) -> Result<f64> {
    let lambda = match net.cfg.shortcut {
        ShortcutKind::ConstantScale { lambda } => lambda,
        other => return Err(Error::InvalidArgument(format!("needs constant-scale shortcuts, network uses {other}"))),
    };
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    validate_slice(net, l, upper)?;
    let (g, nodes) = run(net, x, Some(labels), mode, None)?;
    for (i, unit) in nodes.units[l..upper].iter().enumerate() {
        if g.value(unit.branch_out).data().iter().any(|v| *v != T::zero()) {
            return Err(Error::InvalidArgument(format!("branch of unit {} is not zeroed", l + i)));
        }
    }
    let norm = |i: usize| g.grad(nodes.signal(i)).map(norm_l2).ok_or(Error::UnknownNode(nodes.signal(i).index()));
    Ok(norm(l)? / norm(upper)?)
}

/// Per-unit magnitudes along one forward/backward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub unit_index: usize,
    /// `‖x_i‖₂`, the unit input.
    pub x_norm: f64,
    /// `‖F(x_i)‖₂`, the branch output as merged.
    pub f_norm: f64,
    /// `‖h(x_i)‖₂`, the shortcut output.
    pub h_norm: f64,
    /// `‖∂E/∂x_i‖₂` under softmax cross-entropy.
    pub grad_norm: f64,
}

pub fn signal_magnitude_profile<T: Scalar>(net: &Network<T>, x: &Tensor<T>, labels: &[usize], mode: Mode) -> Result<Vec<ProfileRow>> {
    let (g, nodes) = run(net, x, Some(labels), mode, None)?;
    nodes
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            Ok(ProfileRow {
                unit_index: i,
                x_norm: g.value(u.x_in).norm_l2(),
                f_norm: g.value(u.branch_out).norm_l2(),
                h_norm: g.value(u.shortcut_out).norm_l2(),
                grad_norm: g.grad(u.x_in).map(norm_l2).ok_or(Error::UnknownNode(u.x_in.index()))?,
            })
        })
        .collect()
}

pub const PROFILE_HEADER: &str = "unit_index,x_norm,F_norm,h_norm,grad_norm";

pub fn write_profile_csv(rows: &[ProfileRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "{PROFILE_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.unit_index, r.x_norm, r.f_norm, r.h_norm, r.grad_norm)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
