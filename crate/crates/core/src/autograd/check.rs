//! Finite-difference verification of recorded gradients.

use super::graph::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Outcome of comparing analytic and numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Max over all checked elements of
    /// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
    pub max_rel_error: f64,
    /// `(input, element)` where the maximum occurs.
    pub worst: (usize, usize),
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
    /// Elements whose stencil moved some ReLU input across zero. The function
    /// is not differentiable along the whole stencil there, so these elements
    /// are left out of `max_rel_error`.
    pub kinked: Vec<Vec<bool>>,
}

impl GradCheck {
    pub fn kinked_count(&self) -> usize {
        self.kinked.iter().flatten().filter(|&&k| k).count()
    }
}

/// Which side of zero every ReLU input in the graph is on.
fn relu_pattern(g: &Graph<f64>) -> Vec<bool> {
    (0..g.len())
        .map(NodeId)
        .filter(|&id| g.op_name(id) == "relu")
        .flat_map(|id| g.value(g.inputs(id)[0]).data().iter().map(|&v| v > 0.0))
        .collect()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-12);
    (analytic - numeric).abs() / denom
}

fn evaluate<F>(f: &mut F, inputs: &[Tensor<f64>], with_grad: bool) -> Result<(Graph<f64>, Vec<NodeId>, NodeId)>
where
    F: FnMut(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let mut graph = Graph::with_finite_checks();
    let ids: Vec<NodeId> = inputs
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.requires_grad = with_grad;
            graph.leaf(t)
        })
        .collect();
    let out = f(&mut graph, &ids)?;
    if graph.shape(out) != [1] {
        return Err(Error::NonScalarLoss(graph.shape(out).to_vec()));
    }
    Ok((graph, ids, out))
}

/// Checks the gradient of a scalar function of one 64-bit tensor.
pub fn grad_check<F>(mut f: F, x: &Tensor<f64>, eps: f64) -> Result<GradCheck>
where
    F: FnMut(&mut Graph<f64>, NodeId) -> Result<NodeId>,
{
    grad_check_many(|g, ids| f(g, ids[0]), std::slice::from_ref(x), eps)
}

/// Checks gradients with respect to every tensor in `inputs`.
///
/// The numeric side uses the sixth-order central stencil
/// `(45(f₁ - f₋₁) - 9(f₂ - f₋₂) + (f₃ - f₋₃)) / 60h` with `fₖ = f(x + kh)`.
/// Its truncation error stays below rounding noise even at steps around
/// `1e-3`, where the noise itself is small.
pub fn grad_check_many<F>(mut f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<GradCheck>
where
    F: FnMut(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step {eps}")));
    }
    let (mut graph, ids, out) = evaluate(&mut f, inputs, true)?;
    let center = relu_pattern(&graph);
    graph.backward(out)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| graph.grad(id).expect("leaf requires grad").to_vec())
        .collect();
    drop(graph);

    let mut probe = inputs.to_vec();
    let mut numeric = Vec::with_capacity(inputs.len());
    let mut kinked = Vec::with_capacity(inputs.len());
    let mut max_rel_error = 0.0;
    let mut worst = (0, 0);
    for (which, input) in inputs.iter().enumerate() {
        let mut column = Vec::with_capacity(input.numel());
        let mut kinks = Vec::with_capacity(input.numel());
        for elem in 0..input.numel() {
            let base = input.data()[elem];
            let mut crossed = false;
            let mut at = |offset: f64| -> Result<f64> {
                probe[which].data_mut()[elem] = base + offset;
                let (g, _, out) = evaluate(&mut f, &probe, false)?;
                crossed |= relu_pattern(&g) != center;
                Ok(g.value(out).data()[0])
            };
            let mut diff = |k: f64| -> Result<f64> { Ok(at(k * eps)? - at(-k * eps)?) };
            let (d1, d2, d3) = (diff(1.0)?, diff(2.0)?, diff(3.0)?);
            probe[which].data_mut()[elem] = base;
            let d = (45.0 * d1 - 9.0 * d2 + d3) / (60.0 * eps);
            let err = relative_error(analytic[which][elem], d);
            if !crossed && err > max_rel_error {
                max_rel_error = err;
                worst = (which, elem);
            }
            column.push(d);
            kinks.push(crossed);
        }
        numeric.push(column);
        kinked.push(kinks);
    }
    Ok(GradCheck {
        max_rel_error,
        worst,
        analytic,
        numeric,
        kinked,
    })
}
