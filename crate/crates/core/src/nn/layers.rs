//! Parameter containers for the layers used inside residual units, plus the
//! per-forward context that binds them into a graph.

use std::collections::HashMap;
use std::ops::Range;

use rand::RngCore;
use rand_distr::{Distribution, Normal};

use super::batchnorm::BatchStats;
use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// How the optimizer and checkpoints treat a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// Conv, gate and fully-connected weights.
    Weight,
    /// Fully-connected bias.
    Bias,
    /// BN gamma and beta.
    Norm,
    /// The gating bias `b_g`.
    GateBias,
    /// BN running mean / variance; saved but never trained.
    RunningStat,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        self != ParamKind::RunningStat
    }

    /// Whether weight decay applies under the default exemption rule.
    pub fn decays(self) -> bool {
        self == ParamKind::Weight
    }
}

/// Anything that owns named tensors.
pub trait Parameterized<T: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>));

    fn count_trainable(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, kind, t| {
            if kind.trainable() {
                n += t.numel();
            }
        });
        n
    }
}

/// State threaded through one forward pass.
pub struct ForwardCtx<'a, T> {
    pub mode: Mode,
    rng: &'a mut dyn RngCore,
    /// Register parameters as gradient-carrying leaves.
    pub trainable: bool,
    overrides: HashMap<String, NodeId>,
    /// `(parameter name, node)` for every parameter bound during the pass.
    pub bindings: Vec<(String, NodeId)>,
    /// Batch statistics of every BN layer run in train mode.
    pub bn_stats: Vec<(String, BatchStats<T>)>,
    /// Units whose branch output is treated as a constant during backward.
    pub detach_branches: Option<Range<usize>>,
    /// Copy unit signals into traces.
    pub record_traces: bool,
}

impl<'a, T: Scalar> ForwardCtx<'a, T> {
    pub fn new(mode: Mode, rng: &'a mut dyn RngCore) -> Self {
        Self {
            mode,
            rng,
            trainable: true,
            overrides: HashMap::new(),
            bindings: Vec::new(),
            bn_stats: Vec::new(),
            detach_branches: None,
            record_traces: false,
        }
    }

    pub fn frozen(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn with_traces(mut self) -> Self {
        self.record_traces = true;
        self
    }

    pub fn detaching(mut self, units: Range<usize>) -> Self {
        self.detach_branches = Some(units);
        self
    }

    /// Uses `node` wherever the parameter `name` would be bound.
    pub fn override_param(&mut self, name: impl Into<String>, node: NodeId) {
        self.overrides.insert(name.into(), node);
    }

    pub fn rng(&mut self) -> &mut dyn RngCore {
        self.rng
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn bind(&mut self, g: &mut Graph<T>, name: String, tensor: &Tensor<T>) -> NodeId {
        if let Some(&id) = self.overrides.get(&name) {
            return id;
        }
        if !self.trainable {
            return g.constant(tensor.clone());
        }
        let id = g.param(tensor);
        self.bindings.push((name, id));
        id
    }

    pub fn binding(&self, name: &str) -> Option<NodeId> {
        self.overrides
            .get(name)
            .copied()
            .or_else(|| self.bindings.iter().find(|(n, _)| n == name).map(|&(_, id)| id))
    }
}

/// He initialization: `N(0, sqrt(2 / fan_in))`.
pub fn he_normal<T: Scalar>(shape: Vec<usize>, fan_in: usize, rng: &mut dyn RngCore) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| T::from_f64_lossy(normal.sample(rng))).collect()).expect("sized")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams<T> {
    pub name: String,
    /// `[OutC, InC, K, K]`.
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> Conv2dParams<T> {
    pub fn new(name: impl Into<String>, weight: Tensor<T>, bias: Option<Tensor<T>>, stride: usize, padding: usize) -> Result<Self> {
        let ws = weight.shape();
        if ws.len() != 4 || ws[2] != ws[3] || !(ws[2] == 1 || ws[2] == 3) {
            return Err(Error::InvalidShape {
                op: "conv2d params",
                detail: format!("kernel must be [OutC, InC, K, K] with K in {{1, 3}}, got {ws:?}"),
            });
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be at least 1".into()));
        }
        if let Some(b) = &bias {
            if b.shape() != [ws[0]] {
                return Err(Error::ShapeMismatch {
                    op: "conv2d params (bias)",
                    lhs: b.shape().to_vec(),
                    rhs: vec![ws[0]],
                });
            }
        }
        Ok(Self {
            name: name.into(),
            weight,
            bias,
            stride,
            padding,
        })
    }

    /// He-initialized, bias-free; `padding = kernel / 2`.
    pub fn he(name: impl Into<String>, in_c: usize, out_c: usize, kernel: usize, stride: usize, rng: &mut dyn RngCore) -> Self {
        let weight = he_normal(vec![out_c, in_c, kernel, kernel], kernel * kernel * in_c, rng);
        Self::new(name, weight, None, stride, kernel / 2).expect("valid geometry")
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn forward(&self, g: &mut Graph<T>, x: NodeId, ctx: &mut ForwardCtx<'_, T>) -> Result<NodeId> {
        let w = ctx.bind(g, format!("{}.weight", self.name), &self.weight);
        let b = self
            .bias
            .as_ref()
            .map(|b| ctx.bind(g, format!("{}.bias", self.name), b));
        g.conv2d(x, w, b, self.stride, self.padding)
    }

    pub fn zero_weights(&mut self) {
        self.weight.data_mut().iter_mut().for_each(|v| *v = T::zero());
    }
}

impl<T: Scalar> Parameterized<T> for Conv2dParams<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        f(&format!("{}.weight", self.name), ParamKind::Weight, &self.weight);
        if let Some(b) = &self.bias {
            f(&format!("{}.bias", self.name), ParamKind::Bias, b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        f(&format!("{}.weight", self.name), ParamKind::Weight, &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&format!("{}.bias", self.name), ParamKind::Bias, b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub name: String,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl<T: Scalar> BatchNormParams<T> {
    /// gamma = 1, beta = 0, running statistics at the standard normal.
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self {
            name: name.into(),
            gamma: Tensor::full(vec![channels], T::one()),
            beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::full(vec![channels], T::one()),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    pub fn forward(&self, g: &mut Graph<T>, x: NodeId, ctx: &mut ForwardCtx<'_, T>) -> Result<NodeId> {
        let gamma = ctx.bind(g, format!("{}.gamma", self.name), &self.gamma);
        let beta = ctx.bind(g, format!("{}.beta", self.name), &self.beta);
        let eps = T::from_f64_lossy(self.epsilon);
        match ctx.mode {
            Mode::Train => {
                let (y, stats) = g.batch_norm_train(x, gamma, beta, eps)?;
                ctx.bn_stats.push((self.name.clone(), stats));
                Ok(y)
            }
            Mode::Eval => g.batch_norm_eval(
                x,
                gamma,
                beta,
                self.running_mean.data(),
                self.running_var.data(),
                eps,
            ),
        }
    }

    /// `running ← momentum · running + (1 − momentum) · batch`.
    pub fn update_running(&mut self, stats: &BatchStats<T>) -> Result<()> {
        if stats.mean.len() != self.channels() || stats.var.len() != self.channels() {
            return Err(Error::InvalidArgument(format!(
                "{}: batch statistics for {} channels, layer has {}",
                self.name,
                stats.mean.len(),
                self.channels()
            )));
        }
        let m = T::from_f64_lossy(self.momentum);
        let rest = T::one() - m;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = m * *r + rest * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = m * *r + rest * b;
        }
        Ok(())
    }
}

impl<T: Scalar> Parameterized<T> for BatchNormParams<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        f(&format!("{}.gamma", self.name), ParamKind::Norm, &self.gamma);
        f(&format!("{}.beta", self.name), ParamKind::Norm, &self.beta);
        f(&format!("{}.running_mean", self.name), ParamKind::RunningStat, &self.running_mean);
        f(&format!("{}.running_var", self.name), ParamKind::RunningStat, &self.running_var);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        f(&format!("{}.gamma", self.name), ParamKind::Norm, &mut self.gamma);
        f(&format!("{}.beta", self.name), ParamKind::Norm, &mut self.beta);
        f(&format!("{}.running_mean", self.name), ParamKind::RunningStat, &mut self.running_mean);
        f(&format!("{}.running_var", self.name), ParamKind::RunningStat, &mut self.running_var);
    }
}

/// `g(x) = sigmoid(W_g * x + b_g)` with a 1×1 convolution `C → C`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams<T> {
    pub name: String,
    /// `[C, C, 1, 1]`.
    pub weight: Tensor<T>,
    /// `[C]`, initialized to `b_g`.
    pub bias: Tensor<T>,
}

impl<T: Scalar> GateParams<T> {
    pub fn new(name: impl Into<String>, channels: usize, init_bias: f64, rng: &mut dyn RngCore) -> Self {
        Self {
            name: name.into(),
            weight: he_normal(vec![channels, channels, 1, 1], channels, rng),
            bias: Tensor::full(vec![channels], T::from_f64_lossy(init_bias)),
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: NodeId, ctx: &mut ForwardCtx<'_, T>) -> Result<NodeId> {
        let w = ctx.bind(g, format!("{}.weight", self.name), &self.weight);
        let b = ctx.bind(g, format!("{}.bias", self.name), &self.bias);
        let z = g.conv2d(x, w, Some(b), 1, 0)?;
        g.sigmoid(z)
    }
}

impl<T: Scalar> Parameterized<T> for GateParams<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        f(&format!("{}.weight", self.name), ParamKind::Weight, &self.weight);
        f(&format!("{}.bias", self.name), ParamKind::GateBias, &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        f(&format!("{}.weight", self.name), ParamKind::Weight, &mut self.weight);
        f(&format!("{}.bias", self.name), ParamKind::GateBias, &mut self.bias);
    }
}

/// Fully-connected classifier `[K, D]` plus bias `[K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<T> {
    pub name: String,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LinearParams<T> {
    pub fn new(name: impl Into<String>, in_features: usize, out_features: usize, rng: &mut dyn RngCore) -> Self {
        Self {
            name: name.into(),
            weight: he_normal(vec![out_features, in_features], in_features, rng),
            bias: Tensor::zeros(vec![out_features]),
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: NodeId, ctx: &mut ForwardCtx<'_, T>) -> Result<NodeId> {
        let w = ctx.bind(g, format!("{}.weight", self.name), &self.weight);
        let b = ctx.bind(g, format!("{}.bias", self.name), &self.bias);
        g.fully_connected(x, w, b)
    }
}

impl<T: Scalar> Parameterized<T> for LinearParams<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        f(&format!("{}.weight", self.name), ParamKind::Weight, &self.weight);
        f(&format!("{}.bias", self.name), ParamKind::Bias, &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        f(&format!("{}.weight", self.name), ParamKind::Weight, &mut self.weight);
        f(&format!("{}.bias", self.name), ParamKind::Bias, &mut self.bias);
    }
}
