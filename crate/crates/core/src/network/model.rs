use std::collections::HashMap;
use std::ops::Range;

use rand::RngCore;

use super::config::NetworkConfig;
use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::nn::{BatchNormParams, BatchStats, Conv2dParams, ForwardCtx, LinearParams, ParamKind, Parameterized};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::units::{ResidualUnit, ResidualUnitConfig, UnitNodes};

/// A stem convolution, three stages of residual units and a pooling head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub cfg: NetworkConfig,
    pub stem: Conv2dParams<T>,
    pub stem_bn: BatchNormParams<T>,
    pub stages: Vec<Vec<ResidualUnit<T>>>,
    /// BN of the extra activation after the last addition (pre-activation orders).
    pub head_bn: Option<BatchNormParams<T>>,
    pub fc: LinearParams<T>,
}

/// Node ids produced by one network forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkNodes {
    pub input: NodeId,
    /// Signal entering the first unit.
    pub stem_out: NodeId,
    /// One entry per unit, in network order.
    pub units: Vec<UnitNodes>,
    /// Output of each stage's last unit.
    pub stage_outputs: Vec<NodeId>,
    pub logits: NodeId,
}

impl NetworkNodes {
    /// `x_i`: the input of unit `i`, or the network's last residual signal
    /// for `i == units.len()`.
    pub fn signal(&self, i: usize) -> NodeId {
        match self.units.get(i) {
            Some(u) => u.x_in,
            None => self.units.last().map_or(self.stem_out, |u| u.x_out),
        }
    }
}

impl<T: Scalar> Network<T> {
    pub fn build(cfg: NetworkConfig, rng: &mut dyn RngCore) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.units_per_stage()?;
        let stem_width = cfg.widths[0];
        let stem = Conv2dParams::he("stem.conv", cfg.input_channels, stem_width, 3, 1, rng);
        let stem_bn = BatchNormParams::new("stem.bn", stem_width);
        let outputs = cfg.stage_outputs();
        let mut in_c = stem_width;
        let mut stages = Vec::with_capacity(3);
        for (s, &out_c) in outputs.iter().enumerate() {
            let mut units = Vec::with_capacity(n);
            for u in 0..n {
                let stride = if s > 0 && u == 0 { 2 } else { 1 };
                let boundary = stride != 1 || in_c != out_c;
                let mut ucfg = ResidualUnitConfig::new(cfg.shortcut, cfg.order, cfg.branch, out_c);
                ucfg.in_channels = in_c;
                ucfg.stride = stride;
                if boundary {
                    ucfg.shortcut = cfg.boundary_shortcut;
                } else {
                    ucfg.branch_scale = cfg.branch_scale;
                }
                // The stem's BN+ReLU doubles as the first unit's pre-activation.
                ucfg.shares_stem_activation = s == 0 && u == 0 && cfg.order.is_preactivation();
                units.push(ResidualUnit::build(ucfg, format!("stage{}.unit{}", s + 1, u + 1), rng)?);
                in_c = out_c;
            }
            stages.push(units);
        }
        let head_bn = cfg
            .order
            .is_preactivation()
            .then(|| BatchNormParams::new("head.bn", outputs[2]));
        let fc = LinearParams::new("head.fc", outputs[2], cfg.num_classes, rng);
        Ok(Self {
            cfg,
            stem,
            stem_bn,
            stages,
            head_bn,
            fc,
        })
    }

    pub fn num_units(&self) -> usize {
        self.stages.iter().map(Vec::len).sum()
    }

    pub fn units(&self) -> impl Iterator<Item = &ResidualUnit<T>> {
        self.stages.iter().flatten()
    }

    pub fn units_mut(&mut self) -> impl Iterator<Item = &mut ResidualUnit<T>> {
        self.stages.iter_mut().flatten()
    }

    pub fn unit(&self, i: usize) -> Option<&ResidualUnit<T>> {
        self.units().nth(i)
    }

    /// Global unit indices of each stage.
    pub fn stage_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.stages
            .iter()
            .map(|s| {
                let r = start..start + s.len();
                start = r.end;
                r
            })
            .collect()
    }

    /// Indices of units that keep their input shape, per stage.
    pub fn shape_preserving_ranges(&self) -> Vec<Range<usize>> {
        self.stage_ranges()
            .into_iter()
            .map(|r| {
                let first = self.unit(r.start).expect("non-empty stage");
                let changes = first.cfg.stride != 1 || first.cfg.in_channels != first.cfg.out_channels;
                (r.start + usize::from(changes))..r.end
            })
            .collect()
    }

    /// Makes every branch in `units` output zero.
    pub fn zero_branches(&mut self, units: Range<usize>) {
        for (i, unit) in self.units_mut().enumerate() {
            if units.contains(&i) {
                unit.zero_last_branch_conv();
            }
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: NodeId, ctx: &mut ForwardCtx<'_, T>) -> Result<NodeId> {
        Ok(self.forward_nodes(g, x, ctx)?.logits)
    }

    /// Forward pass returning every unit's internal nodes.
    pub fn forward_nodes(&self, g: &mut Graph<T>, x: NodeId, ctx: &mut ForwardCtx<'_, T>) -> Result<NetworkNodes> {
        let shape = g.shape(x);
        let (h, w) = self.cfg.input_size;
        if shape.len() != 4 || shape[1] != self.cfg.input_channels || shape[2] != h || shape[3] != w {
            return Err(Error::ShapeMismatch {
                op: "network input",
                lhs: shape.to_vec(),
                rhs: vec![0, self.cfg.input_channels, h, w],
            });
        }
        let mut h = self.stem.forward(g, x, ctx)?;
        h = self.stem_bn.forward(g, h, ctx)?;
        h = g.relu(h)?;
        let stem_out = h;
        let mut units = Vec::with_capacity(self.num_units());
        let mut stage_outputs = Vec::with_capacity(3);
        for stage in &self.stages {
            for unit in stage {
                let nodes = unit.forward(g, h, units.len(), ctx)?;
                h = nodes.x_out;
                units.push(nodes);
            }
            stage_outputs.push(h);
        }
        if let Some(bn) = &self.head_bn {
            h = bn.forward(g, h, ctx)?;
            h = g.relu(h)?;
        }
        let pooled = g.global_avg_pool(h)?;
        let logits = self.fc.forward(g, pooled, ctx)?;
        Ok(NetworkNodes {
            input: x,
            stem_out,
            units,
            stage_outputs,
            logits,
        })
    }

    /// Folds batch statistics from a training pass into the running averages.
    pub fn update_running_stats(&mut self, stats: &[(String, BatchStats<T>)]) -> Result<()> {
        let by_name: HashMap<&str, &BatchStats<T>> = stats.iter().map(|(n, s)| (n.as_str(), s)).collect();
        let mut result = Ok(());
        self.visit_bn_mut(&mut |bn| {
            if let Some(s) = by_name.get(bn.name.as_str()) {
                if let Err(e) = bn.update_running(s) {
                    result = Err(e);
                }
            }
        });
        result
    }

    fn visit_bn_mut(&mut self, f: &mut dyn FnMut(&mut BatchNormParams<T>)) {
        f(&mut self.stem_bn);
        for unit in self.stages.iter_mut().flatten() {
            unit.bns.iter_mut().for_each(&mut *f);
            if let crate::units::ShortcutParams::Conv { bn: Some(bn), .. } = &mut unit.shortcut {
                f(bn);
            }
        }
        if let Some(bn) = &mut self.head_bn {
            f(bn);
        }
    }

    /// Trainable scalar count: conv, gate and FC weights, FC bias, BN gamma/beta, gate biases.
    pub fn count_params(&self) -> usize {
        self.count_trainable()
    }

    /// Converts every tensor to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        fn conv<T: Scalar, U: Scalar>(c: &Conv2dParams<T>) -> Conv2dParams<U> {
            Conv2dParams {
                name: c.name.clone(),
                weight: c.weight.cast(),
                bias: c.bias.as_ref().map(Tensor::cast),
                stride: c.stride,
                padding: c.padding,
            }
        }
        fn bn<T: Scalar, U: Scalar>(b: &BatchNormParams<T>) -> BatchNormParams<U> {
            BatchNormParams {
                name: b.name.clone(),
                gamma: b.gamma.cast(),
                beta: b.beta.cast(),
                running_mean: b.running_mean.cast(),
                running_var: b.running_var.cast(),
                momentum: b.momentum,
                epsilon: b.epsilon,
            }
        }
        let stages = self
            .stages
            .iter()
            .map(|stage| {
                stage
                    .iter()
                    .map(|u| {
                        let shortcut = match &u.shortcut {
                            crate::units::ShortcutParams::None => crate::units::ShortcutParams::None,
                            crate::units::ShortcutParams::Gate(gp) => crate::units::ShortcutParams::Gate(crate::nn::GateParams {
                                name: gp.name.clone(),
                                weight: gp.weight.cast(),
                                bias: gp.bias.cast(),
                            }),
                            crate::units::ShortcutParams::Conv { conv: c, bn: b } => crate::units::ShortcutParams::Conv {
                                conv: conv(c),
                                bn: b.as_ref().map(bn),
                            },
                        };
                        ResidualUnit::from_parts(u.cfg, u.name.clone(), u.convs.iter().map(conv).collect(), u.bns.iter().map(bn).collect(), shortcut)
                            .expect("same layout")
                    })
                    .collect()
            })
            .collect();
        Network {
            cfg: self.cfg,
            stem: conv(&self.stem),
            stem_bn: bn(&self.stem_bn),
            stages,
            head_bn: self.head_bn.as_ref().map(bn),
            fc: LinearParams {
                name: self.fc.name.clone(),
                weight: self.fc.weight.cast(),
                bias: self.fc.bias.cast(),
            },
        }
    }
}

impl<T: Scalar> Parameterized<T> for Network<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        self.stem.visit(f);
        self.stem_bn.visit(f);
        for unit in self.units() {
            unit.visit(f);
        }
        if let Some(bn) = &self.head_bn {
            bn.visit(f);
        }
        self.fc.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        self.stem.visit_mut(f);
        self.stem_bn.visit_mut(f);
        for unit in self.stages.iter_mut().flatten() {
            unit.visit_mut(f);
        }
        if let Some(bn) = &mut self.head_bn {
            bn.visit_mut(f);
        }
        self.fc.visit_mut(f);
    }
}
