//! One residual unit: `y = h(x) + F(x)`, `x_next = f(y)`.

use rand::RngCore;

use super::config::{ActivationOrder, BranchShape, ResidualUnitConfig, ShortcutKind};
use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::nn::{BatchNormParams, Conv2dParams, ForwardCtx, GateParams, ParamKind, Parameterized};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Conv(usize),
    Bn(usize),
    Relu,
}

/// Layer sequence of a unit: `pre` runs before the shortcut/branch split
/// (pre-activation shared with a projection shortcut), `body` is the rest of
/// the branch, `post` is the after-addition function.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Plan {
    pre: Vec<Step>,
    body: Vec<Step>,
    post: Vec<Step>,
    num_bn: usize,
}

impl Plan {
    fn new(cfg: &ResidualUnitConfig) -> Self {
        let k = cfg.branch.num_convs();
        let mut bn = 0;
        let mut next_bn = || {
            bn += 1;
            Step::Bn(bn - 1)
        };
        let (mut pre, mut body, mut post) = (Vec::new(), Vec::new(), Vec::new());
        match cfg.order {
            ActivationOrder::Original => {
                for i in 0..k {
                    body.extend([Step::Conv(i), next_bn()]);
                    if i + 1 < k {
                        body.push(Step::Relu);
                    }
                }
                post.push(Step::Relu);
            }
            ActivationOrder::BnAfterAdd => {
                for i in 0..k - 1 {
                    body.extend([Step::Conv(i), next_bn(), Step::Relu]);
                }
                body.push(Step::Conv(k - 1));
                post.extend([next_bn(), Step::Relu]);
            }
            ActivationOrder::ReluBeforeAdd => {
                for i in 0..k {
                    body.extend([Step::Conv(i), next_bn(), Step::Relu]);
                }
            }
            ActivationOrder::ReluOnlyPreAct => {
                if !cfg.shares_stem_activation {
                    pre.push(Step::Relu);
                }
                for i in 0..k {
                    if i > 0 {
                        body.push(Step::Relu);
                    }
                    body.extend([Step::Conv(i), next_bn()]);
                }
            }
            ActivationOrder::FullPreAct => {
                if !cfg.shares_stem_activation {
                    pre.extend([next_bn(), Step::Relu]);
                }
                for i in 0..k {
                    if i > 0 {
                        body.extend([next_bn(), Step::Relu]);
                    }
                    body.push(Step::Conv(i));
                }
            }
        }
        Plan { pre, body, post, num_bn: bn }
    }
}

/// Parameters of the shortcut path.
#[derive(Debug, Clone, PartialEq)]
pub enum ShortcutParams<T> {
    None,
    Gate(GateParams<T>),
    Conv {
        conv: Conv2dParams<T>,
        bn: Option<BatchNormParams<T>>,
    },
}

/// Node ids of the signals inside one unit, recorded on every forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitNodes {
    pub x_in: NodeId,
    pub branch_out: NodeId,
    pub shortcut_out: NodeId,
    pub pre_merge_sum: NodeId,
    pub x_out: NodeId,
}

/// Values of the signals inside one unit.
///
/// `pre_merge_sum` is exactly `shortcut_out + branch_out` as computed, and
/// `x_out` is the after-addition function applied to it.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitTrace<T> {
    pub x_in: Tensor<T>,
    pub branch_out: Tensor<T>,
    pub shortcut_out: Tensor<T>,
    pub pre_merge_sum: Tensor<T>,
    pub x_out: Tensor<T>,
}

impl<T: Scalar> UnitTrace<T> {
    pub fn from_graph(g: &Graph<T>, nodes: &UnitNodes) -> Self {
        Self {
            x_in: g.value(nodes.x_in).clone(),
            branch_out: g.value(nodes.branch_out).clone(),
            shortcut_out: g.value(nodes.shortcut_out).clone(),
            pre_merge_sum: g.value(nodes.pre_merge_sum).clone(),
            x_out: g.value(nodes.x_out).clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualUnit<T> {
    pub cfg: ResidualUnitConfig,
    pub name: String,
    pub convs: Vec<Conv2dParams<T>>,
    pub bns: Vec<BatchNormParams<T>>,
    pub shortcut: ShortcutParams<T>,
    plan: Plan,
}

impl<T: Scalar> ResidualUnit<T> {
    /// He-initializes a unit. BN layers start at gamma = 1, beta = 0 and the
    /// gate bias at the configured `b_g`.
    pub fn build(cfg: ResidualUnitConfig, name: impl Into<String>, rng: &mut dyn RngCore) -> Result<Self> {
        cfg.validate()?;
        let name = name.into();
        let plan = Plan::new(&cfg);
        let w = cfg.width();
        let conv_shapes: Vec<(usize, usize, usize, usize)> = match cfg.branch {
            BranchShape::Basic => vec![(cfg.in_channels, w, 3, cfg.stride), (w, w, 3, 1)],
            BranchShape::SingleLayer => vec![(cfg.in_channels, w, 3, cfg.stride)],
            BranchShape::Bottleneck => vec![
                (cfg.in_channels, w, 1, 1),
                (w, w, 3, cfg.stride),
                (w, cfg.out_channels, 1, 1),
            ],
        };
        let convs: Vec<Conv2dParams<T>> = conv_shapes
            .iter()
            .enumerate()
            .map(|(i, &(cin, cout, k, s))| Conv2dParams::he(format!("{name}.conv{i}"), cin, cout, k, s, rng))
            .collect();
        let bns = bn_channels(&plan, &convs, &cfg)
            .into_iter()
            .enumerate()
            .map(|(j, c)| BatchNormParams::new(format!("{name}.bn{j}"), c))
            .collect();
        let shortcut = match cfg.shortcut {
            ShortcutKind::ExclusiveGate { init_bias } | ShortcutKind::ShortcutOnlyGate { init_bias } => {
                ShortcutParams::Gate(GateParams::new(format!("{name}.gate"), cfg.in_channels, init_bias, rng))
            }
            ShortcutKind::Conv1x1 | ShortcutKind::Projection => {
                let conv = Conv2dParams::he(format!("{name}.shortcut"), cfg.in_channels, cfg.out_channels, 1, cfg.stride, rng);
                let bn = (!cfg.order.is_preactivation())
                    .then(|| BatchNormParams::new(format!("{name}.shortcut_bn"), cfg.out_channels));
                ShortcutParams::Conv { conv, bn }
            }
            _ => ShortcutParams::None,
        };
        Ok(Self {
            cfg,
            name,
            convs,
            bns,
            shortcut,
            plan,
        })
    }

    /// Assembles a unit from existing layers; counts and shapes must match
    /// what [`ResidualUnit::build`] would create for `cfg`.
    pub fn from_parts(
        cfg: ResidualUnitConfig,
        name: impl Into<String>,
        convs: Vec<Conv2dParams<T>>,
        bns: Vec<BatchNormParams<T>>,
        shortcut: ShortcutParams<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        let plan = Plan::new(&cfg);
        if convs.len() != cfg.branch.num_convs() || bns.len() != plan.num_bn {
            return Err(Error::InvalidConfig(format!(
                "{} / {} expects {} convs and {} BN layers, got {} and {}",
                cfg.order,
                cfg.branch,
                cfg.branch.num_convs(),
                plan.num_bn,
                convs.len(),
                bns.len()
            )));
        }
        let expected = bn_channels(&plan, &convs, &cfg);
        if bns.iter().map(|b| b.channels()).ne(expected.iter().copied()) {
            return Err(Error::InvalidConfig(format!("BN widths do not match {expected:?}")));
        }
        Ok(Self {
            cfg,
            name: name.into(),
            convs,
            bns,
            shortcut,
            plan,
        })
    }

    /// Zeroes the last weight layer of the branch, making `F ≡ 0`.
    pub fn zero_last_branch_conv(&mut self) {
        if let Some(conv) = self.convs.last_mut() {
            conv.zero_weights();
        }
    }

    fn run(&self, steps: &[Step], g: &mut Graph<T>, mut x: NodeId, ctx: &mut ForwardCtx<'_, T>) -> Result<NodeId> {
        for step in steps {
            x = match *step {
                Step::Conv(i) => self.convs[i].forward(g, x, ctx)?,
                Step::Bn(j) => self.bns[j].forward(g, x, ctx)?,
                Step::Relu => g.relu(x)?,
            };
        }
        Ok(x)
    }

    /// Forward pass of unit number `index` in its network.
    pub fn forward(&self, g: &mut Graph<T>, x: NodeId, index: usize, ctx: &mut ForwardCtx<'_, T>) -> Result<UnitNodes> {
        let xs = g.shape(x);
        if xs.len() != 4 || xs[1] != self.cfg.in_channels {
            return Err(Error::ShapeMismatch {
                op: "residual unit input",
                lhs: xs.to_vec(),
                rhs: vec![self.cfg.in_channels],
            });
        }
        let activated = self.run(&self.plan.pre, g, x, ctx)?;
        let shortcut_in = if self.cfg.shortcut == ShortcutKind::Projection {
            activated
        } else {
            x
        };
        let (shortcut_out, gate) = shortcut_forward(g, self.cfg.shortcut, &self.shortcut, shortcut_in, self.cfg.stride, self.cfg.out_channels, ctx)?;
        let mut branch = self.run(&self.plan.body, g, activated, ctx)?;
        if let Some(s) = self.cfg.branch_scale {
            branch = g.scale(branch, T::from_f64_lossy(s))?;
        }
        if let (ShortcutKind::ExclusiveGate { .. }, Some(gate)) = (self.cfg.shortcut, gate) {
            branch = g.mul(gate, branch)?;
        }
        if ctx.detach_branches.as_ref().is_some_and(|r| r.contains(&index)) {
            branch = g.detach(branch);
        }
        if g.shape(shortcut_out) != g.shape(branch) {
            return Err(Error::ShapeMismatch {
                op: "residual merge",
                lhs: g.shape(shortcut_out).to_vec(),
                rhs: g.shape(branch).to_vec(),
            });
        }
        let sum = g.add(shortcut_out, branch)?;
        let out = self.run(&self.plan.post, g, sum, ctx)?;
        Ok(UnitNodes {
            x_in: x,
            branch_out: branch,
            shortcut_out,
            pre_merge_sum: sum,
            x_out: out,
        })
    }

    /// Trainable tensors by name, in visiting order.
    pub fn trainable(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, kind, t| {
            if kind.trainable() {
                out.push((name.to_string(), t.clone()));
            }
        });
        out
    }
}

fn bn_channels<T: Scalar>(plan: &Plan, convs: &[Conv2dParams<T>], cfg: &ResidualUnitConfig) -> Vec<usize> {
    let mut channels = vec![0; plan.num_bn];
    let mut width = cfg.in_channels;
    for step in plan.pre.iter().chain(&plan.body).chain(&plan.post) {
        match *step {
            Step::Conv(i) => width = convs[i].out_channels(),
            Step::Bn(j) => channels[j] = width,
            Step::Relu => {}
        }
    }
    channels
}

/// Applies a shortcut transform on its own, returning `h(x)`.
///
/// Gates return `(1 − g(x)) ⊙ x`; dropout is the identity outside training.
pub fn shortcut_apply<T: Scalar>(
    g: &mut Graph<T>,
    kind: ShortcutKind,
    params: &ShortcutParams<T>,
    x: NodeId,
    ctx: &mut ForwardCtx<'_, T>,
) -> Result<NodeId> {
    let stride = match params {
        ShortcutParams::Conv { conv, .. } => conv.stride,
        _ => 1,
    };
    let out_c = match params {
        ShortcutParams::Conv { conv, .. } => conv.out_channels(),
        _ => g.shape(x)[1],
    };
    shortcut_forward(g, kind, params, x, stride, out_c, ctx).map(|(h, _)| h)
}

fn shortcut_forward<T: Scalar>(
    g: &mut Graph<T>,
    kind: ShortcutKind,
    params: &ShortcutParams<T>,
    x: NodeId,
    stride: usize,
    out_channels: usize,
    ctx: &mut ForwardCtx<'_, T>,
) -> Result<(NodeId, Option<NodeId>)> {
    let missing = || Error::InvalidConfig(format!("{kind} shortcut without matching parameters"));
    match kind {
        ShortcutKind::Identity => Ok((x, None)),
        ShortcutKind::ConstantScale { lambda } => Ok((g.scale(x, T::from_f64_lossy(lambda))?, None)),
        ShortcutKind::ExclusiveGate { .. } | ShortcutKind::ShortcutOnlyGate { .. } => {
            let ShortcutParams::Gate(gate) = params else {
                return Err(missing());
            };
            let gv = gate.forward(g, x, ctx)?;
            let carry = g.affine(gv, -T::one(), T::one())?;
            Ok((g.mul(carry, x)?, Some(gv)))
        }
        ShortcutKind::Conv1x1 | ShortcutKind::Projection => {
            let ShortcutParams::Conv { conv, bn } = params else {
                return Err(missing());
            };
            let mut h = conv.forward(g, x, ctx)?;
            if let Some(bn) = bn {
                h = bn.forward(g, h, ctx)?;
            }
            Ok((h, None))
        }
        ShortcutKind::Dropout { rate } => {
            let train = ctx.is_train();
            Ok((g.dropout(x, rate, train, ctx.rng())?, None))
        }
        ShortcutKind::ZeroPadIdentity => Ok((g.subsample_zero_pad(x, stride, out_channels)?, None)),
    }
}

impl<T: Scalar> Parameterized<T> for ResidualUnit<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, ParamKind, &Tensor<T>)) {
        for conv in &self.convs {
            conv.visit(f);
        }
        for bn in &self.bns {
            bn.visit(f);
        }
        match &self.shortcut {
            ShortcutParams::None => {}
            ShortcutParams::Gate(gate) => gate.visit(f),
            ShortcutParams::Conv { conv, bn } => {
                conv.visit(f);
                if let Some(bn) = bn {
                    bn.visit(f);
                }
            }
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor<T>)) {
        for conv in &mut self.convs {
            conv.visit_mut(f);
        }
        for bn in &mut self.bns {
            bn.visit_mut(f);
        }
        match &mut self.shortcut {
            ShortcutParams::None => {}
            ShortcutParams::Gate(gate) => gate.visit_mut(f),
            ShortcutParams::Conv { conv, bn } => {
                conv.visit_mut(f);
                if let Some(bn) = bn {
                    bn.visit_mut(f);
                }
            }
        }
    }
}

/// Finite-difference check of a 64-bit unit's gradients with respect to its
/// input and every trainable parameter, through a random linear probe of the
/// output. Dropout masks are redrawn from `seed` on every evaluation.
pub fn check_unit_gradients(
    unit: &ResidualUnit<f64>,
    x: &Tensor<f64>,
    mode: crate::nn::Mode,
    seed: u64,
    eps: f64,
) -> Result<crate::autograd::GradCheck> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let params = unit.trainable();
    let mut probe_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut inputs = vec![x.clone()];
    inputs.extend(params.iter().map(|(_, t)| t.clone()));
    let mut probe: Option<Tensor<f64>> = None;
    crate::autograd::grad_check_many(
        |g, ids| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ctx = ForwardCtx::new(mode, &mut rng);
            for ((name, _), &id) in params.iter().zip(&ids[1..]) {
                ctx.override_param(name.clone(), id);
            }
            let out = unit.forward(g, ids[0], 0, &mut ctx)?.x_out;
            let p = probe.get_or_insert_with(|| Tensor::random_normal(g.shape(out).to_vec(), 1.0, &mut probe_rng));
            g.weighted_sum(out, p)
        },
        &inputs,
        eps,
    )
}
