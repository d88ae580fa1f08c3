//! Asymmetric after-addition activation and its pre-activation rewiring.
//!
//! In the asymmetric form an activation `f̂` follows each addition but only
//! feeds the next unit's branch: `y_{l+1} = y_l + F_{l+1}(f̂(y_l))`. Moving
//! each `f̂` forward into the next unit turns the chain into full
//! pre-activation units with identity shortcuts, plus one activation at the
//! chain entry (absorbed by the first unit) and one at the exit.

use super::config::{ActivationOrder, BranchShape, ResidualUnitConfig, ShortcutKind};
use super::unit::{ResidualUnit, ShortcutParams};
use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::nn::{BatchNormParams, Conv2dParams, ForwardCtx};
use crate::scalar::Scalar;

/// Branch `conv → BN → ReLU → conv` followed by the asymmetric `f̂ = BN+ReLU`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricUnit<T> {
    pub conv_in: Conv2dParams<T>,
    pub bn_mid: BatchNormParams<T>,
    pub conv_out: Conv2dParams<T>,
    /// `f̂` applied after this unit's addition, feeding the next branch only.
    pub after_add: BatchNormParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricChain<T> {
    /// Activation on the chain input feeding the first branch.
    pub entry: BatchNormParams<T>,
    pub units: Vec<AsymmetricUnit<T>>,
}

/// The same weights wired as full pre-activation units.
#[derive(Debug, Clone, PartialEq)]
pub struct PreActChain<T> {
    pub units: Vec<ResidualUnit<T>>,
    /// Activation after the last addition.
    pub exit: BatchNormParams<T>,
}

fn bn_relu<T: Scalar>(bn: &BatchNormParams<T>, g: &mut Graph<T>, x: NodeId, ctx: &mut ForwardCtx<'_, T>) -> Result<NodeId> {
    let y = bn.forward(g, x, ctx)?;
    g.relu(y)
}

impl<T: Scalar> AsymmetricChain<T> {
    /// Random chain of `len` units at `channels` width.
    pub fn random(len: usize, channels: usize, rng: &mut dyn rand::RngCore) -> Self {
        let entry = BatchNormParams::new("entry", channels);
        let units = (0..len)
            .map(|l| AsymmetricUnit {
                conv_in: Conv2dParams::he(format!("u{l}.conv_in"), channels, channels, 3, 1, rng),
                bn_mid: BatchNormParams::new(format!("u{l}.bn_mid"), channels),
                conv_out: Conv2dParams::he(format!("u{l}.conv_out"), channels, channels, 3, 1, rng),
                after_add: BatchNormParams::new(format!("u{l}.after_add"), channels),
            })
            .collect();
        Self { entry, units }
    }

    /// Returns `(y_L, f̂(y_L))`.
    pub fn forward(&self, g: &mut Graph<T>, x: NodeId, ctx: &mut ForwardCtx<'_, T>) -> Result<(NodeId, NodeId)> {
        let mut y = x;
        let mut activated = bn_relu(&self.entry, g, x, ctx)?;
        for unit in &self.units {
            let h = unit.conv_in.forward(g, activated, ctx)?;
            let h = bn_relu(&unit.bn_mid, g, h, ctx)?;
            let f = unit.conv_out.forward(g, h, ctx)?;
            y = g.add(y, f)?;
            activated = bn_relu(&unit.after_add, g, y, ctx)?;
        }
        Ok((y, activated))
    }
}

impl<T: Scalar> PreActChain<T> {
    /// Returns `(y_L, exit(y_L))`.
    pub fn forward(&self, g: &mut Graph<T>, x: NodeId, ctx: &mut ForwardCtx<'_, T>) -> Result<(NodeId, NodeId)> {
        let mut y = x;
        for (i, unit) in self.units.iter().enumerate() {
            y = unit.forward(g, y, i, ctx)?.x_out;
        }
        let out = bn_relu(&self.exit, g, y, ctx)?;
        Ok((y, out))
    }
}

/// Recasts each after-addition activation as the pre-activation of the next
/// unit. Weights are moved, not copied into new names, so gradients of both
/// wirings can be compared parameter by parameter.
pub fn rewire_preactivation<T: Scalar>(chain: &AsymmetricChain<T>) -> Result<PreActChain<T>> {
    if chain.units.is_empty() {
        return Err(Error::InvalidArgument("cannot rewire an empty chain".into()));
    }
    let mut units = Vec::with_capacity(chain.units.len());
    let mut incoming = chain.entry.clone();
    for (l, unit) in chain.units.iter().enumerate() {
        let channels = unit.conv_in.in_channels();
        let cfg = ResidualUnitConfig::new(ShortcutKind::Identity, ActivationOrder::FullPreAct, BranchShape::Basic, channels);
        units.push(ResidualUnit::from_parts(
            cfg,
            format!("preact{l}"),
            vec![unit.conv_in.clone(), unit.conv_out.clone()],
            vec![incoming, unit.bn_mid.clone()],
            ShortcutParams::None,
        )?);
        incoming = unit.after_add.clone();
    }
    Ok(PreActChain { units, exit: incoming })
}
