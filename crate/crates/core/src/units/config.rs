use std::fmt;

use crate::error::{Error, Result};

/// What the shortcut path `h` does to the unit input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShortcutKind {
    /// `h(x) = x`.
    Identity,
    /// `h(x) = λx`.
    ConstantScale { lambda: f64 },
    /// Shortcut scaled by `1 − g(x)`, branch by `g(x)`.
    ExclusiveGate { init_bias: f64 },
    /// Shortcut scaled by `1 − g(x)`; branch untouched.
    ShortcutOnlyGate { init_bias: f64 },
    /// Learned 1×1 convolution on every unit.
    Conv1x1,
    /// Dropout on the identity shortcut.
    Dropout { rate: f64 },
    /// Strided 1×1 convolution where width or resolution changes.
    Projection,
    /// Strided subsampling with zero-filled extra channels; the parameter-free
    /// alternative to [`ShortcutKind::Projection`].
    ZeroPadIdentity,
}

impl ShortcutKind {
    /// Whether this shortcut can connect units of different shape.
    pub fn changes_dimensions(self) -> bool {
        matches!(self, ShortcutKind::Projection | ShortcutKind::ZeroPadIdentity)
    }

    pub fn is_gate(self) -> bool {
        matches!(
            self,
            ShortcutKind::ExclusiveGate { .. } | ShortcutKind::ShortcutOnlyGate { .. }
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ShortcutKind::Identity => "identity",
            ShortcutKind::ConstantScale { .. } => "constant-scale",
            ShortcutKind::ExclusiveGate { .. } => "exclusive-gate",
            ShortcutKind::ShortcutOnlyGate { .. } => "shortcut-only-gate",
            ShortcutKind::Conv1x1 => "conv1x1",
            ShortcutKind::Dropout { .. } => "dropout",
            ShortcutKind::Projection => "projection",
            ShortcutKind::ZeroPadIdentity => "zero-pad",
        }
    }

    pub(crate) fn validate(self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidConfig(what));
        match self {
            ShortcutKind::ConstantScale { lambda } if !lambda.is_finite() => bad(format!("lambda {lambda}")),
            ShortcutKind::ExclusiveGate { init_bias } | ShortcutKind::ShortcutOnlyGate { init_bias }
                if !init_bias.is_finite() =>
            {
                bad(format!("gate bias {init_bias}"))
            }
            ShortcutKind::Dropout { rate } if !(0.0..1.0).contains(&rate) => bad(format!("dropout rate {rate}")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ShortcutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ShortcutKind::ConstantScale { lambda } => write!(f, "constant-scale({lambda})"),
            ShortcutKind::ExclusiveGate { init_bias } => write!(f, "exclusive-gate(b_g={init_bias})"),
            ShortcutKind::ShortcutOnlyGate { init_bias } => write!(f, "shortcut-only-gate(b_g={init_bias})"),
            ShortcutKind::Dropout { rate } => write!(f, "dropout({rate})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Where BN and ReLU sit relative to the weight layers and the addition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationOrder {
    /// conv-BN-ReLU-conv-BN, add, ReLU.
    Original,
    /// conv-BN-ReLU-conv, add, BN, ReLU.
    BnAfterAdd,
    /// conv-BN-ReLU-conv-BN-ReLU, add.
    ReluBeforeAdd,
    /// ReLU-conv-BN-ReLU-conv-BN, add.
    ReluOnlyPreAct,
    /// BN-ReLU-conv-BN-ReLU-conv, add.
    FullPreAct,
}

impl ActivationOrder {
    pub const ALL: [ActivationOrder; 5] = [
        ActivationOrder::Original,
        ActivationOrder::BnAfterAdd,
        ActivationOrder::ReluBeforeAdd,
        ActivationOrder::ReluOnlyPreAct,
        ActivationOrder::FullPreAct,
    ];

    /// Activations precede the weight layers.
    pub fn is_preactivation(self) -> bool {
        matches!(self, ActivationOrder::ReluOnlyPreAct | ActivationOrder::FullPreAct)
    }

    /// The after-addition function `f` is the identity.
    pub fn identity_after_addition(self) -> bool {
        !matches!(self, ActivationOrder::Original | ActivationOrder::BnAfterAdd)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationOrder::Original => "original",
            ActivationOrder::BnAfterAdd => "bn-after-add",
            ActivationOrder::ReluBeforeAdd => "relu-before-add",
            ActivationOrder::ReluOnlyPreAct => "relu-only-preact",
            ActivationOrder::FullPreAct => "full-preact",
        }
    }
}

impl fmt::Display for ActivationOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchShape {
    /// Two 3×3 convolutions at the unit width.
    Basic,
    /// 1×1 reduce to `w`, 3×3 at `w`, 1×1 restore to `4w`.
    Bottleneck,
    /// One 3×3 convolution.
    SingleLayer,
}

impl BranchShape {
    pub fn name(self) -> &'static str {
        match self {
            BranchShape::Basic => "basic",
            BranchShape::Bottleneck => "bottleneck",
            BranchShape::SingleLayer => "single",
        }
    }

    pub fn num_convs(self) -> usize {
        match self {
            BranchShape::Basic => 2,
            BranchShape::Bottleneck => 3,
            BranchShape::SingleLayer => 1,
        }
    }

    /// Output width relative to the internal width.
    pub fn expansion(self) -> usize {
        match self {
            BranchShape::Bottleneck => 4,
            _ => 1,
        }
    }
}

impl fmt::Display for BranchShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Declarative description of one residual unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualUnitConfig {
    pub shortcut: ShortcutKind,
    pub order: ActivationOrder,
    pub branch: BranchShape,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    /// Literal multiplier on the branch output before the merge.
    pub branch_scale: Option<f64>,
    /// The first unit after the stem: its leading pre-activation already ran
    /// on the stem output, before the split into shortcut and branch.
    pub shares_stem_activation: bool,
}

impl ResidualUnitConfig {
    pub fn new(shortcut: ShortcutKind, order: ActivationOrder, branch: BranchShape, channels: usize) -> Self {
        Self {
            shortcut,
            order,
            branch,
            in_channels: channels,
            out_channels: channels,
            stride: 1,
            branch_scale: None,
            shares_stem_activation: false,
        }
    }

    /// Internal width of the branch.
    pub fn width(&self) -> usize {
        self.out_channels / self.branch.expansion()
    }

    pub fn validate(&self) -> Result<()> {
        self.shortcut.validate()?;
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidConfig("channel counts must be positive".into()));
        }
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::InvalidConfig(format!("stride {} (expected 1 or 2)", self.stride)));
        }
        if !self.out_channels.is_multiple_of(self.branch.expansion()) {
            return Err(Error::InvalidConfig(format!(
                "bottleneck output width {} is not a multiple of 4",
                self.out_channels
            )));
        }
        let reshapes = self.stride != 1 || self.in_channels != self.out_channels;
        if reshapes && !self.shortcut.changes_dimensions() {
            return Err(Error::InvalidConfig(format!(
                "{} → {} channels at stride {} needs a projection or zero-pad shortcut, not {}",
                self.in_channels, self.out_channels, self.stride, self.shortcut
            )));
        }
        if self.shortcut == ShortcutKind::ZeroPadIdentity && self.out_channels < self.in_channels {
            return Err(Error::InvalidConfig("zero-pad shortcut cannot reduce width".into()));
        }
        if let Some(s) = self.branch_scale {
            if !s.is_finite() {
                return Err(Error::InvalidConfig(format!("branch scale {s}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_change_needs_projection() {
        let mut cfg = ResidualUnitConfig::new(ShortcutKind::Identity, ActivationOrder::Original, BranchShape::Basic, 16);
        cfg.out_channels = 32;
        cfg.stride = 2;
        assert!(cfg.validate().is_err());
        cfg.shortcut = ShortcutKind::Projection;
        assert!(cfg.validate().is_ok());
        cfg.shortcut = ShortcutKind::ZeroPadIdentity;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_bad_parameters() {
        let base = ResidualUnitConfig::new(ShortcutKind::Identity, ActivationOrder::FullPreAct, BranchShape::Basic, 4);
        for kind in [
            ShortcutKind::Dropout { rate: 1.0 },
            ShortcutKind::ConstantScale { lambda: f64::NAN },
            ShortcutKind::ExclusiveGate { init_bias: f64::INFINITY },
        ] {
            assert!(ResidualUnitConfig { shortcut: kind, ..base }.validate().is_err(), "{kind}");
        }
        assert!(ResidualUnitConfig { stride: 3, ..base }.validate().is_err());
        let bottleneck = ResidualUnitConfig {
            branch: BranchShape::Bottleneck,
            out_channels: 6,
            in_channels: 6,
            ..base
        };
        assert!(bottleneck.validate().is_err());
    }

    #[test]
    fn bottleneck_width() {
        let cfg = ResidualUnitConfig::new(ShortcutKind::Identity, ActivationOrder::FullPreAct, BranchShape::Bottleneck, 64);
        assert_eq!(cfg.width(), 16);
    }
}
