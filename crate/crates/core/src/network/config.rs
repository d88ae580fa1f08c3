use crate::error::{Error, Result};
use crate::units::{ActivationOrder, BranchShape, ShortcutKind};

/// Whole-network description for CIFAR-style residual nets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub depth: usize,
    pub branch: BranchShape,
    /// Shortcut used by every unit that keeps its input shape.
    pub shortcut: ShortcutKind,
    pub order: ActivationOrder,
    /// Internal branch widths per stage; bottleneck outputs are 4x these.
    pub widths: [usize; 3],
    pub num_classes: usize,
    pub input_size: (usize, usize),
    pub input_channels: usize,
    /// Multiplier on `F` for units carrying `shortcut`.
    pub branch_scale: Option<f64>,
    /// Shortcut for units that change width or resolution:
    /// [`ShortcutKind::Projection`] or [`ShortcutKind::ZeroPadIdentity`].
    pub boundary_shortcut: ShortcutKind,
}

impl NetworkConfig {
    /// CIFAR-10 defaults: 32×32 RGB input, widths 16/32/64, projection
    /// shortcuts at stage boundaries.
    pub fn cifar(depth: usize, branch: BranchShape, shortcut: ShortcutKind, order: ActivationOrder) -> Self {
        Self {
            depth,
            branch,
            shortcut,
            order,
            widths: [16, 32, 64],
            num_classes: 10,
            input_size: (32, 32),
            input_channels: 3,
            branch_scale: None,
            boundary_shortcut: ShortcutKind::Projection,
        }
    }

    /// Convolution layers per unit and the resulting depth rule.
    fn depth_rule(&self) -> (usize, &'static str) {
        match self.branch {
            BranchShape::Basic => (6, "6n+2"),
            BranchShape::Bottleneck => (9, "9n+2"),
            BranchShape::SingleLayer => (3, "3n+2"),
        }
    }

    /// Units per stage `n`.
    pub fn units_per_stage(&self) -> Result<usize> {
        let (step, rule) = self.depth_rule();
        if self.depth < 2 + step || !(self.depth - 2).is_multiple_of(step) {
            return Err(Error::InvalidDepth {
                depth: self.depth,
                shape: self.branch.name(),
                rule,
            });
        }
        Ok((self.depth - 2) / step)
    }

    /// Output channels of each stage.
    pub fn stage_outputs(&self) -> [usize; 3] {
        self.widths.map(|w| w * self.branch.expansion())
    }

    pub fn validate(&self) -> Result<()> {
        self.units_per_stage()?;
        self.shortcut.validate()?;
        if self.shortcut.changes_dimensions() {
            return Err(Error::InvalidConfig(format!(
                "{} is reserved for stage boundaries; use conv1x1 for a convolutional shortcut everywhere",
                self.shortcut
            )));
        }
        if !self.boundary_shortcut.changes_dimensions() {
            return Err(Error::InvalidConfig(format!(
                "boundary shortcut must be projection or zero-pad, got {}",
                self.boundary_shortcut
            )));
        }
        if self.widths.contains(&0) || self.num_classes < 2 || self.input_channels == 0 {
            return Err(Error::InvalidConfig("widths, classes and input channels must be positive (classes ≥ 2)".into()));
        }
        let (h, w) = self.input_size;
        if h < 4 || w < 4 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::InvalidConfig(format!("input size {h}×{w} must be a multiple of 4")));
        }
        if let Some(s) = self.branch_scale {
            if !s.is_finite() {
                return Err(Error::InvalidConfig(format!("branch scale {s}")));
            }
        }
        Ok(())
    }
}
