//! Residual units in every shortcut and activation-order variant.

mod config;
mod rewire;
mod unit;

pub use config::{ActivationOrder, BranchShape, ResidualUnitConfig, ShortcutKind};
pub use rewire::{rewire_preactivation, AsymmetricChain, AsymmetricUnit, PreActChain};
pub use unit::{check_unit_gradients, shortcut_apply, ResidualUnit, ShortcutParams, UnitNodes, UnitTrace};
