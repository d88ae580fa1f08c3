//! Named experiment configs: one per shortcut-study row, one per
//! activation ordering, plus desk-scale runs.

use std::path::PathBuf;

use resprop_core::network::NetworkConfig;
use resprop_core::train::TrainConfig;
use resprop_core::units::{ActivationOrder, BranchShape, ShortcutKind};

use crate::config::{DataConfig, DatasetKind, ExperimentConfig, RunConfig};

/// Which published comparison a preset reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    /// Shortcut variants on ResNet-110 with ReLU after addition.
    Shortcuts,
    /// Activation orderings on ResNet-164.
    Activations,
    /// Small runs for laptops and CI.
    Desk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub study: Study,
    pub description: &'static str,
    /// Published CIFAR-10 test error in percent, or `None` for "fail" rows and desk runs.
    pub reference_error: Option<f64>,
    pub config: ExperimentConfig,
}

fn full_run(name: &str, network: NetworkConfig) -> ExperimentConfig {
    ExperimentConfig {
        network,
        train: TrainConfig::default(),
        data: DataConfig::default(),
        run: RunConfig {
            out_dir: PathBuf::from(format!("runs/{name}")),
            ..RunConfig::default()
        },
        analysis: Default::default(),
    }
}

fn shortcut_row(name: &'static str, description: &'static str, shortcut: ShortcutKind, branch_scale: Option<f64>, reference_error: Option<f64>) -> Preset {
    let mut net = NetworkConfig::cifar(110, BranchShape::Basic, shortcut, ActivationOrder::Original);
    net.branch_scale = branch_scale;
    Preset {
        name,
        study: Study::Shortcuts,
        description,
        reference_error,
        config: full_run(name, net),
    }
}

fn order_row(name: &'static str, description: &'static str, order: ActivationOrder, reference_error: f64) -> Preset {
    let net = NetworkConfig::cifar(164, BranchShape::Bottleneck, ShortcutKind::Identity, order);
    Preset {
        name,
        study: Study::Activations,
        description,
        reference_error: Some(reference_error),
        config: full_run(name, net),
    }
}

/// Desk-scale base: ResNet-20 with widths 8/16/32 on 16×16 synthetic images.
pub fn desk_config(name: &str, shortcut: ShortcutKind, order: ActivationOrder, branch_scale: Option<f64>) -> ExperimentConfig {
    let mut net = NetworkConfig::cifar(20, BranchShape::Basic, shortcut, order);
    net.widths = [8, 16, 32];
    net.input_size = (16, 16);
    net.branch_scale = branch_scale;
    ExperimentConfig {
        network: net,
        train: TrainConfig {
            total_iters: 2000,
            warmup: false,
            decay_points: vec![1000, 1500],
            batch_size: 16,
            log_every: 100,
            eval_every: 1000,
            ..TrainConfig::default()
        },
        // Harder than the default synthetic set, so that early and final
        // losses stay well clear of zero and the variants separate.
        data: DataConfig {
            dataset: DatasetKind::Synthetic,
            synthetic_noise: 1.5,
            synthetic_jitter: 3.0,
            ..DataConfig::default()
        },
        run: RunConfig {
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from(format!("runs/{name}")),
            deterministic: true,
            checkpoint_every: 0,
        },
        analysis: Default::default(),
    }
}

fn desk(name: &'static str, description: &'static str, shortcut: ShortcutKind, order: ActivationOrder, branch_scale: Option<f64>) -> Preset {
    Preset {
        name,
        study: Study::Desk,
        description,
        reference_error: None,
        config: desk_config(name, shortcut, order, branch_scale),
    }
}

/// The bundled catalog, in display order.
pub fn catalog() -> Vec<Preset> {
    use ActivationOrder as O;
    use ShortcutKind as S;
    let mut smoke = desk_config("smoke", S::Identity, O::FullPreAct, None);
    smoke.network.depth = 8;
    smoke.train.total_iters = 500;
    smoke.train.decay_points = vec![250, 375];
    smoke.train.eval_every = 500;
    smoke.run.seeds = vec![1];
    vec![
        Preset {
            name: "smoke",
            study: Study::Desk,
            description: "ResNet-8, full pre-activation, 500 iterations on synthetic data",
            reference_error: None,
            config: smoke,
        },
        shortcut_row("table1-original", "identity shortcut, F unscaled", S::Identity, None, Some(6.61)),
        shortcut_row("table1-scale-0-1", "shortcut scaled by 0 (plain net)", S::ConstantScale { lambda: 0.0 }, None, None),
        shortcut_row("table1-scale-0.5-1", "shortcut scaled by 0.5, F unscaled", S::ConstantScale { lambda: 0.5 }, None, None),
        shortcut_row("table1-scale-0.5-0.5", "shortcut and F both scaled by 0.5", S::ConstantScale { lambda: 0.5 }, Some(0.5), Some(12.35)),
        shortcut_row("table1-exclusive-gate-0", "exclusive gating, b_g = 0 (row covers 0 to -5)", S::ExclusiveGate { init_bias: 0.0 }, None, None),
        shortcut_row("table1-exclusive-gate-6", "exclusive gating, b_g = -6", S::ExclusiveGate { init_bias: -6.0 }, None, Some(8.70)),
        shortcut_row("table1-exclusive-gate-7", "exclusive gating, b_g = -7", S::ExclusiveGate { init_bias: -7.0 }, None, Some(9.81)),
        shortcut_row("table1-shortcut-gate-0", "shortcut-only gating, b_g = 0", S::ShortcutOnlyGate { init_bias: 0.0 }, None, Some(12.86)),
        shortcut_row("table1-shortcut-gate-6", "shortcut-only gating, b_g = -6", S::ShortcutOnlyGate { init_bias: -6.0 }, None, Some(6.91)),
        shortcut_row("table1-conv1x1", "1x1 convolution on every shortcut", S::Conv1x1, None, Some(12.22)),
        shortcut_row("table1-dropout", "dropout 0.5 on every shortcut", S::Dropout { rate: 0.5 }, None, None),
        order_row("table2-original-164", "BN and ReLU after the weights, ReLU after addition", O::Original, 5.93),
        order_row("table2-bn-after-add-164", "BN moved after the addition", O::BnAfterAdd, 6.50),
        order_row("table2-relu-before-add-164", "ReLU moved before the addition", O::ReluBeforeAdd, 6.14),
        order_row("table2-relu-only-preact-164", "ReLU as pre-activation, BN after the weights", O::ReluOnlyPreAct, 5.91),
        order_row("table2-fullpreact-164", "BN and ReLU both as pre-activation", O::FullPreAct, 5.46),
        desk("desk-identity", "desk ablation: identity shortcut, ReLU after addition", S::Identity, O::Original, None),
        desk("desk-scale-0.5-0.5", "desk ablation: shortcut and F scaled by 0.5", S::ConstantScale { lambda: 0.5 }, O::Original, Some(0.5)),
        desk("desk-fullpreact", "desk ablation: full pre-activation", S::Identity, O::FullPreAct, None),
        desk("desk-bn-after-add", "desk ablation: BN after addition", S::Identity, O::BnAfterAdd, None),
        desk("desk-shortcut-gate-6", "desk ablation: shortcut-only gating, b_g = -6", S::ShortcutOnlyGate { init_bias: -6.0 }, O::Original, None),
        desk("desk-shortcut-gate-0", "desk ablation: shortcut-only gating, b_g = 0", S::ShortcutOnlyGate { init_bias: 0.0 }, O::Original, None),
    ]
}

pub fn find(name: &str) -> Option<Preset> {
    catalog().into_iter().find(|p| p.name == name)
}

/// Name of the preset whose config equals `cfg`, if any.
pub fn identify(cfg: &ExperimentConfig) -> Option<&'static str> {
    catalog().into_iter().find(|p| &p.config == cfg).map(|p| p.name)
}
