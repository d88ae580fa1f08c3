use std::collections::HashMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{synthetic, SyntheticSpec};
use crate::network::{Network, NetworkConfig};
use crate::nn::{ParamKind, Parameterized};
use crate::tensor::Tensor;
use crate::units::{ActivationOrder, BranchShape, ShortcutKind};
use crate::Error;

#[test]
fn schedule_boundaries() {
    let cfg = TrainConfig::default();
    let table = [
        (0, 0.01),
        (100, 0.01),
        (399, 0.01),
        (400, 0.1),
        (31_999, 0.1),
        (32_000, 0.01),
        (47_999, 0.01),
        (48_000, 0.001),
        (63_999, 0.001),
    ];
    for (iter, lr) in table {
        assert_eq!(lr_at(iter, &cfg), lr, "iter {iter}");
    }
    let no_warmup = TrainConfig { warmup: false, ..TrainConfig::default() };
    assert_eq!(lr_at(0, &no_warmup), 0.1);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let bad = [
        TrainConfig { decay_points: vec![48_000, 32_000], ..TrainConfig::default() },
        TrainConfig { decay_points: vec![100, 100], ..TrainConfig::default() },
        TrainConfig { lr_initial: 0.0, ..TrainConfig::default() },
        TrainConfig { batch_size: 1, ..TrainConfig::default() },
        TrainConfig { momentum: 1.0, ..TrainConfig::default() },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
}

#[test]
fn sgd_closed_forms() {
    let (mut p, mut v) = ([1.0f64], [0.0f64]);
    sgd_update(&mut p, &[1.0], &mut v, 0.1, 0.0, 0.0);
    assert_eq!(p[0], 1.0 - 0.1);

    let (mut p, mut v) = ([0.0f64], [0.0f64]);
    sgd_update(&mut p, &[1.0], &mut v, 1.0, 0.9, 0.0);
    sgd_update(&mut p, &[1.0], &mut v, 1.0, 0.9, 0.0);
    assert!((p[0] + 2.9).abs() < 1e-15, "{}", p[0]);

    let (mut p, mut v) = ([3.0f64], [0.0f64]);
    for _ in 0..10 {
        sgd_update(&mut p, &[0.0], &mut v, 0.1, 0.0, 1e-4);
    }
    let expected = 3.0 * (1.0f64 - 1e-5).powi(10);
    assert!((p[0] - expected).abs() < 1e-14, "{} vs {expected}", p[0]);
}

fn small_net(seed: u64) -> Network<f32> {
    let mut cfg = NetworkConfig::cifar(8, BranchShape::Basic, ShortcutKind::ShortcutOnlyGate { init_bias: -2.0 }, ActivationOrder::FullPreAct);
    cfg.widths = [4, 4, 4];
    cfg.input_size = (8, 8);
    Network::build(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn unit_grads(net: &Network<f32>) -> HashMap<String, Vec<f32>> {
    let mut grads = HashMap::new();
    net.visit(&mut |name, kind, t| {
        if kind.trainable() {
            grads.insert(name.to_string(), vec![0.0; t.numel()]);
        }
    });
    grads
}

#[test]
fn weight_decay_skips_normalization_and_gate_bias() {
    let mut net = small_net(0);
    let before = net.clone();
    let mut state = SgdState::default();
    let hp = SgdParams { lr: 0.1, momentum: 0.0, weight_decay: 0.5, decay_all: false };
    sgd_step(&mut net, &unit_grads(&before), &mut state, hp).unwrap();
    let mut changed: HashMap<ParamKind, bool> = HashMap::new();
    let mut old = Vec::new();
    before.visit(&mut |_, _, t| old.push(t.clone()));
    let mut i = 0;
    net.visit(&mut |_, kind, t| {
        let moved = t != &old[i];
        *changed.entry(kind).or_default() |= moved;
        i += 1;
    });
    assert!(changed[&ParamKind::Weight]);
    for kind in [ParamKind::Norm, ParamKind::GateBias, ParamKind::Bias, ParamKind::RunningStat] {
        assert!(!changed[&kind], "{kind:?}");
    }

    let mut all = before.clone();
    let hp = SgdParams { decay_all: true, ..hp };
    sgd_step(&mut all, &unit_grads(&before), &mut SgdState::default(), hp).unwrap();
    assert_ne!(all.stem_bn.gamma, before.stem_bn.gamma);
}

#[test]
fn sgd_rejects_negative_rate_and_bad_shapes() {
    let mut net = small_net(1);
    let hp = SgdParams { lr: -0.1, momentum: 0.9, weight_decay: 0.0, decay_all: false };
    assert!(sgd_step(&mut net, &HashMap::new(), &mut SgdState::default(), hp).is_err());
    let mut grads = HashMap::new();
    grads.insert("stem.conv.weight".to_string(), vec![1.0f32; 3]);
    let hp = SgdParams { lr: 0.1, ..hp };
    assert!(sgd_step(&mut net, &grads, &mut SgdState::default(), hp).is_err());
}

proptest! {
    #[test]
    fn zero_rate_leaves_params_bit_identical(
        p in prop::collection::vec(-1e3f64..1e3, 1..16),
        seed in any::<u64>(),
        momentum in 0.0f64..0.99,
        wd in 0.0f64..1e-2,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<f64> = p.iter().map(|_| rng.random_range(-10.0..10.0)).collect();
        let mut v: Vec<f64> = p.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut q = p.clone();
        sgd_update(&mut q, &g, &mut v, 0.0, momentum, wd);
        prop_assert_eq!(q.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), p.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn flip_is_an_involution(seed in any::<u64>(), dy in 0usize..=8, dx in 0usize..=8) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img: Vec<f32> = (0..3 * 6 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let once = crop_flip(&img, [3, 6, 5], PAD, PAD, true);
        prop_assert_eq!(crop_flip(&once, [3, 6, 5], PAD, PAD, true), img.clone());
        let shifted = crop_flip(&img, [3, 6, 5], dy, dx, false);
        prop_assert_eq!(shifted.len(), img.len());
    }
}

#[test]
fn crop_offsets() {
    let img: Vec<f32> = (1..=3 * 32 * 32).map(|v| v as f32).collect();
    assert_eq!(crop_flip(&img, [3, 32, 32], 4, 4, false), img);
    let corner = crop_flip(&img, [3, 32, 32], 0, 0, false);
    for c in 0..3 {
        for y in 0..32 {
            for x in 0..32 {
                let v = corner[(c * 32 + y) * 32 + x];
                if y < 4 || x < 4 {
                    assert_eq!(v, 0.0);
                } else {
                    assert_eq!(v, img[(c * 32 + y - 4) * 32 + x - 4]);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = augment(&img, [3, 32, 32], &mut rng);
    assert_eq!(out.len(), img.len());
}

#[test]
fn metrics_rows_round_trip() {
    let row = MetricsRow { iter: 500, epoch: 8.0, lr: 0.1, train_loss: 1.25, train_err: 40.5, test_err: Some(42.0), wall_ms: 17 };
    assert_eq!(MetricsRow::parse_csv(&row.to_csv()).unwrap(), row);
    let no_test = MetricsRow { test_err: None, ..row };
    assert_eq!(no_test.to_csv(), "500,8,0.1,1.25,40.5,,17");
    let text = format!("{METRICS_HEADER}\n{}\n{}\n", row.to_csv(), no_test.to_csv());
    assert_eq!(parse_metrics_csv(&text).unwrap(), vec![row, no_test]);
    assert!(parse_metrics_csv("iter,loss\n1,2\n").is_err());
}

fn tiny_data(n: usize, seed: u64) -> (crate::data::Dataset, crate::data::Dataset) {
    synthetic(&SyntheticSpec::new(n, 1000, 10, 8, seed)).unwrap()
}

#[test]
fn untrained_net_is_at_chance() {
    let (_, test) = tiny_data(10, 3);
    let mut errs: Vec<f64> = (0..5).map(|s| evaluate(&small_net(s), &test, 250).unwrap()).collect();
    errs.sort_by(f64::total_cmp);
    assert!((errs[2] - 90.0).abs() <= 3.0, "{errs:?}");
}

fn quick_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        total_iters: 30,
        batch_size: 8,
        warmup: false,
        decay_points: vec![20],
        log_every: 10,
        eval_every: 15,
        seed,
        deterministic: true,
        ..TrainConfig::default()
    }
}

#[test]
fn deterministic_runs_are_bit_identical() {
    let (train_set, test) = tiny_data(64, 4);
    let run = || {
        let mut net = small_net(9);
        let mut csv = String::new();
        train(&mut net, &train_set, Some(&test), &quick_cfg(5), &mut |r, _| {
            csv.push_str(&r.to_csv());
            csv.push('\n');
            Ok(())
        })
        .unwrap();
        (csv, net)
    };
    let (a, net_a) = run();
    let (b, net_b) = run();
    assert_eq!(a, b);
    assert_eq!(net_a, net_b);
    let rows = parse_metrics_csv(&format!("{METRICS_HEADER}\n{a}")).unwrap();
    assert_eq!(rows.iter().map(|r| r.iter).collect::<Vec<_>>(), vec![10, 20, 30]);
    assert_eq!(rows.iter().map(|r| r.lr).collect::<Vec<_>>(), vec![0.1, 0.1, 0.01]);
    assert!(rows[0].test_err.is_none() && rows[2].test_err.is_some());
    assert!(rows.iter().all(|r| r.wall_ms == 0));
}

#[test]
fn a_stopped_run_is_a_prefix_of_the_full_run() {
    let (train_set, _) = tiny_data(64, 4);
    let rows = |total_iters: usize| {
        let mut net = small_net(9);
        let cfg = TrainConfig { total_iters, eval_every: total_iters, ..quick_cfg(5) };
        train(&mut net, &train_set, None, &cfg, &mut |_, _| Ok(())).unwrap().rows
    };
    let (short, full) = (rows(20), rows(30));
    assert_eq!(short.len(), 2);
    for (a, b) in short.iter().zip(&full) {
        assert_eq!((a.iter, a.lr, a.train_loss, a.train_err), (b.iter, b.lr, b.train_loss, b.train_err));
    }
}

#[test]
fn diverging_run_names_the_iteration() {
    let (train_set, _) = tiny_data(64, 6);
    let mut net = small_net(10);
    let cfg = TrainConfig { lr_initial: 1e30, ..quick_cfg(0) };
    let err = train(&mut net, &train_set, None, &cfg, &mut |_, _| Ok(())).unwrap_err();
    let Error::NanLoss { iter } = err else { panic!("{err}") };
    assert!(err.to_string().contains(&format!("iteration {iter}")));
}

#[test]
fn rejects_batch_larger_than_dataset() {
    let (train_set, _) = tiny_data(4, 7);
    let mut net = small_net(11);
    assert!(train(&mut net, &train_set, None, &quick_cfg(0), &mut |_, _| Ok(())).is_err());
}

#[test]
fn fail_flag_threshold() {
    let outcome = |loss: f64, err: Option<f64>| TrainOutcome { rows: vec![], final_train_loss: loss, final_test_err: err };
    assert!(outcome(0.5, Some(20.5)).failed());
    assert!(!outcome(0.5, Some(20.0)).failed());
    assert!(outcome(f64::NAN, Some(5.0)).failed());
}

#[test]
fn train_step_changes_params() {
    let mut net = small_net(12);
    let before = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::<f32>::random_normal(vec![4, 3, 8, 8], 1.0, &mut rng);
    let hp = SgdParams { lr: 0.1, momentum: 0.9, weight_decay: 1e-4, decay_all: false };
    let (loss, wrong) = train_step(&mut net, &mut SgdState::default(), x, &[0, 1, 2, 3], hp, 0, &mut rng).unwrap();
    assert!(loss.is_finite() && wrong <= 4);
    assert_ne!(net.stem.weight, before.stem.weight);
    assert_ne!(net.stem_bn.running_mean, before.stem_bn.running_mean);
}
