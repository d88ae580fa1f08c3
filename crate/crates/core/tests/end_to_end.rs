use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resprop_core::data::{synthetic, SyntheticSpec};
use resprop_core::lab::telescope_check;
use resprop_core::network::{load_checkpoint, save_checkpoint, Network, NetworkConfig};
use resprop_core::nn::Mode;
use resprop_core::train::{evaluate, train, TrainConfig};
use resprop_core::units::{ActivationOrder, BranchShape, ShortcutKind};

fn small(depth: usize, order: ActivationOrder, seed: u64) -> Network<f32> {
    let mut cfg = NetworkConfig::cifar(depth, BranchShape::Basic, ShortcutKind::Identity, order);
    cfg.widths = [4, 8, 8];
    cfg.input_size = (8, 8);
    Network::build(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn short_training_run_learns_and_round_trips() {
    let (train_set, test_set) = synthetic(&SyntheticSpec::new(400, 100, 10, 8, 3)).unwrap();
    let mut net = small(8, ActivationOrder::FullPreAct, 5);
    let cfg = TrainConfig {
        total_iters: 300,
        batch_size: 16,
        warmup: false,
        decay_points: vec![200],
        log_every: 50,
        eval_every: 300,
        seed: 5,
        deterministic: true,
        ..Default::default()
    };
    let out = train(&mut net, &train_set, Some(&test_set), &cfg, &mut |_, _| Ok(())).unwrap();
    let first = out.rows.first().unwrap().train_loss;
    assert!(out.final_train_loss < first, "{first} -> {}", out.final_train_loss);
    assert!(out.final_train_loss < 10f64.ln());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.bin");
    save_checkpoint(&net, &path).unwrap();
    let mut restored = small(8, ActivationOrder::FullPreAct, 99);
    load_checkpoint(&mut restored, &path).unwrap();
    let a = evaluate(&net, &test_set, 50).unwrap();
    let b = evaluate(&restored, &test_set, 50).unwrap();
    assert_eq!(a, b);
    assert_eq!(Some(a), out.final_test_err);
}

#[test]
fn telescoping_holds_on_a_trained_preactivation_net() {
    let (train_set, test_set) = synthetic(&SyntheticSpec::new(200, 20, 10, 8, 4)).unwrap();
    let mut net = small(20, ActivationOrder::FullPreAct, 8);
    let cfg = TrainConfig {
        total_iters: 60,
        batch_size: 8,
        warmup: false,
        decay_points: vec![],
        log_every: 60,
        eval_every: 60,
        seed: 8,
        deterministic: true,
        ..Default::default()
    };
    train(&mut net, &train_set, None, &cfg, &mut |_, _| Ok(())).unwrap();
    let net: Network<f64> = net.cast();
    let x = test_set.batch::<f64>(&[0, 1, 2, 3]);
    for r in net.shape_preserving_ranges().into_iter().filter(|r| r.len() > 1) {
        let residual = telescope_check(&net, &x, r.start, r.end, Mode::Eval).unwrap();
        assert!(residual < 1e-12, "{r:?}: {residual}");
    }
}
