use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::network::NetworkConfig;
use crate::units::{ActivationOrder, BranchShape};

fn tiny(depth: usize, shortcut: ShortcutKind, order: ActivationOrder) -> NetworkConfig {
    let mut cfg = NetworkConfig::cifar(depth, BranchShape::Basic, shortcut, order);
    cfg.widths = [4, 4, 4];
    cfg.input_size = (8, 8);
    cfg
}

fn net<T: Scalar>(cfg: NetworkConfig, seed: u64) -> Network<T> {
    Network::build(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn batch<T: Scalar>(n: usize, cfg: &NetworkConfig, seed: u64) -> (Tensor<T>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::random_normal(vec![n, 3, cfg.input_size.0, cfg.input_size.1], 1.0, &mut rng);
    let labels = (0..n).map(|i| (i * 7 + seed as usize) % cfg.num_classes).collect();
    (x, labels)
}

#[test]
fn slices_must_stay_within_a_stage() {
    let cfg = tiny(20, ShortcutKind::Identity, ActivationOrder::FullPreAct);
    let n: Network<f64> = net(cfg, 0);
    assert_eq!(n.shape_preserving_ranges(), vec![0..3, 4..6, 7..9]);
    assert!(validate_slice(&n, 0, 3).is_ok());
    assert!(validate_slice(&n, 4, 6).is_ok());
    assert!(validate_slice(&n, 5, 5).is_ok());
    for (l, u) in [(2, 5), (3, 5), (4, 3), (0, 10), (6, 8)] {
        assert!(matches!(validate_slice(&n, l, u), Err(Error::InvalidSlice { .. })), "{l} {u}");
    }
    let (x, _) = batch::<f64>(2, &cfg, 1);
    assert!(telescope_check(&n, &x, 2, 5, Mode::Train).is_err());
}

#[test]
fn telescoping_holds_for_identity_preact_nets() {
    let cfg = tiny(20, ShortcutKind::Identity, ActivationOrder::FullPreAct);
    let n64: Network<f64> = net(cfg, 2);
    let n32: Network<f32> = net(cfg, 2);
    let (x64, _) = batch::<f64>(3, &cfg, 3);
    let x32 = x64.cast::<f32>();
    for r in n64.shape_preserving_ranges() {
        for l in r.clone() {
            for u in l..=r.end {
                assert!(telescope_check(&n64, &x64, l, u, Mode::Train).unwrap() < 1e-12);
                assert!(telescope_check(&n32, &x32, l, u, Mode::Train).unwrap() < 1e-6);
            }
        }
    }
    assert_eq!(telescope_check(&n64, &x64, 1, 1, Mode::Train).unwrap(), 0.0);
}

#[test]
fn relu_after_addition_breaks_telescoping() {
    let cfg = tiny(20, ShortcutKind::Identity, ActivationOrder::Original);
    let n: Network<f64> = net(cfg, 4);
    let (x, _) = batch::<f64>(3, &cfg, 5);
    let residual = telescope_check(&n, &x, 0, 3, Mode::Train).unwrap();
    assert!(residual > 1e-3, "{residual}");
}

#[test]
fn decomposition_sums_to_total() {
    let cfg = tiny(20, ShortcutKind::Identity, ActivationOrder::FullPreAct);
    for seed in 0..3 {
        let n: Network<f64> = net(cfg, 10 + seed);
        let (x, labels) = batch::<f64>(3, &cfg, seed);
        let d = gradient_decompose(&n, &x, &labels, 0, 3, Mode::Train).unwrap();
        assert!(d.invariant_error() < 1e-12);
        assert!(d.direct.max_abs() > 0.0);
        assert!(d.through_weights.max_abs() > 0.0);
        // With identity shortcuts the direct term is the upstream gradient itself.
        assert_eq!(d.direct, d.upper_grad);
    }
}

#[test]
fn zeroed_branches_leave_only_the_direct_term() {
    let cfg = tiny(20, ShortcutKind::Identity, ActivationOrder::FullPreAct);
    let mut n: Network<f64> = net(cfg, 20);
    n.zero_branches(4..6);
    let (x, labels) = batch::<f64>(3, &cfg, 21);
    let d = gradient_decompose(&n, &x, &labels, 4, 6, Mode::Train).unwrap();
    assert!(d.through_weights.data().iter().all(|&v| v == 0.0));
    assert_eq!(d.total, d.upper_grad);
}

#[test]
fn lambda_product_closed_forms() {
    let cfg = tiny(62, ShortcutKind::ConstantScale { lambda: 0.5 }, ActivationOrder::FullPreAct);
    let mut n: Network<f64> = net(cfg, 30);
    n.zero_branches(0..10);
    let (x, labels) = batch::<f64>(2, &cfg, 31);
    let ratio = lambda_product_check(&n, &x, &labels, 0, 10, Mode::Train).unwrap();
    assert!((ratio - 9.765625e-4).abs() / 9.765625e-4 < 1e-10, "{ratio}");

    let one = tiny(62, ShortcutKind::ConstantScale { lambda: 1.0 }, ActivationOrder::FullPreAct);
    let mut n: Network<f64> = net(one, 32);
    n.zero_branches(0..10);
    let ratio = lambda_product_check(&n, &x, &labels, 0, 10, Mode::Train).unwrap();
    assert!((ratio - 1.0).abs() < 1e-10, "{ratio}");
}

#[test]
fn lambda_check_preconditions() {
    let cfg = tiny(20, ShortcutKind::ConstantScale { lambda: 0.5 }, ActivationOrder::FullPreAct);
    let n: Network<f64> = net(cfg, 40);
    let (x, labels) = batch::<f64>(2, &cfg, 41);
    // Branches are live.
    assert!(lambda_product_check(&n, &x, &labels, 0, 3, Mode::Train).is_err());
    for kind in [ShortcutKind::ConstantScale { lambda: 0.0 }, ShortcutKind::ConstantScale { lambda: -0.5 }, ShortcutKind::Identity] {
        let mut n: Network<f64> = net(tiny(20, kind, ActivationOrder::FullPreAct), 42);
        n.zero_branches(0..3);
        assert!(lambda_product_check(&n, &x, &labels, 0, 3, Mode::Train).is_err(), "{kind}");
    }
}

#[test]
fn profile_examples() {
    let (cfg, n_units) = (tiny(20, ShortcutKind::Identity, ActivationOrder::FullPreAct), 9);
    let mut n: Network<f64> = net(cfg, 50);
    n.zero_branches(0..n_units);
    let (x, labels) = batch::<f64>(2, &cfg, 51);
    let rows = signal_magnitude_profile(&n, &x, &labels, Mode::Train).unwrap();
    assert_eq!(rows.len(), n_units);
    for w in rows[0..4].windows(2) {
        assert_eq!(w[0].x_norm, w[1].x_norm);
        assert_eq!(w[0].f_norm, 0.0);
    }

    let half = tiny(20, ShortcutKind::ConstantScale { lambda: 0.5 }, ActivationOrder::FullPreAct);
    let mut n: Network<f64> = net(half, 52);
    n.zero_branches(0..n_units);
    let rows = signal_magnitude_profile(&n, &x, &labels, Mode::Train).unwrap();
    for w in rows[0..4].windows(2) {
        assert!((w[1].x_norm - 0.5 * w[0].x_norm).abs() < 1e-12 * w[0].x_norm);
    }

    let relu_first = tiny(20, ShortcutKind::Identity, ActivationOrder::ReluBeforeAdd);
    let n: Network<f64> = net(relu_first, 53);
    let rows = signal_magnitude_profile(&n, &x, &labels, Mode::Train).unwrap();
    for r in n.shape_preserving_ranges() {
        for i in r.start + 1..r.end {
            assert!(rows[i].x_norm >= rows[i - 1].x_norm);
        }
    }

    let mut csv = Vec::new();
    write_profile_csv(&rows, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("unit_index,x_norm,F_norm,h_norm,grad_norm\n0,"));
    assert_eq!(text.lines().count(), n_units + 1);
}

#[test]
fn minibatch_gradients_do_not_cancel() {
    let cfg = tiny(8, ShortcutKind::Identity, ActivationOrder::FullPreAct);
    let n: Network<f64> = net(cfg, 60);
    for seed in 0..100 {
        let (x, labels) = batch::<f64>(2, &cfg, 1000 + seed);
        let d = gradient_decompose(&n, &x, &labels, 0, 1, Mode::Train).unwrap();
        assert!(d.total.max_abs() > 1e-12, "batch {seed}");
    }
}
