use resprop_cli::config::{nearest_key, ExperimentConfig, KEYS};
use resprop_cli::presets::{catalog, find, identify, Study};
use resprop_core::units::{ActivationOrder, BranchShape, ShortcutKind};

#[test]
fn every_preset_round_trips_through_text() {
    for p in catalog() {
        let text = p.config.to_text();
        let parsed = ExperimentConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        assert_eq!(parsed, p.config, "{}", p.name);
        assert_eq!(identify(&parsed), Some(p.name));
        assert_eq!(parsed.to_text(), text);
    }
}

#[test]
fn preset_names_are_unique() {
    let names: Vec<&str> = catalog().iter().map(|p| p.name).collect();
    let mut sorted = names.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), names.len());
}

#[test]
fn shortcut_study_covers_every_row() {
    let rows: Vec<(ShortcutKind, Option<f64>)> = catalog()
        .into_iter()
        .filter(|p| p.study == Study::Shortcuts)
        .map(|p| {
            let n = &p.config.network;
            assert_eq!((n.depth, n.branch, n.order), (110, BranchShape::Basic, ActivationOrder::Original), "{}", p.name);
            assert_eq!(p.config.run.seeds.len(), 5);
            (n.shortcut, n.branch_scale)
        })
        .collect();
    let expected = [
        (ShortcutKind::Identity, None),
        (ShortcutKind::ConstantScale { lambda: 0.0 }, None),
        (ShortcutKind::ConstantScale { lambda: 0.5 }, None),
        (ShortcutKind::ConstantScale { lambda: 0.5 }, Some(0.5)),
        (ShortcutKind::ExclusiveGate { init_bias: 0.0 }, None),
        (ShortcutKind::ExclusiveGate { init_bias: -6.0 }, None),
        (ShortcutKind::ExclusiveGate { init_bias: -7.0 }, None),
        (ShortcutKind::ShortcutOnlyGate { init_bias: 0.0 }, None),
        (ShortcutKind::ShortcutOnlyGate { init_bias: -6.0 }, None),
        (ShortcutKind::Conv1x1, None),
        (ShortcutKind::Dropout { rate: 0.5 }, None),
    ];
    assert_eq!(rows, expected);
}

#[test]
fn activation_study_covers_every_order_once() {
    let orders: Vec<ActivationOrder> = catalog()
        .into_iter()
        .filter(|p| p.study == Study::Activations)
        .map(|p| {
            let n = &p.config.network;
            assert_eq!((n.depth, n.branch, n.shortcut), (164, BranchShape::Bottleneck, ShortcutKind::Identity));
            n.order
        })
        .collect();
    assert_eq!(orders, ActivationOrder::ALL);
}

#[test]
fn full_runs_use_the_published_schedule() {
    let p = find("table2-fullpreact-164").unwrap();
    let t = &p.config.train;
    assert!(t.warmup);
    assert_eq!((t.lr_initial, t.warmup_lr, t.warmup_iters), (0.1, 0.01, 400));
    assert_eq!(t.decay_points, vec![32_000, 48_000]);
    assert_eq!((t.total_iters, t.batch_size, t.momentum, t.weight_decay), (64_000, 128, 0.9, 1e-4));
    assert_eq!(p.reference_error, Some(5.46));
}

#[test]
fn unknown_key_suggests_nearest() {
    let err = ExperimentConfig::parse("network.depth = 20\nnetwork.depht = 20\n").unwrap_err();
    assert_eq!(err.0.len(), 1);
    assert_eq!(err.0[0].line, 2);
    assert!(err.0[0].message.contains("did you mean `network.depth`"), "{}", err.0[0].message);
    assert_eq!(nearest_key("train.weight_decy"), "train.weight_decay");
}

#[test]
fn collects_every_line_error() {
    let text = "# comment\n\nnetwork.depth = abc\nbogus line\ntrain.lr = 0.1\ntrain.lr = 0.2\nnetwork.order = sideways\n";
    let err = ExperimentConfig::parse(text).unwrap_err();
    let lines: Vec<usize> = err.0.iter().map(|d| d.line).collect();
    assert_eq!(lines, vec![3, 4, 6, 7]);
    assert!(err.to_string().contains("line 6: duplicate key `train.lr` (first set on line 5)"));
}

#[test]
fn shortcut_parameters_must_match_the_kind() {
    let err = ExperimentConfig::parse("network.shortcut = identity\nnetwork.gate_bias = -6\n").unwrap_err();
    assert_eq!(err.0[0].line, 2);
    assert!(err.0[0].message.contains("does not apply"));

    let cfg = ExperimentConfig::parse("network.shortcut = exclusive-gate\nnetwork.gate_bias = -7\n").unwrap();
    assert_eq!(cfg.network.shortcut, ShortcutKind::ExclusiveGate { init_bias: -7.0 });
}

#[test]
fn overriding_a_preset_switches_shortcut_cleanly() {
    let base = find("table1-scale-0.5-0.5").unwrap().config;
    let cfg = ExperimentConfig::parse_over(base.clone(), "network.shortcut = identity\nnetwork.branch_scale = none\n").unwrap();
    assert_eq!(cfg.network.shortcut, ShortcutKind::Identity);
    assert_eq!(cfg.network.branch_scale, None);
    let cfg = ExperimentConfig::parse_over(base, "network.lambda = 0.25\n").unwrap();
    assert_eq!(cfg.network.shortcut, ShortcutKind::ConstantScale { lambda: 0.25 });
}

#[test]
fn semantic_errors_are_reported() {
    let err = ExperimentConfig::parse("network.depth = 21\n").unwrap_err();
    assert!(err.to_string().contains("invalid depth 21"), "{err}");
    let err = ExperimentConfig::parse("data.dataset = cifar100\n").unwrap_err();
    assert!(err.to_string().contains("num_classes"), "{err}");
    assert!(ExperimentConfig::parse("data.dataset = cifar100\nnetwork.num_classes = 100\n").is_ok());
    assert!(ExperimentConfig::parse("run.seeds = \n").is_err());
}

#[test]
fn key_list_matches_serialization() {
    let text = ExperimentConfig::default().to_text();
    let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
    for k in &keys {
        assert!(KEYS.contains(k), "{k}");
    }
    // Only the parameters of the active shortcut kind are written.
    assert_eq!(keys.len(), KEYS.len() - 3);
}
