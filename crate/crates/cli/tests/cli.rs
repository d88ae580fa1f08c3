use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use resprop_cli::plot::{render_svg, Series};
use resprop_cli::runner::{summarize, summary_from_dir, SeedResult};
use resprop_core::train::{parse_metrics_csv, MetricsRow};

fn resprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resprop")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("tiny.cfg");
    let base = format!(
        "network.depth = 8\nnetwork.widths = 4,8,8\nnetwork.input_size = 8\nnetwork.order = full-preact\n\
         train.total_iters = 40\ntrain.decay_points = 20,30\ntrain.warmup = false\ntrain.batch_size = 8\n\
         train.log_every = 10\ntrain.eval_every = 20\n\
         data.dataset = synthetic\ndata.synthetic_train = 200\ndata.synthetic_test = 50\ndata.synthetic_size = 8\n\
         run.seeds = 3,4\nrun.out_dir = {}\n",
        dir.join("out").display()
    );
    let key = |l: &str| l.split('=').next().unwrap().trim().to_string();
    let overridden: Vec<String> = extra.lines().map(key).collect();
    let mut text: String = base.lines().filter(|l| !overridden.contains(&key(l))).map(|l| format!("{l}\n")).collect();
    text.push_str(extra);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn malformed_key_exits_2_with_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "network.depht = 20\n").unwrap();
    let out = resprop(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line 1") && err.contains("network.depth"), "{err}");
}

#[test]
fn missing_config_is_a_usage_error() {
    assert_eq!(resprop(&["run"]).status.code(), Some(2));
    assert_eq!(resprop(&["run", "--preset", "no-such-preset"]).status.code(), Some(2));
}

#[test]
fn run_writes_metrics_checkpoints_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "run.checkpoint_every = 20\n");
    let out = resprop(&["run", "--config", &cfg, "--deterministic"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let root = dir.path().join("out");
    for seed in [3, 4] {
        let sd = root.join(format!("seed-{seed}"));
        let rows = parse_metrics_csv(&fs::read_to_string(sd.join("metrics.csv")).unwrap()).unwrap();
        assert_eq!(rows.iter().map(|r| r.iter).collect::<Vec<_>>(), vec![10, 20, 30, 40]);
        assert!(rows.iter().all(|r| r.wall_ms == 0));
        assert!(sd.join("checkpoint.bin").exists());
        assert!(sd.join("checkpoint-20.bin").exists());
    }
    let text = fs::read_to_string(root.join("summary.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let recomputed = summary_from_dir(&root, &[3, 4]).unwrap();
    assert_eq!(json["median_test_err"].as_f64(), recomputed.median_test_err);
    assert_eq!(json["mean_test_err"].as_f64(), recomputed.mean_test_err);
    assert_eq!(json["std_test_err"].as_f64(), recomputed.std_test_err);
    assert_eq!(json["seeds"].as_array().unwrap().len(), 2);
    assert!(root.join("config.txt").exists());
}

#[test]
fn seed_override_runs_one_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let out = resprop(&["run", "--config", &cfg, "--seed", "9", "--out", dir.path().join("o9").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.path().join("o9/seed-9/metrics.csv").exists());
    assert!(!dir.path().join("o9/seed-3").exists());
}

#[test]
fn diverging_run_records_the_iteration_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "train.lr = 1e30\nrun.seeds = 1\n");
    let out = resprop(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("non-finite training loss at iteration"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert!(json["seeds"][0]["aborted_at"].as_u64().is_some());
    assert_eq!(json["fail"], serde_json::Value::Bool(true));
}

#[test]
fn smoke_preset_trains() {
    let dir = tempfile::tempdir().unwrap();
    let out = resprop(&["run", "--preset", "smoke", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = parse_metrics_csv(&fs::read_to_string(dir.path().join("seed-1/metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.last().unwrap().iter, 500);
    assert!(rows.last().unwrap().train_loss < 10f64.ln());
}

#[test]
fn analyze_reports_identity_and_flags_relu() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let out = resprop(&["analyze", "--config", &cfg, "--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("telescope") && text.contains("(ok)"), "{text}");
    assert!(dir.path().join("a/profile.csv").exists());
    assert!(dir.path().join("a/decompose.csv").exists());

    let cfg = tiny_config(dir.path(), "network.order = original\n");
    let out = resprop(&["analyze", "--config", &cfg, "--out", dir.path().join("b").to_str().unwrap()]);
    let text = stdout(&out);
    assert!(text.contains("(MISMATCH), expected: f=ReLU"), "{text}");
}

#[test]
fn analyze_lambda_ratio_over_ten_units() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(
        dir.path(),
        "network.depth = 68\nnetwork.shortcut = constant-scale\nnetwork.lambda = 0.5\nanalysis.slice = 1,11\nanalysis.profile = false\n",
    );
    let out = resprop(&["analyze", "--config", &cfg, "--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("a/lambda_product.csv")).unwrap();
    let ratio: f64 = csv.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((ratio / 9.765625e-4 - 1.0).abs() < 1e-10, "{ratio}");
}

#[test]
fn analyze_rejects_stage_crossing_slice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "analysis.slice = 0,3\n");
    let out = resprop(&["analyze", "--config", &cfg, "--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("stage"), "{}", stderr(&out));
}

#[test]
fn analyze_loads_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "run.seeds = 3\n");
    assert_eq!(resprop(&["run", "--config", &cfg]).status.code(), Some(0));
    let ck = dir.path().join("out/seed-3/checkpoint.bin");
    let out = resprop(&["analyze", "--config", &cfg, "--checkpoint", ck.to_str().unwrap(), "--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let bad = resprop(&["analyze", "--config", &cfg, "--checkpoint", dir.path().join("none.bin").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

fn row(iter: usize, loss: f64, test: Option<f64>) -> MetricsRow {
    MetricsRow { iter, epoch: 0.0, lr: 0.1, train_loss: loss, train_err: 0.0, test_err: test, wall_ms: 0 }
}

#[test]
fn svg_has_dashed_loss_and_solid_error_per_run() {
    let series = vec![
        Series { label: "a".into(), rows: vec![row(100, 2.0, Some(50.0)), row(200, 1.0, Some(30.0))] },
        Series { label: "b<&>".into(), rows: vec![row(100, 2.2, Some(55.0)), row(200, 1.5, Some(35.0))] },
    ];
    let svg = render_svg(&series);
    assert_eq!(svg.matches("<polyline").count(), 4);
    assert_eq!(svg.matches("stroke-dasharray").count(), 2);
    assert!(svg.contains("b&lt;&amp;&gt;"));
    assert_eq!(svg, render_svg(&series));
}

#[test]
fn single_row_csv_plots_a_point() {
    let svg = render_svg(&[Series { label: "one".into(), rows: vec![row(10, 1.0, Some(12.0))] }]);
    assert_eq!(svg.matches("<circle").count(), 2);
}

#[test]
fn plot_command_is_deterministic_and_rejects_empty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("run-a.csv");
    fs::write(&a, "iter,epoch,lr,train_loss,train_err,test_err,wall_ms\n100,1,0.1,2.0,70,,5\n200,2,0.1,1.5,50,40,9\n").unwrap();
    let (s1, s2) = (dir.path().join("1.svg"), dir.path().join("2.svg"));
    assert_eq!(resprop(&["plot", a.to_str().unwrap(), "--out", s1.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(resprop(&["plot", a.to_str().unwrap(), "--out", s2.to_str().unwrap()]).status.code(), Some(0));
    let svg = fs::read(&s1).unwrap();
    assert_eq!(svg, fs::read(&s2).unwrap());
    assert!(String::from_utf8(svg).unwrap().contains(">run-a</text>"));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "iter,epoch,lr,train_loss,train_err,test_err,wall_ms\n").unwrap();
    let out = resprop(&["plot", empty.to_str().unwrap(), "--out", s1.to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn presets_and_fetch_data() {
    let list = stdout(&resprop(&["presets"]));
    assert!(list.contains("table1-original") && list.contains("table2-fullpreact-164") && list.contains("smoke"));
    let one = resprop(&["presets", "table1-exclusive-gate-6"]);
    assert!(stdout(&one).contains("network.gate_bias = -6"));
    let fetch = stdout(&resprop(&["fetch-data"]));
    assert!(fetch.contains("c32a1d4ab5d03f1284b67883e8d87530") && fetch.contains("03b5dce01913d631647c71ecec9e9cb8"));
}

#[test]
fn summary_statistics() {
    let seeds = [5.0, 7.0, 6.0].iter().enumerate().map(|(i, &e)| SeedResult {
        seed: i as u64,
        final_train_loss: Some(0.1),
        final_test_err: Some(e),
        fail: false,
        aborted_at: None,
    });
    let s = summarize(None, seeds.collect());
    assert_eq!(s.median_test_err, Some(6.0));
    assert_eq!(s.mean_test_err, Some(6.0));
    assert_eq!(s.std_test_err, Some(1.0));
    assert!(!s.fail);
    let high = summarize(None, vec![SeedResult { seed: 0, final_train_loss: Some(2.0), final_test_err: Some(25.0), fail: true, aborted_at: None }]);
    assert!(high.fail);
    assert_eq!(high.std_test_err, None);
}
