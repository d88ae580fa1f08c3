//! Multi-seed training runs with streamed metrics, checkpoints and a summary report.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use resprop_core::data::{load_cifar10, load_cifar100, subset, synthetic, Dataset, SyntheticSpec};
use resprop_core::network::{save_checkpoint, Network};
use resprop_core::train::{parse_metrics_csv, train, MetricsRow, FAIL_THRESHOLD_PCT, METRICS_HEADER};
use resprop_core::Error as CoreError;

use crate::config::{DatasetKind, ExperimentConfig};
use crate::CliError;

/// Loads the configured train and test splits.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), CliError> {
    let d = &cfg.data;
    let (train_set, test_set) = match d.dataset {
        DatasetKind::Cifar10 => load_cifar10(&d.dir)?,
        DatasetKind::Cifar100 => load_cifar100(&d.dir)?,
        DatasetKind::Synthetic => {
            let mut spec = SyntheticSpec::new(d.synthetic_train, d.synthetic_test, d.synthetic_classes, d.synthetic_size, d.synthetic_seed);
            spec.noise = d.synthetic_noise;
            spec.jitter = d.synthetic_jitter;
            synthetic(&spec)?
        }
    };
    let train_set = if d.subset > 0 { subset(&train_set, d.subset, d.subset_seed)? } else { train_set };
    Ok((train_set, test_set))
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_train_loss: Option<f64>,
    pub final_test_err: Option<f64>,
    pub fail: bool,
    /// Iteration at which a non-finite loss stopped the run.
    pub aborted_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub preset: Option<String>,
    pub seeds: Vec<SeedResult>,
    pub median_test_err: Option<f64>,
    pub mean_test_err: Option<f64>,
    /// Sample standard deviation (n − 1); `None` with fewer than two finished seeds.
    pub std_test_err: Option<f64>,
    pub fail: bool,
    pub fail_threshold_pct: f64,
}

impl RunSummary {
    /// Whether any seed stopped on a non-finite loss.
    pub fn any_aborted(&self) -> bool {
        self.seeds.iter().any(|s| s.aborted_at.is_some())
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// Aggregates per-seed results.
pub fn summarize(preset: Option<String>, seeds: Vec<SeedResult>) -> RunSummary {
    let errs: Vec<f64> = seeds.iter().filter(|s| s.aborted_at.is_none()).filter_map(|s| s.final_test_err).collect();
    let median_test_err = median(&errs);
    let (mean_test_err, std_test_err) = mean_std(&errs);
    let fail = seeds.iter().any(|s| s.aborted_at.is_some()) || median_test_err.is_some_and(|m| m > FAIL_THRESHOLD_PCT);
    RunSummary {
        preset,
        seeds,
        median_test_err,
        mean_test_err,
        std_test_err,
        fail,
        fail_threshold_pct: FAIL_THRESHOLD_PCT,
    }
}

/// Rebuilds a seed result from its metrics CSV.
pub fn seed_result_from_rows(seed: u64, rows: &[MetricsRow]) -> SeedResult {
    let last = rows.last();
    let final_train_loss = last.map(|r| r.train_loss);
    let final_test_err = last.and_then(|r| r.test_err);
    SeedResult {
        seed,
        final_train_loss,
        final_test_err,
        fail: final_train_loss.is_none_or(|l| !l.is_finite()) || final_test_err.is_some_and(|e| e > FAIL_THRESHOLD_PCT),
        aborted_at: None,
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Trains one seed, streaming `metrics.csv` into `dir`.
fn run_seed(cfg: &ExperimentConfig, seed: u64, train_set: &Dataset, test_set: &Dataset, dir: &Path, log: &mut dyn Write) -> Result<SeedResult, CliError> {
    fs::create_dir_all(dir)?;
    let mut net: Network<f32> = Network::build(cfg.network, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut csv = BufWriter::new(File::create(dir.join("metrics.csv"))?);
    writeln!(csv, "{METRICS_HEADER}")?;
    csv.flush()?;
    let tc = cfg.train_config(seed);
    let every = cfg.run.checkpoint_every;
    let mut on_row = |row: &MetricsRow, net: &Network<f32>| -> resprop_core::Result<()> {
        writeln!(csv, "{}", row.to_csv())?;
        csv.flush()?;
        let test = row.test_err.map_or(String::new(), |e| format!(" test_err {e:.2}%"));
        let _ = writeln!(log, "seed {seed} iter {} loss {:.4}{test}", row.iter, row.train_loss);
        if every > 0 && row.iter.is_multiple_of(every) && row.iter < tc.total_iters {
            save_checkpoint(net, &dir.join(format!("checkpoint-{}.bin", row.iter)))?;
        }
        Ok(())
    };
    match train(&mut net, train_set, Some(test_set), &tc, &mut on_row) {
        Ok(outcome) => {
            save_checkpoint(&net, &dir.join("checkpoint.bin"))?;
            Ok(SeedResult {
                seed,
                final_train_loss: Some(outcome.final_train_loss),
                final_test_err: outcome.final_test_err,
                fail: outcome.failed(),
                aborted_at: None,
            })
        }
        Err(CoreError::NanLoss { iter }) => {
            let _ = writeln!(log, "seed {seed}: non-finite training loss at iteration {iter}, run aborted");
            Ok(SeedResult {
                seed,
                final_train_loss: None,
                final_test_err: None,
                fail: true,
                aborted_at: Some(iter),
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Trains every configured seed and writes `config.txt`, per-seed
/// directories and `summary.json` under `cfg.run.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, log: &mut dyn Write) -> Result<RunSummary, CliError> {
    cfg.validate().map_err(CliError::Invalid)?;
    let out = &cfg.run.out_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.txt"), cfg.to_text())?;
    let (train_set, test_set) = load_data(cfg)?;
    let _ = writeln!(
        log,
        "training ResNet-{} ({} branch, {} shortcut, {} order) on {} examples, evaluating on {}",
        cfg.network.depth,
        cfg.network.branch,
        cfg.network.shortcut,
        cfg.network.order,
        train_set.len(),
        test_set.len()
    );
    let mut results = Vec::new();
    for &seed in &cfg.run.seeds {
        results.push(run_seed(cfg, seed, &train_set, &test_set, &seed_dir(out, seed), log)?);
    }
    let summary = summarize(crate::presets::identify(cfg).map(str::to_string), results);
    write_summary(&summary, &out.join("summary.json"))?;
    Ok(summary)
}

pub fn write_summary(summary: &RunSummary, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Recomputes the summary of a finished run directory from its CSVs.
pub fn summary_from_dir(out: &Path, seeds: &[u64]) -> Result<RunSummary, CliError> {
    let mut results = Vec::new();
    for &seed in seeds {
        let text = fs::read_to_string(seed_dir(out, seed).join("metrics.csv"))?;
        results.push(seed_result_from_rows(seed, &parse_metrics_csv(&text)?));
    }
    Ok(summarize(None, results))
}
