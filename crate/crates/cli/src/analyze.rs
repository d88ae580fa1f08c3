//! Propagation reports on a trained or freshly initialized network.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use resprop_core::lab::{gradient_decompose, lambda_product_check, signal_magnitude_profile, telescope_check, validate_slice, write_profile_csv, ProfileRow};
use resprop_core::network::{load_checkpoint, Network};
use resprop_core::nn::Mode;
use resprop_core::tensor::norm_l2;
use resprop_core::units::{ActivationOrder, ShortcutKind};

use crate::config::ExperimentConfig;
use crate::runner::load_data;
use crate::CliError;

/// Telescoping residuals above this are reported as a mismatch.
pub const TELESCOPE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TelescopeReport {
    pub residual: f64,
    pub holds: bool,
    /// Why the identity is not expected to hold for this network, if it isn't.
    pub expected_failure: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeReport {
    pub total_norm: f64,
    pub direct_norm: f64,
    pub through_weights_norm: f64,
    pub upper_grad_norm: f64,
    pub invariant_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaReport {
    pub lambda: f64,
    pub ratio: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalysisReport {
    pub slice: (usize, usize),
    pub telescope: Option<TelescopeReport>,
    pub decompose: Option<DecomposeReport>,
    /// `Err` carries the reason the check was skipped.
    pub lambda_product: Option<Result<LambdaReport, String>>,
    pub profile: Option<Vec<ProfileRow>>,
}

/// Why `x_L = x_l + ΣF` cannot hold exactly, or `None` if it should.
pub fn telescope_caveat(shortcut: ShortcutKind, order: ActivationOrder) -> Option<&'static str> {
    match order {
        ActivationOrder::Original => return Some("expected: f=ReLU"),
        ActivationOrder::BnAfterAdd => return Some("expected: f=BN+ReLU"),
        _ => {}
    }
    match shortcut {
        ShortcutKind::Identity | ShortcutKind::Dropout { .. } => None,
        ShortcutKind::ConstantScale { lambda: 1.0 } => None,
        _ => Some("expected: h is not the identity"),
    }
}

impl AnalysisReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let (l, u) = self.slice;
        let _ = writeln!(s, "slice: units [{l}, {u})");
        if let Some(t) = &self.telescope {
            let verdict = if t.holds { "ok" } else { "MISMATCH" };
            let _ = write!(s, "telescope: relative residual {:.3e} ({verdict})", t.residual);
            if let (false, Some(why)) = (t.holds, t.expected_failure) {
                let _ = write!(s, ", {why}");
            }
            s.push('\n');
        }
        if let Some(d) = &self.decompose {
            let _ = writeln!(
                s,
                "decompose: |total| {:.6e}, |direct| {:.6e}, |through weights| {:.6e}, |dE/dx_L| {:.6e}, invariant error {:.3e}",
                d.total_norm, d.direct_norm, d.through_weights_norm, d.upper_grad_norm, d.invariant_error
            );
        }
        match &self.lambda_product {
            Some(Ok(r)) => {
                let _ = writeln!(s, "lambda product: ratio {:.6e}, lambda^(L-l) = {:.6e} (lambda {})", r.ratio, r.expected, r.lambda);
            }
            Some(Err(why)) => {
                let _ = writeln!(s, "lambda product: skipped, {why}");
            }
            None => {}
        }
        if let Some(p) = &self.profile {
            let _ = writeln!(s, "profile: {} units written to profile.csv", p.len());
        }
        s
    }
}

/// Runs the enabled checks on the network built from `cfg` (first seed),
/// optionally overwritten by `checkpoint`, in 64-bit precision. CSVs and
/// `analysis.txt` go to `out`.
pub fn analyze(cfg: &ExperimentConfig, checkpoint: Option<&Path>, out: &Path) -> Result<AnalysisReport, CliError> {
    cfg.validate().map_err(CliError::Invalid)?;
    let seed = cfg.run.seeds[0];
    let mut net32: Network<f32> = Network::build(cfg.network, &mut ChaCha8Rng::seed_from_u64(seed))?;
    if let Some(path) = checkpoint {
        load_checkpoint(&mut net32, path)?;
    }
    let net: Network<f64> = net32.cast();
    let a = &cfg.analysis;
    let (l, upper) = match a.slice {
        Some(s) => s,
        None => {
            let r = net.shape_preserving_ranges().into_iter().next().unwrap_or(0..0);
            (r.start, r.end)
        }
    };
    validate_slice(&net, l, upper)?;

    let (_, test_set) = load_data(cfg)?;
    let n = a.batch.min(test_set.len());
    let idx: Vec<usize> = (0..n).collect();
    let x = test_set.batch::<f64>(&idx);
    let labels = test_set.batch_labels(&idx);
    let mode = Mode::Eval;

    fs::create_dir_all(out)?;
    let mut report = AnalysisReport {
        slice: (l, upper),
        ..Default::default()
    };
    if a.telescope {
        let residual = telescope_check(&net, &x, l, upper, mode)?;
        report.telescope = Some(TelescopeReport {
            residual,
            holds: residual < TELESCOPE_TOL,
            expected_failure: telescope_caveat(net.cfg.shortcut, net.cfg.order),
        });
    }
    if a.decompose {
        let d = gradient_decompose(&net, &x, &labels, l, upper, mode)?;
        let r = DecomposeReport {
            total_norm: norm_l2(d.total.data()),
            direct_norm: norm_l2(d.direct.data()),
            through_weights_norm: norm_l2(d.through_weights.data()),
            upper_grad_norm: norm_l2(d.upper_grad.data()),
            invariant_error: d.invariant_error(),
        };
        fs::write(
            out.join("decompose.csv"),
            format!(
                "l,upper,total_norm,direct_norm,through_weights_norm,upper_grad_norm,invariant_error\n{l},{upper},{},{},{},{},{}\n",
                r.total_norm, r.direct_norm, r.through_weights_norm, r.upper_grad_norm, r.invariant_error
            ),
        )?;
        report.decompose = Some(r);
    }
    if a.lambda_product {
        report.lambda_product = Some(match net.cfg.shortcut {
            ShortcutKind::ConstantScale { lambda } if lambda > 0.0 => {
                let mut zeroed = net.clone();
                zeroed.zero_branches(l..upper);
                let ratio = lambda_product_check(&zeroed, &x, &labels, l, upper, mode)?;
                let expected = lambda.powi((upper - l) as i32);
                fs::write(out.join("lambda_product.csv"), format!("l,upper,lambda,ratio,expected\n{l},{upper},{lambda},{ratio},{expected}\n"))?;
                Ok(LambdaReport { lambda, ratio, expected })
            }
            other => Err(format!("needs a constant-scale shortcut with lambda > 0, network uses {other}")),
        });
    }
    if a.profile {
        let rows = signal_magnitude_profile(&net, &x, &labels, mode)?;
        let mut f = BufWriter::new(File::create(out.join("profile.csv"))?);
        write_profile_csv(&rows, &mut f)?;
        f.flush()?;
        report.profile = Some(rows);
    }
    fs::write(out.join("analysis.txt"), report.render())?;
    Ok(report)
}

/// Default analysis directory for a config.
pub fn default_out(cfg: &ExperimentConfig) -> PathBuf {
    cfg.run.out_dir.join("analysis")
}
