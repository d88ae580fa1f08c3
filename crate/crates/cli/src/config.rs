//! Flat `key = value` experiment configs.
//!
//! Blank lines and lines starting with `#` are ignored. Keys not listed in
//! [`KEYS`] are rejected with a suggestion. Missing keys keep their defaults.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use resprop_core::network::NetworkConfig;
use resprop_core::train::TrainConfig;
use resprop_core::units::{ActivationOrder, BranchShape, ShortcutKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    Synthetic,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Cifar100 => "cifar100",
            DatasetKind::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub dataset: DatasetKind,
    pub dir: PathBuf,
    /// Stratified training subset size; 0 keeps the full split.
    pub subset: usize,
    pub subset_seed: u64,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub synthetic_classes: usize,
    pub synthetic_size: usize,
    pub synthetic_noise: f64,
    pub synthetic_jitter: f64,
    pub synthetic_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Cifar10,
            dir: PathBuf::from("data/cifar-10-batches-bin"),
            subset: 0,
            subset_seed: 7,
            synthetic_train: 2000,
            synthetic_test: 500,
            synthetic_classes: 10,
            synthetic_size: 16,
            synthetic_noise: 0.5,
            synthetic_jitter: 1.5,
            synthetic_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub deterministic: bool,
    /// Iterations between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4, 5],
            out_dir: PathBuf::from("runs/experiment"),
            deterministic: false,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub telescope: bool,
    pub decompose: bool,
    pub lambda_product: bool,
    pub profile: bool,
    /// Unit slice `[start, end)`; `None` picks the first stage's shape-preserving units.
    pub slice: Option<(usize, usize)>,
    pub batch: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            telescope: true,
            decompose: true,
            lambda_product: true,
            profile: true,
            slice: None,
            batch: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub run: RunConfig,
    pub analysis: AnalysisConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::cifar(110, BranchShape::Basic, ShortcutKind::Identity, ActivationOrder::Original),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            run: RunConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

/// Every accepted key, in serialization order.
pub const KEYS: &[&str] = &[
    "network.depth",
    "network.branch",
    "network.shortcut",
    "network.lambda",
    "network.gate_bias",
    "network.dropout_rate",
    "network.branch_scale",
    "network.order",
    "network.boundary",
    "network.widths",
    "network.num_classes",
    "network.input_size",
    "train.lr",
    "train.warmup",
    "train.warmup_lr",
    "train.warmup_iters",
    "train.decay_points",
    "train.decay_factor",
    "train.total_iters",
    "train.weight_decay",
    "train.decay_all_params",
    "train.momentum",
    "train.batch_size",
    "train.augment",
    "train.log_every",
    "train.eval_every",
    "data.dataset",
    "data.dir",
    "data.subset",
    "data.subset_seed",
    "data.synthetic_train",
    "data.synthetic_test",
    "data.synthetic_classes",
    "data.synthetic_size",
    "data.synthetic_noise",
    "data.synthetic_jitter",
    "data.synthetic_seed",
    "run.seeds",
    "run.out_dir",
    "run.deterministic",
    "run.checkpoint_every",
    "analysis.telescope",
    "analysis.decompose",
    "analysis.lambda_product",
    "analysis.profile",
    "analysis.slice",
    "analysis.batch",
];

/// One problem found while reading a config, tied to its line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based; 0 when the problem is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub Vec<Diagnostic>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// The accepted key closest to `key` by edit distance.
pub fn nearest_key(key: &str) -> &'static str {
    KEYS.iter()
        .copied()
        .min_by_key(|k| strsim::damerau_levenshtein(key, k))
        .expect("non-empty key list")
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn parse_num<N: std::str::FromStr>(v: &str) -> Result<N, String> {
    v.parse().map_err(|_| format!("expected a number, got {v:?}"))
}

fn parse_list<N: std::str::FromStr>(v: &str) -> Result<Vec<N>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_num(s.trim())).collect()
}

fn parse_branch(v: &str) -> Result<BranchShape, String> {
    [BranchShape::Basic, BranchShape::Bottleneck, BranchShape::SingleLayer]
        .into_iter()
        .find(|b| b.name() == v)
        .ok_or_else(|| format!("unknown branch {v:?} (basic, bottleneck, single)"))
}

fn parse_order(v: &str) -> Result<ActivationOrder, String> {
    ActivationOrder::ALL.into_iter().find(|o| o.name() == v).ok_or_else(|| {
        let names: Vec<&str> = ActivationOrder::ALL.iter().map(|o| o.name()).collect();
        format!("unknown order {v:?} ({})", names.join(", "))
    })
}

/// Shortcut names accepted by `network.shortcut`.
pub const SHORTCUT_NAMES: &[&str] = &[
    "identity",
    "constant-scale",
    "exclusive-gate",
    "shortcut-only-gate",
    "conv1x1",
    "dropout",
];

#[derive(Default)]
struct ShortcutParts {
    name: Option<(usize, String)>,
    lambda: Option<(usize, f64)>,
    gate_bias: Option<(usize, f64)>,
    dropout_rate: Option<(usize, f64)>,
}

impl ShortcutParts {
    fn build(self, diags: &mut Vec<Diagnostic>) -> Option<ShortcutKind> {
        let (line, name) = self.name.unwrap_or((0, "identity".into()));
        let mut unused = |field: Option<(usize, f64)>, key: &str| {
            if let Some((l, _)) = field {
                diags.push(Diagnostic {
                    line: l,
                    message: format!("{key} does not apply to the {name} shortcut"),
                });
            }
        };
        let kind = match name.as_str() {
            "identity" => ShortcutKind::Identity,
            "constant-scale" => ShortcutKind::ConstantScale {
                lambda: self.lambda.map_or(0.5, |v| v.1),
            },
            "exclusive-gate" => ShortcutKind::ExclusiveGate {
                init_bias: self.gate_bias.map_or(-6.0, |v| v.1),
            },
            "shortcut-only-gate" => ShortcutKind::ShortcutOnlyGate {
                init_bias: self.gate_bias.map_or(-6.0, |v| v.1),
            },
            "conv1x1" => ShortcutKind::Conv1x1,
            "dropout" => ShortcutKind::Dropout {
                rate: self.dropout_rate.map_or(0.5, |v| v.1),
            },
            other => {
                diags.push(Diagnostic {
                    line,
                    message: format!("unknown shortcut {other:?} ({})", SHORTCUT_NAMES.join(", ")),
                });
                return None;
            }
        };
        if !matches!(kind, ShortcutKind::ConstantScale { .. }) {
            unused(self.lambda, "network.lambda");
        }
        if !kind.is_gate() {
            unused(self.gate_bias, "network.gate_bias");
        }
        if !matches!(kind, ShortcutKind::Dropout { .. }) {
            unused(self.dropout_rate, "network.dropout_rate");
        }
        Some(kind)
    }
}

fn shortcut_name(kind: ShortcutKind) -> &'static str {
    match kind {
        ShortcutKind::Identity => "identity",
        ShortcutKind::ConstantScale { .. } => "constant-scale",
        ShortcutKind::ExclusiveGate { .. } => "exclusive-gate",
        ShortcutKind::ShortcutOnlyGate { .. } => "shortcut-only-gate",
        ShortcutKind::Conv1x1 => "conv1x1",
        ShortcutKind::Dropout { .. } => "dropout",
        ShortcutKind::Projection => "projection",
        ShortcutKind::ZeroPadIdentity => "zero-pad",
    }
}

fn apply(cfg: &mut ExperimentConfig, sc: &mut ShortcutParts, line: usize, key: &str, v: &str) -> Result<(), String> {
    let n = &mut cfg.network;
    let t = &mut cfg.train;
    let d = &mut cfg.data;
    let r = &mut cfg.run;
    let a = &mut cfg.analysis;
    match key {
        "network.depth" => n.depth = parse_num(v)?,
        "network.branch" => n.branch = parse_branch(v)?,
        "network.shortcut" => sc.name = Some((line, v.to_string())),
        "network.lambda" => sc.lambda = Some((line, parse_num(v)?)),
        "network.gate_bias" => sc.gate_bias = Some((line, parse_num(v)?)),
        "network.dropout_rate" => sc.dropout_rate = Some((line, parse_num(v)?)),
        "network.branch_scale" => n.branch_scale = if v == "none" { None } else { Some(parse_num(v)?) },
        "network.order" => n.order = parse_order(v)?,
        "network.boundary" => {
            n.boundary_shortcut = match v {
                "projection" => ShortcutKind::Projection,
                "zero-pad" => ShortcutKind::ZeroPadIdentity,
                _ => return Err(format!("unknown boundary shortcut {v:?} (projection, zero-pad)")),
            }
        }
        "network.widths" => {
            let w: Vec<usize> = parse_list(v)?;
            n.widths = w.try_into().map_err(|_| "expected three comma-separated widths".to_string())?;
        }
        "network.num_classes" => n.num_classes = parse_num(v)?,
        "network.input_size" => {
            let s: usize = parse_num(v)?;
            n.input_size = (s, s);
        }
        "train.lr" => t.lr_initial = parse_num(v)?,
        "train.warmup" => t.warmup = parse_bool(v)?,
        "train.warmup_lr" => t.warmup_lr = parse_num(v)?,
        "train.warmup_iters" => t.warmup_iters = parse_num(v)?,
        "train.decay_points" => t.decay_points = parse_list(v)?,
        "train.decay_factor" => t.decay_factor = parse_num(v)?,
        "train.total_iters" => t.total_iters = parse_num(v)?,
        "train.weight_decay" => t.weight_decay = parse_num(v)?,
        "train.decay_all_params" => t.decay_all_params = parse_bool(v)?,
        "train.momentum" => t.momentum = parse_num(v)?,
        "train.batch_size" => t.batch_size = parse_num(v)?,
        "train.augment" => t.augment = parse_bool(v)?,
        "train.log_every" => t.log_every = parse_num(v)?,
        "train.eval_every" => t.eval_every = parse_num(v)?,
        "data.dataset" => {
            d.dataset = match v {
                "cifar10" => DatasetKind::Cifar10,
                "cifar100" => DatasetKind::Cifar100,
                "synthetic" => DatasetKind::Synthetic,
                _ => return Err(format!("unknown dataset {v:?} (cifar10, cifar100, synthetic)")),
            }
        }
        "data.dir" => d.dir = PathBuf::from(v),
        "data.subset" => d.subset = parse_num(v)?,
        "data.subset_seed" => d.subset_seed = parse_num(v)?,
        "data.synthetic_train" => d.synthetic_train = parse_num(v)?,
        "data.synthetic_test" => d.synthetic_test = parse_num(v)?,
        "data.synthetic_classes" => d.synthetic_classes = parse_num(v)?,
        "data.synthetic_size" => d.synthetic_size = parse_num(v)?,
        "data.synthetic_noise" => d.synthetic_noise = parse_num(v)?,
        "data.synthetic_jitter" => d.synthetic_jitter = parse_num(v)?,
        "data.synthetic_seed" => d.synthetic_seed = parse_num(v)?,
        "run.seeds" => {
            r.seeds = parse_list(v)?;
            if r.seeds.is_empty() {
                return Err("at least one seed is required".into());
            }
        }
        "run.out_dir" => r.out_dir = PathBuf::from(v),
        "run.deterministic" => r.deterministic = parse_bool(v)?,
        "run.checkpoint_every" => r.checkpoint_every = parse_num(v)?,
        "analysis.telescope" => a.telescope = parse_bool(v)?,
        "analysis.decompose" => a.decompose = parse_bool(v)?,
        "analysis.lambda_product" => a.lambda_product = parse_bool(v)?,
        "analysis.profile" => a.profile = parse_bool(v)?,
        "analysis.slice" => {
            a.slice = if v == "auto" {
                None
            } else {
                let s: Vec<usize> = parse_list(v)?;
                match s[..] {
                    [l, u] => Some((l, u)),
                    _ => return Err("expected `auto` or `start,end`".into()),
                }
            }
        }
        "analysis.batch" => a.batch = parse_num(v)?,
        _ => unreachable!("key list and parser disagree on {key}"),
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses config text over the defaults, collecting every problem.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_over(Self::default(), text)
    }

    /// Parses config text on top of `base`.
    pub fn parse_over(base: Self, text: &str) -> Result<Self, ConfigError> {
        let mut cfg = base;
        let mut sc = ShortcutParts {
            name: Some((0, shortcut_name(cfg.network.shortcut).to_string())),
            ..ShortcutParts::default()
        };
        match cfg.network.shortcut {
            ShortcutKind::ConstantScale { lambda } => sc.lambda = Some((0, lambda)),
            ShortcutKind::ExclusiveGate { init_bias } | ShortcutKind::ShortcutOnlyGate { init_bias } => {
                sc.gate_bias = Some((0, init_bias))
            }
            ShortcutKind::Dropout { rate } => sc.dropout_rate = Some((0, rate)),
            _ => {}
        }
        let mut diags = Vec::new();
        let mut seen: Vec<(&str, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                diags.push(Diagnostic {
                    line,
                    message: format!("expected `key = value`, got {content:?}"),
                });
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                diags.push(Diagnostic {
                    line,
                    message: format!("unknown key `{key}`; did you mean `{}`?", nearest_key(key)),
                });
                continue;
            };
            if let Some((_, first)) = seen.iter().find(|(k, _)| *k == known) {
                diags.push(Diagnostic {
                    line,
                    message: format!("duplicate key `{key}` (first set on line {first})"),
                });
                continue;
            }
            seen.push((known, line));
            // Switching shortcut kinds drops parameters inherited from the base.
            if known == "network.shortcut" {
                sc = ShortcutParts {
                    lambda: sc.lambda.filter(|v| v.0 > 0),
                    gate_bias: sc.gate_bias.filter(|v| v.0 > 0),
                    dropout_rate: sc.dropout_rate.filter(|v| v.0 > 0),
                    name: None,
                };
            }
            if let Err(message) = apply(&mut cfg, &mut sc, line, known, value) {
                diags.push(Diagnostic {
                    line,
                    message: format!("`{key}`: {message}"),
                });
            }
        }
        if let Some(kind) = sc.build(&mut diags) {
            cfg.network.shortcut = kind;
        }
        if diags.is_empty() {
            if let Err(e) = cfg.validate() {
                diags.push(Diagnostic { line: 0, message: e });
            }
        }
        if diags.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError(diags))
        }
    }

    /// Semantic checks across sections.
    pub fn validate(&self) -> Result<(), String> {
        self.network.validate().map_err(|e| e.to_string())?;
        self.train.validate().map_err(|e| e.to_string())?;
        if self.run.seeds.is_empty() {
            return Err("run.seeds must list at least one seed".into());
        }
        let classes = match self.data.dataset {
            DatasetKind::Cifar10 => 10,
            DatasetKind::Cifar100 => 100,
            DatasetKind::Synthetic => self.data.synthetic_classes,
        };
        if classes != self.network.num_classes {
            return Err(format!(
                "network.num_classes = {} but {} has {classes} classes",
                self.network.num_classes,
                self.data.dataset.name()
            ));
        }
        let size = match self.data.dataset {
            DatasetKind::Synthetic => self.data.synthetic_size,
            _ => 32,
        };
        if self.network.input_size != (size, size) {
            return Err(format!(
                "network.input_size = {} but the data is {size}×{size}",
                self.network.input_size.0
            ));
        }
        if self.analysis.batch < 2 {
            return Err("analysis.batch must be at least 2".into());
        }
        Ok(())
    }

    /// Full config text; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let n = &self.network;
        let t = &self.train;
        let d = &self.data;
        let r = &self.run;
        let a = &self.analysis;
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("network.depth", n.depth.to_string());
        kv("network.branch", n.branch.name().to_string());
        kv("network.shortcut", shortcut_name(n.shortcut).to_string());
        match n.shortcut {
            ShortcutKind::ConstantScale { lambda } => kv("network.lambda", lambda.to_string()),
            ShortcutKind::ExclusiveGate { init_bias } | ShortcutKind::ShortcutOnlyGate { init_bias } => {
                kv("network.gate_bias", init_bias.to_string())
            }
            ShortcutKind::Dropout { rate } => kv("network.dropout_rate", rate.to_string()),
            _ => {}
        }
        kv("network.branch_scale", n.branch_scale.map_or("none".into(), |b| b.to_string()));
        kv("network.order", n.order.name().to_string());
        kv("network.boundary", shortcut_name(n.boundary_shortcut).to_string());
        kv("network.widths", list(&n.widths));
        kv("network.num_classes", n.num_classes.to_string());
        kv("network.input_size", n.input_size.0.to_string());
        kv("train.lr", t.lr_initial.to_string());
        kv("train.warmup", t.warmup.to_string());
        kv("train.warmup_lr", t.warmup_lr.to_string());
        kv("train.warmup_iters", t.warmup_iters.to_string());
        kv("train.decay_points", list(&t.decay_points));
        kv("train.decay_factor", t.decay_factor.to_string());
        kv("train.total_iters", t.total_iters.to_string());
        kv("train.weight_decay", t.weight_decay.to_string());
        kv("train.decay_all_params", t.decay_all_params.to_string());
        kv("train.momentum", t.momentum.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.augment", t.augment.to_string());
        kv("train.log_every", t.log_every.to_string());
        kv("train.eval_every", t.eval_every.to_string());
        kv("data.dataset", d.dataset.name().to_string());
        kv("data.dir", d.dir.display().to_string());
        kv("data.subset", d.subset.to_string());
        kv("data.subset_seed", d.subset_seed.to_string());
        kv("data.synthetic_train", d.synthetic_train.to_string());
        kv("data.synthetic_test", d.synthetic_test.to_string());
        kv("data.synthetic_classes", d.synthetic_classes.to_string());
        kv("data.synthetic_size", d.synthetic_size.to_string());
        kv("data.synthetic_noise", d.synthetic_noise.to_string());
        kv("data.synthetic_jitter", d.synthetic_jitter.to_string());
        kv("data.synthetic_seed", d.synthetic_seed.to_string());
        kv("run.seeds", r.seeds.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        kv("run.out_dir", r.out_dir.display().to_string());
        kv("run.deterministic", r.deterministic.to_string());
        kv("run.checkpoint_every", r.checkpoint_every.to_string());
        kv("analysis.telescope", a.telescope.to_string());
        kv("analysis.decompose", a.decompose.to_string());
        kv("analysis.lambda_product", a.lambda_product.to_string());
        kv("analysis.profile", a.profile.to_string());
        kv("analysis.slice", a.slice.map_or("auto".into(), |(l, u)| format!("{l},{u}")));
        kv("analysis.batch", a.batch.to_string());
        s
    }

    /// Training settings for one seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            deterministic: self.run.deterministic,
            ..self.train.clone()
        }
    }
}
