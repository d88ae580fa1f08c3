use std::fmt;

use super::model::Network;
use crate::nn::{ParamKind, Parameterized};
use crate::scalar::Scalar;
use crate::units::ShortcutParams;

/// One row of [`param_summary`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamRow {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub count: usize,
}

/// Trainable tensors in network order.
pub fn param_summary<T: Scalar>(net: &Network<T>) -> Vec<ParamRow> {
    let mut rows = Vec::new();
    net.visit(&mut |name, kind, t| {
        if kind.trainable() {
            rows.push(ParamRow {
                name: name.to_string(),
                kind,
                shape: t.shape().to_vec(),
                count: t.numel(),
            });
        }
    });
    rows
}

/// Printable parameter table with a total line.
pub struct SummaryTable<'a>(pub &'a [ParamRow]);

impl fmt::Display for SummaryTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.0.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        writeln!(f, "{:<width$}  {:<18}  {:>10}", "name", "shape", "params")?;
        for r in self.0 {
            writeln!(f, "{:<width$}  {:<18}  {:>10}", r.name, format!("{:?}", r.shape), r.count)?;
        }
        write!(f, "{:<width$}  {:<18}  {:>10}", "total", "", self.0.iter().map(|r| r.count).sum::<usize>())
    }
}

/// Multiply-accumulate operations of one forward pass on a single image,
/// counting convolutions (gates and shortcuts included) and the classifier.
pub fn forward_macs<T: Scalar>(net: &Network<T>) -> u64 {
    let conv_macs = |w: &[usize], h: usize, wd: usize| (w[0] * w[1] * w[2] * w[3] * h * wd) as u64;
    let (mut h, mut w) = net.cfg.input_size;
    let mut macs = conv_macs(net.stem.weight.shape(), h, w);
    for unit in net.units() {
        let (in_h, in_w) = (h, w);
        for conv in &unit.convs {
            let k = conv.kernel();
            h = (h + 2 * conv.padding - k) / conv.stride + 1;
            w = (w + 2 * conv.padding - k) / conv.stride + 1;
            macs += conv_macs(conv.weight.shape(), h, w);
        }
        macs += match &unit.shortcut {
            ShortcutParams::Gate(g) => conv_macs(g.weight.shape(), in_h, in_w),
            ShortcutParams::Conv { conv, .. } => conv_macs(conv.weight.shape(), h, w),
            ShortcutParams::None => 0,
        };
    }
    macs + net.fc.weight.numel() as u64
}
