//! Direct-loop reference kernels in `f64`, used as oracles for the
//! vectorized convolution and batch normalization.

/// Cross-correlation of `x: [N, C, H, W]` with `w: [O, C, K, K]`.
/// Returns the output and its shape `[N, O, Ho, Wo]`.
pub fn conv2d_naive(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 4],
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, wd] = xs;
    let [o, _, k, _] = ws;
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut y = vec![0.0; n * o * ho * wo];
    for b in 0..n {
        for oc in 0..o {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = bias.map_or(0.0, |bv| bv[oc]);
                    for ic in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let (r, s) = ((i * stride + ki) as isize - pad as isize, (j * stride + kj) as isize - pad as isize);
                                if r < 0 || s < 0 || r >= h as isize || s >= wd as isize {
                                    continue;
                                }
                                acc += x[((b * c + ic) * h + r as usize) * wd + s as usize] * w[((oc * c + ic) * k + ki) * k + kj];
                            }
                        }
                    }
                    y[((b * o + oc) * ho + i) * wo + j] = acc;
                }
            }
        }
    }
    (y, [n, o, ho, wo])
}

/// Gradients of `Σ gy ⊙ conv(x, w) + bias` with respect to `x`, `w` and the bias.
pub fn conv2d_naive_backward(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 4],
    stride: usize,
    pad: usize,
    gy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let [n, c, h, wd] = xs;
    let [o, _, k, _] = ws;
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let (mut dx, mut dw, mut db) = (vec![0.0; x.len()], vec![0.0; w.len()], vec![0.0; o]);
    for b in 0..n {
        for oc in 0..o {
            for i in 0..ho {
                for j in 0..wo {
                    let g = gy[((b * o + oc) * ho + i) * wo + j];
                    db[oc] += g;
                    for ic in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let (r, s) = ((i * stride + ki) as isize - pad as isize, (j * stride + kj) as isize - pad as isize);
                                if r < 0 || s < 0 || r >= h as isize || s >= wd as isize {
                                    continue;
                                }
                                let xi = ((b * c + ic) * h + r as usize) * wd + s as usize;
                                let wi = ((oc * c + ic) * k + ki) * k + kj;
                                dx[xi] += g * w[wi];
                                dw[wi] += g * x[xi];
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Per-channel mean and biased variance of `x: [N, C, ...]`.
pub fn channel_stats(x: &[f64], n: usize, c: usize) -> (Vec<f64>, Vec<f64>) {
    let p = x.len() / (n * c);
    let vals = |ch: usize| (0..n).flat_map(move |b| (0..p).map(move |q| (b * c + ch) * p + q));
    let count = (n * p) as f64;
    let mean: Vec<f64> = (0..c).map(|ch| vals(ch).map(|i| x[i]).sum::<f64>() / count).collect();
    let var: Vec<f64> = (0..c).map(|ch| vals(ch).map(|i| (x[i] - mean[ch]).powi(2)).sum::<f64>() / count).collect();
    (mean, var)
}

/// `γ (x − μ) / √(σ² + ε) + β` with batch statistics.
pub fn batch_norm_naive(x: &[f64], n: usize, c: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let p = x.len() / (n * c);
    let (mean, var) = channel_stats(x, n, c);
    (0..x.len())
        .map(|i| {
            let ch = (i / p) % c;
            gamma[ch] * (x[i] - mean[ch]) / (var[ch] + eps).sqrt() + beta[ch]
        })
        .collect()
}

/// Closed-form batch-statistics BN gradients for upstream `gy`:
/// `dx = γ/σ̂ · (gy − mean(gy) − x̂ · mean(gy ⊙ x̂))`, `dγ = Σ gy ⊙ x̂`, `dβ = Σ gy`.
pub fn batch_norm_naive_backward(x: &[f64], n: usize, c: usize, gamma: &[f64], eps: f64, gy: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = x.len() / (n * c);
    let count = (n * p) as f64;
    let (mean, var) = channel_stats(x, n, c);
    let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let xhat = |i: usize| (x[i] - mean[(i / p) % c]) * inv[(i / p) % c];
    let (mut dgamma, mut dbeta) = (vec![0.0; c], vec![0.0; c]);
    for i in 0..x.len() {
        let ch = (i / p) % c;
        dgamma[ch] += gy[i] * xhat(i);
        dbeta[ch] += gy[i];
    }
    let dx = (0..x.len())
        .map(|i| {
            let ch = (i / p) % c;
            gamma[ch] * inv[ch] * (gy[i] - dbeta[ch] / count - xhat(i) * dgamma[ch] / count)
        })
        .collect();
    (dx, dgamma, dbeta)
}
