//! 2-D cross-correlation via im2col and a single GEMM per call.

use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Sizes involved in one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_pixels(&self) -> usize {
        self.out_height() * self.out_width()
    }

    /// Multiply-accumulates for one forward pass.
    pub fn macs(&self) -> usize {
        self.batch * self.out_channels * self.out_pixels() * self.patch_len()
    }
}

/// Unrolls `x` into a `[C·K·K, N·OH·OW]` row-major matrix.
fn im2col<T: Scalar>(x: &[T], geo: &ConvGeometry) -> Vec<T> {
    let (oh, ow) = (geo.out_height(), geo.out_width());
    let cols_per_row = geo.batch * oh * ow;
    let mut cols = vec![T::zero(); geo.patch_len() * cols_per_row];
    let k = geo.kernel;
    for c in 0..geo.in_channels {
        for kh in 0..k {
            for kw in 0..k {
                let row = (c * k + kh) * k + kw;
                let dst = &mut cols[row * cols_per_row..(row + 1) * cols_per_row];
                for n in 0..geo.batch {
                    let plane = &x[(n * geo.in_channels + c) * geo.height * geo.width..][..geo.height * geo.width];
                    for oy in 0..oh {
                        let iy = (oy * geo.stride + kh) as isize - geo.padding as isize;
                        if iy < 0 || iy >= geo.height as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * geo.width..][..geo.width];
                        let out = &mut dst[(n * oh + oy) * ow..][..ow];
                        for (ox, slot) in out.iter_mut().enumerate() {
                            let ix = (ox * geo.stride + kw) as isize - geo.padding as isize;
                            if ix >= 0 && ix < geo.width as isize {
                                *slot = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters columns back, summing overlaps.
fn col2im<T: Scalar>(cols: &[T], geo: &ConvGeometry) -> Vec<T> {
    let (oh, ow) = (geo.out_height(), geo.out_width());
    let cols_per_row = geo.batch * oh * ow;
    let mut x = vec![T::zero(); geo.batch * geo.in_channels * geo.height * geo.width];
    let k = geo.kernel;
    for c in 0..geo.in_channels {
        for kh in 0..k {
            for kw in 0..k {
                let row = (c * k + kh) * k + kw;
                let src = &cols[row * cols_per_row..(row + 1) * cols_per_row];
                for n in 0..geo.batch {
                    let plane = &mut x[(n * geo.in_channels + c) * geo.height * geo.width..][..geo.height * geo.width];
                    for oy in 0..oh {
                        let iy = (oy * geo.stride + kh) as isize - geo.padding as isize;
                        if iy < 0 || iy >= geo.height as isize {
                            continue;
                        }
                        let dst_row = &mut plane[iy as usize * geo.width..][..geo.width];
                        let vals = &src[(n * oh + oy) * ow..][..ow];
                        for (ox, &v) in vals.iter().enumerate() {
                            let ix = (ox * geo.stride + kw) as isize - geo.padding as isize;
                            if ix >= 0 && ix < geo.width as isize {
                                dst_row[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Rearranges `[N, C, P]` into `[C, N, P]` (or back, with swapped arguments).
fn swap_leading<T: Scalar>(src: &[T], outer: usize, inner: usize, pixels: usize) -> Vec<T> {
    let mut dst = vec![T::zero(); src.len()];
    for a in 0..outer {
        for b in 0..inner {
            dst[(b * outer + a) * pixels..][..pixels].copy_from_slice(&src[(a * inner + b) * pixels..][..pixels]);
        }
    }
    dst
}

impl<T: Scalar> Graph<T> {
    /// Zero-padded, strided cross-correlation (no kernel flip).
    ///
    /// `x` is `[N, C, H, W]`, `weight` is `[OutC, C, K, K]` and the optional
    /// `bias` is `[OutC]`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(weight).to_vec());
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::InvalidShape {
                op: "conv2d",
                detail: format!("expected 4-D input and kernel, got {xs:?} and {ws:?}"),
            });
        }
        if xs[1] != ws[1] {
            return Err(Error::ShapeMismatch {
                op: "conv2d (input channels)",
                lhs: xs,
                rhs: ws,
            });
        }
        if ws[2] != ws[3] {
            return Err(Error::InvalidShape {
                op: "conv2d",
                detail: format!("non-square kernel {ws:?}"),
            });
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be at least 1".into()));
        }
        if xs[2] + 2 * padding < ws[2] || xs[3] + 2 * padding < ws[3] {
            return Err(Error::InvalidShape {
                op: "conv2d",
                detail: format!("kernel {ws:?} larger than padded input {xs:?}"),
            });
        }
        if let Some(b) = bias {
            if self.shape(b) != [ws[0]] {
                return Err(Error::ShapeMismatch {
                    op: "conv2d (bias)",
                    lhs: self.shape(b).to_vec(),
                    rhs: vec![ws[0]],
                });
            }
        }
        let geo = ConvGeometry {
            batch: xs[0],
            in_channels: xs[1],
            height: xs[2],
            width: xs[3],
            out_channels: ws[0],
            kernel: ws[2],
            stride,
            padding,
        };
        let (np, p) = (geo.batch * geo.out_pixels(), geo.out_pixels());
        let kk = geo.patch_len();

        let cols = im2col(self.value(x).data(), &geo);
        let mut out_cn = vec![T::zero(); geo.out_channels * np];
        T::gemm(
            geo.out_channels,
            kk,
            np,
            T::one(),
            self.value(weight).data(),
            (kk as isize, 1),
            &cols,
            (np as isize, 1),
            T::zero(),
            &mut out_cn,
            (np as isize, 1),
        );
        let mut out = swap_leading(&out_cn, geo.out_channels, geo.batch, p);
        if let Some(b) = bias {
            let b = self.value(b).data();
            for (i, chunk) in out.chunks_mut(p).enumerate() {
                let bo = b[i % geo.out_channels];
                chunk.iter_mut().for_each(|v| *v += bo);
            }
        }
        let value = Tensor::new(vec![geo.batch, geo.out_channels, geo.out_height(), geo.out_width()], out)?;

        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        self.record(
            "conv2d",
            value,
            &inputs,
            Box::new(move |ctx| {
                let dy = swap_leading(ctx.upstream, geo.batch, geo.out_channels, p);
                let dx = ctx.needs[0].then(|| {
                    let mut dcols = vec![T::zero(); kk * np];
                    T::gemm(
                        kk,
                        geo.out_channels,
                        np,
                        T::one(),
                        ctx.inputs[1].data(),
                        (1, kk as isize),
                        &dy,
                        (np as isize, 1),
                        T::zero(),
                        &mut dcols,
                        (np as isize, 1),
                    );
                    col2im(&dcols, &geo)
                });
                let dw = ctx.needs[1].then(|| {
                    let mut dw = vec![T::zero(); geo.out_channels * kk];
                    T::gemm(
                        geo.out_channels,
                        np,
                        kk,
                        T::one(),
                        &dy,
                        (np as isize, 1),
                        &cols,
                        (1, np as isize),
                        T::zero(),
                        &mut dw,
                        (kk as isize, 1),
                    );
                    dw
                });
                let mut grads = vec![dx, dw];
                if ctx.inputs.len() == 3 {
                    grads.push(ctx.needs[2].then(|| {
                        dy.chunks(np)
                            .map(|row| row.iter().fold(T::zero(), |a, &v| a + v))
                            .collect()
                    }));
                }
                grads
            }),
        )
    }

    /// Identity shortcut for a width/resolution change: keeps every
    /// `stride`-th pixel and appends zero channels up to `out_channels`.
    pub fn subsample_zero_pad(&mut self, x: NodeId, stride: usize, out_channels: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || out_channels < xs[1] || stride == 0 {
            return Err(Error::InvalidShape {
                op: "subsample_zero_pad",
                detail: format!("input {xs:?}, stride {stride}, out_channels {out_channels}"),
            });
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
        let src = self.value(x).data();
        let mut out = vec![T::zero(); n * out_channels * oh * ow];
        for b in 0..n {
            for ch in 0..c {
                for y in 0..oh {
                    for xx in 0..ow {
                        out[((b * out_channels + ch) * oh + y) * ow + xx] =
                            src[((b * c + ch) * h + y * stride) * w + xx * stride];
                    }
                }
            }
        }
        let value = Tensor::new(vec![n, out_channels, oh, ow], out)?;
        self.record(
            "subsample_zero_pad",
            value,
            &[x],
            Box::new(move |ctx| {
                let mut dx = vec![T::zero(); n * c * h * w];
                for b in 0..n {
                    for ch in 0..c {
                        for y in 0..oh {
                            for xx in 0..ow {
                                dx[((b * c + ch) * h + y * stride) * w + xx * stride] =
                                    ctx.upstream[((b * out_channels + ch) * oh + y) * ow + xx];
                            }
                        }
                    }
                }
                vec![Some(dx)]
            }),
        )
    }
}
