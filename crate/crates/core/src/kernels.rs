//! Raw numeric kernels behind the graph operations.
//!
//! Every kernel accumulates in a fixed loop order, so results are bit-identical
//! from run to run.

use crate::error::{Error, Result};
use crate::tensor::{numel, strides, Tensor};

/// Kernel size, stride and zero padding per spatial axis (depth, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvGeom {
    pub fn cubic(kernel: usize, stride: usize, pad: usize) -> Self {
        ConvGeom {
            kernel: [kernel; 3],
            stride: [stride; 3],
            pad: [pad; 3],
        }
    }

    /// Planar geometry embedded in 3D with a unit depth axis.
    pub fn planar(kernel: usize, stride: usize, pad: usize) -> Self {
        ConvGeom {
            kernel: [1, kernel, kernel],
            stride: [1, stride, stride],
            pad: [0, pad, pad],
        }
    }

    pub fn conv_extent(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.pad[a];
            if padded < self.kernel[a] {
                return Err(Error::invalid_shape(
                    "conv",
                    format!(
                        "extent underflow: input {} + 2*pad {} < kernel {}",
                        input[a], self.pad[a], self.kernel[a]
                    ),
                ));
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    pub fn transpose_extent(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let full = (input[a] - 1) * self.stride[a] + self.kernel[a];
            if full <= 2 * self.pad[a] {
                return Err(Error::invalid_shape("conv_transpose", "extent underflow"));
            }
            out[a] = full - 2 * self.pad[a];
        }
        Ok(out)
    }
}

fn spatial(shape: &[usize]) -> [usize; 3] {
    [shape[2], shape[3], shape[4]]
}

fn check_rank5(op: &'static str, t: &Tensor) -> Result<()> {
    if t.rank() != 5 {
        return Err(Error::invalid_shape(
            op,
            format!("expected rank-5 tensor, got {:?}", t.shape()),
        ));
    }
    Ok(())
}

/// Valid output positions `p` for kernel tap `k`: those with `p*s + k - pad` in `0..n_in`.
#[inline]
fn tap_range(k: usize, s: usize, pad: usize, n_in: usize, n_out: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(s) };
    let hi_excl = if n_in + pad > k {
        ((n_in + pad - k - 1) / s + 1).min(n_out)
    } else {
        0
    };
    (lo, hi_excl.max(lo))
}

/// Index bookkeeping shared by the lowered convolution kernels.
struct Lowering<'a> {
    g: &'a ConvGeom,
    ins: [usize; 3],
    outs: [usize; 3],
    ranges: Vec<[(usize, usize); 3]>,
}

impl<'a> Lowering<'a> {
    fn new(g: &'a ConvGeom, ins: [usize; 3], outs: [usize; 3]) -> Self {
        let ranges = kernel_taps(g)
            .map(|k| {
                [
                    tap_range(k[0], g.stride[0], g.pad[0], ins[0], outs[0]),
                    tap_range(k[1], g.stride[1], g.pad[1], ins[1], outs[1]),
                    tap_range(k[2], g.stride[2], g.pad[2], ins[2], outs[2]),
                ]
            })
            .collect();
        Lowering { g, ins, outs, ranges }
    }

    /// Calls `f(input offset, output offset)` for every in-bounds pair of tap `t`.
    #[inline]
    fn each(&self, t: usize, k: [usize; 3], mut f: impl FnMut(usize, usize)) {
        let g = self.g;
        let [(d0, d1), (h0, h1), (w0, w1)] = self.ranges[t];
        for pd in d0..d1 {
            let id = pd * g.stride[0] + k[0] - g.pad[0];
            for ph in h0..h1 {
                let ih = ph * g.stride[1] + k[1] - g.pad[1];
                let xrow = (id * self.ins[1] + ih) * self.ins[2];
                let yrow = (pd * self.outs[1] + ph) * self.outs[2];
                for pw in w0..w1 {
                    let iw = pw * g.stride[2] + k[2] - g.pad[2];
                    f(xrow + iw, yrow + pw);
                }
            }
        }
    }

    /// `[B, C, ins] → [C·kvol, B·out_vol]` patch matrix.
    fn im2col(&self, x: &[f64], batch: usize, channels: usize) -> Vec<f64> {
        let (in_vol, out_vol) = (numel(&self.ins), numel(&self.outs));
        let kvol = numel(&self.g.kernel);
        let ncol = batch * out_vol;
        let mut cols = vec![0.0; channels * kvol * ncol];
        for b in 0..batch {
            for c in 0..channels {
                let xc = &x[(b * channels + c) * in_vol..(b * channels + c + 1) * in_vol];
                for (t, k) in kernel_taps(self.g).enumerate() {
                    let row = &mut cols[(c * kvol + t) * ncol + b * out_vol..][..out_vol];
                    self.each(t, k, |xi, yi| row[yi] = xc[xi]);
                }
            }
        }
        cols
    }

    /// Adjoint of [`Lowering::im2col`]: scatter-adds patches back into `[B, C, ins]`.
    fn col2im(&self, cols: &[f64], batch: usize, channels: usize) -> Vec<f64> {
        let (in_vol, out_vol) = (numel(&self.ins), numel(&self.outs));
        let kvol = numel(&self.g.kernel);
        let ncol = batch * out_vol;
        let mut x = vec![0.0; batch * channels * in_vol];
        for b in 0..batch {
            for c in 0..channels {
                let xc = &mut x[(b * channels + c) * in_vol..(b * channels + c + 1) * in_vol];
                for (t, k) in kernel_taps(self.g).enumerate() {
                    let row = &cols[(c * kvol + t) * ncol + b * out_vol..][..out_vol];
                    self.each(t, k, |xi, yi| xc[xi] += row[yi]);
                }
            }
        }
        x
    }
}

/// `[B, C, V] ↔ [C, B·V]`.
fn swap_batch_channels(x: &[f64], outer: usize, inner: usize, vol: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for a in 0..outer {
        for b in 0..inner {
            let src = &x[(a * inner + b) * vol..][..vol];
            y[(b * outer + a) * vol..][..vol].copy_from_slice(src);
        }
    }
    y
}

/// `C = A·B` for row-major `A: [m,k]`, `B: [k,n]`, with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: the strides describe matrices that lie within `a`, `b` and `c`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// Cross-correlation: `y[b,o,p] = Σ_{i,k} x[b,i,p*s+k-pad] · w[o,i,k]`.
pub fn conv(x: &Tensor, w: &Tensor, g: &ConvGeom) -> Result<Tensor> {
    check_rank5("conv", x)?;
    check_rank5("conv", w)?;
    let (xs, ws) = (x.shape(), w.shape());
    if xs[1] != ws[1] || spatial(ws) != g.kernel {
        return Err(Error::shape("conv", xs, ws));
    }
    let (batch, cin, cout) = (xs[0], xs[1], ws[0]);
    let ins = spatial(xs);
    let outs = g.conv_extent(ins)?;
    let kk = cin * numel(&g.kernel);
    let ncol = batch * numel(&outs);
    let low = Lowering::new(g, ins, outs);
    let cols = low.im2col(x.data(), batch, cin);
    let y = gemm(cout, kk, ncol, w.data(), kk, 1, &cols, ncol, 1);
    let mut shape = vec![batch, cout];
    shape.extend_from_slice(&outs);
    Ok(Tensor::from_parts(shape, swap_batch_channels(&y, cout, batch, numel(&outs))))
}

/// Adjoint of [`conv`] with respect to its input: `x` has `w.shape[0]` channels
/// and the result has `w.shape[1]` channels with the given spatial extent.
pub fn conv_transpose(x: &Tensor, w: &Tensor, g: &ConvGeom, out_spatial: [usize; 3]) -> Result<Tensor> {
    check_rank5("conv_transpose", x)?;
    check_rank5("conv_transpose", w)?;
    let (xs, ws) = (x.shape(), w.shape());
    if xs[1] != ws[0] || spatial(ws) != g.kernel {
        return Err(Error::shape("conv_transpose", xs, ws));
    }
    let ins = spatial(xs);
    if g.conv_extent(out_spatial)? != ins {
        return Err(Error::invalid_shape(
            "conv_transpose",
            format!("output extent {out_spatial:?} does not reduce to input extent {ins:?}"),
        ));
    }
    let (batch, cin, cout) = (xs[0], xs[1], ws[1]);
    let kk = cout * numel(&g.kernel);
    let ncol = batch * numel(&ins);
    let xm = swap_batch_channels(x.data(), batch, cin, numel(&ins));
    let cols = gemm(kk, cin, ncol, w.data(), 1, kk, &xm, ncol, 1);
    let low = Lowering::new(g, out_spatial, ins);
    let mut shape = vec![batch, cout];
    shape.extend_from_slice(&out_spatial);
    Ok(Tensor::from_parts(shape, low.col2im(&cols, batch, cout)))
}

/// Kernel gradient of [`conv`]: `gw[o,i,k] = Σ_{b,p} gy[b,o,p] · x[b,i,p*s+k-pad]`.
pub fn conv_weight_grad(x: &Tensor, gy: &Tensor, g: &ConvGeom) -> Result<Tensor> {
    check_rank5("conv_weight_grad", x)?;
    check_rank5("conv_weight_grad", gy)?;
    let (xs, gs) = (x.shape(), gy.shape());
    let ins = spatial(xs);
    let outs = g.conv_extent(ins)?;
    if xs[0] != gs[0] || spatial(gs) != outs {
        return Err(Error::shape("conv_weight_grad", xs, gs));
    }
    let (batch, cin, cout) = (xs[0], xs[1], gs[1]);
    let kk = cin * numel(&g.kernel);
    let ncol = batch * numel(&outs);
    let low = Lowering::new(g, ins, outs);
    let cols = low.im2col(x.data(), batch, cin);
    let gm = swap_batch_channels(gy.data(), batch, cout, numel(&outs));
    let gw = gemm(cout, ncol, kk, &gm, ncol, 1, &cols, 1, ncol);
    let mut shape = vec![cout, cin];
    shape.extend_from_slice(&g.kernel);
    Ok(Tensor::from_parts(shape, gw))
}

fn kernel_taps(g: &ConvGeom) -> impl Iterator<Item = [usize; 3]> + '_ {
    let [kd, kh, kw] = g.kernel;
    (0..kd).flat_map(move |a| (0..kh).flat_map(move |b| (0..kw).map(move |c| [a, b, c])))
}

/// `[m,k] × [k,n] → [m,n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (asz, bsz) = (a.shape(), b.shape());
    if asz.len() != 2 || bsz.len() != 2 || asz[1] != bsz[0] {
        return Err(Error::shape("matmul", asz, bsz));
    }
    let (m, k, n) = (asz[0], asz[1], bsz[1]);
    Ok(Tensor::from_parts(vec![m, n], gemm(m, k, n, a.data(), k, 1, b.data(), n, 1)))
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 {
        return Err(Error::invalid_shape("transpose", format!("rank-2 required, got {:?}", a.shape())));
    }
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let d = a.data();
    let mut t = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            t[j * m + i] = d[i * n + j];
        }
    }
    Ok(Tensor::from_parts(vec![n, m], t))
}

/// Checks that `small` expands to `big`: equal rank, each extent equal or 1.
pub fn check_broadcast(op: &'static str, small: &[usize], big: &[usize]) -> Result<()> {
    if small.len() != big.len() || small.iter().zip(big).any(|(&s, &b)| s != b && s != 1) {
        return Err(Error::shape(op, small, big));
    }
    Ok(())
}

pub fn broadcast_to(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    check_broadcast("broadcast_to", x.shape(), shape)?;
    let src_strides: Vec<usize> = strides(x.shape())
        .into_iter()
        .zip(x.shape())
        .map(|(s, &d)| if d == 1 { 0 } else { s })
        .collect();
    let n = numel(shape);
    let xd = x.data();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    let mut src = 0usize;
    for _ in 0..n {
        out.push(xd[src]);
        for a in (0..shape.len()).rev() {
            idx[a] += 1;
            src += src_strides[a];
            if idx[a] < shape[a] {
                break;
            }
            src -= src_strides[a] * shape[a];
            idx[a] = 0;
        }
    }
    Ok(Tensor::from_parts(shape.to_vec(), out))
}

/// Sums `x` over the axes where `shape` has extent 1 (inverse of [`broadcast_to`]).
pub fn sum_to(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    check_broadcast("sum_to", shape, x.shape())?;
    let big = x.shape();
    let dst_strides: Vec<usize> = strides(shape)
        .into_iter()
        .zip(shape)
        .map(|(s, &d)| if d == 1 { 0 } else { s })
        .collect();
    let mut out = vec![0.0; numel(shape)];
    let mut idx = vec![0usize; big.len()];
    let mut dst = 0usize;
    for &v in x.data() {
        out[dst] += v;
        for a in (0..big.len()).rev() {
            idx[a] += 1;
            dst += dst_strides[a];
            if idx[a] < big[a] {
                break;
            }
            dst -= dst_strides[a] * big[a];
            idx[a] = 0;
        }
    }
    Ok(Tensor::from_parts(shape.to_vec(), out))
}

pub fn narrow(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let s = x.shape();
    if axis >= s.len() || len == 0 || start + len > s[axis] {
        return Err(Error::invalid_shape(
            "narrow",
            format!("range {start}..{} on axis {axis} of {s:?}", start + len),
        ));
    }
    let outer = numel(&s[..axis]);
    let inner = numel(&s[axis + 1..]);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * s[axis] + start) * inner;
        out.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    let mut shape = s.to_vec();
    shape[axis] = len;
    Ok(Tensor::from_parts(shape, out))
}

/// Zero-pads `x` along `axis` into an extent of `full`, placing it at `start`.
pub fn embed(x: &Tensor, axis: usize, start: usize, full: usize) -> Result<Tensor> {
    let s = x.shape();
    if axis >= s.len() || start + s[axis] > full {
        return Err(Error::invalid_shape("embed", format!("{s:?} at {start} into {full}")));
    }
    let outer = numel(&s[..axis]);
    let inner = numel(&s[axis + 1..]);
    let len = s[axis];
    let mut out = vec![0.0; outer * full * inner];
    for o in 0..outer {
        let dst = (o * full + start) * inner;
        out[dst..dst + len * inner].copy_from_slice(&x.data()[o * len * inner..(o + 1) * len * inner]);
    }
    let mut shape = s.to_vec();
    shape[axis] = full;
    Ok(Tensor::from_parts(shape, out))
}
