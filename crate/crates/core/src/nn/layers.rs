//! Layer primitives expressed as graph operations.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::kernels::ConvGeom;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, g: &Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::LeakyRelu(a) => g.leaky_relu(x, a),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

fn channel_shape(rank: usize, channels: usize) -> Vec<usize> {
    let mut s = vec![1; rank];
    s[1] = channels;
    s
}

/// `x[batch, in] · w[in, out] + b[out]`.
pub fn dense(g: &Graph, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let y = g.matmul(x, w)?;
    match b {
        Some(b) => {
            let out = g.shape(w)[1];
            let b2 = g.reshape(b, &[1, out])?;
            g.add(y, b2)
        }
        None => Ok(y),
    }
}

fn add_channel_bias(g: &Graph, y: Var, b: Option<Var>) -> Result<Var> {
    match b {
        Some(b) => {
            let shape = g.shape(y);
            let bc = g.reshape(b, &channel_shape(shape.len(), shape[1]))?;
            g.add(y, bc)
        }
        None => Ok(y),
    }
}

/// 3D cross-correlation, `w` shaped `[out, in, k, k, k]`.
pub fn conv3d(g: &Graph, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Result<Var> {
    let y = g.conv(x, w, geom)?;
    add_channel_bias(g, y, b)
}

/// Adjoint of [`conv3d`] with respect to its input. `w` is laid out as the
/// kernel of the forward convolution it transposes: `[in, out, k, k, k]`.
pub fn conv_transpose3d(g: &Graph, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Result<Var> {
    let xs = g.shape(x);
    if xs.len() != 5 {
        return Err(Error::invalid_shape("conv_transpose3d", format!("rank-5 input required, got {xs:?}")));
    }
    let out = geom.transpose_extent([xs[2], xs[3], xs[4]])?;
    let y = g.conv_transpose(x, w, geom, out)?;
    add_channel_bias(g, y, b)
}

/// 2D cross-correlation on `[batch, c, h, w]`, `w` shaped `[out, in, k, k]`.
pub fn conv2d(g: &Graph, x: Var, w: Var, b: Option<Var>, kernel: usize, stride: usize, pad: usize) -> Result<Var> {
    let xs = g.shape(x);
    let ws = g.shape(w);
    if xs.len() != 4 || ws.len() != 4 {
        return Err(Error::shape("conv2d", &xs, &ws));
    }
    let x5 = g.reshape(x, &[xs[0], xs[1], 1, xs[2], xs[3]])?;
    let w5 = g.reshape(w, &[ws[0], ws[1], 1, ws[2], ws[3]])?;
    let y5 = g.conv(x5, w5, ConvGeom::planar(kernel, stride, pad))?;
    let ys = g.shape(y5);
    let y = g.reshape(y5, &[ys[0], ys[1], ys[3], ys[4]])?;
    add_channel_bias(g, y, b)
}

/// Per-channel batch statistics observed during a training-mode pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Tensor,
    pub var: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Tensor,
    pub var: Tensor,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: Tensor::zeros(vec![channels]),
            var: Tensor::ones(vec![channels]),
        }
    }

    pub fn update(&mut self, batch: &BatchStats, momentum: f64) {
        let blend = |old: &Tensor, new: &Tensor| {
            old.zip_map(new, "running_stats", |o, n| momentum * o + (1.0 - momentum) * n)
                .expect("channel counts agree")
        };
        self.mean = blend(&self.mean, &batch.mean);
        self.var = blend(&self.var, &batch.var);
    }
}

/// Batch normalization over every axis except the channel axis 1.
pub fn batchnorm(
    g: &Graph,
    x: Var,
    gamma: Var,
    beta: Var,
    mode: Mode,
    running: &RunningStats,
    eps: f64,
) -> Result<(Var, Option<BatchStats>)> {
    let shape = g.shape(x);
    if shape.len() < 2 {
        return Err(Error::invalid_shape("batchnorm", format!("rank >= 2 required, got {shape:?}")));
    }
    let c = shape[1];
    let cshape = channel_shape(shape.len(), c);
    let gamma_c = g.reshape(gamma, &cshape)?;
    let beta_c = g.reshape(beta, &cshape)?;
    match mode {
        Mode::Train => {
            if shape[0] < 2 {
                return Err(Error::invalid_shape("batchnorm", "batch of 1 in train mode"));
            }
            let n = (shape.iter().product::<usize>() / c) as f64;
            let mean = g.scale(g.sum_to(x, &cshape)?, 1.0 / n);
            let xc = g.sub(x, mean)?;
            let var = g.scale(g.sum_to(g.square(xc), &cshape)?, 1.0 / n);
            let inv = g.recip(g.sqrt(g.add_scalar(var, eps)));
            let xn = g.mul(xc, inv)?;
            let y = g.add(g.mul(xn, gamma_c)?, beta_c)?;
            let stats = BatchStats {
                mean: g.value(mean).reshape(vec![c])?,
                var: g.value(var).reshape(vec![c])?,
            };
            Ok((y, Some(stats)))
        }
        Mode::Eval => {
            let mean = g.constant(running.mean.reshape(cshape.clone())?);
            let inv = running.var.map(|v| 1.0 / (v + eps).sqrt()).reshape(cshape)?;
            let inv = g.constant(inv);
            let xn = g.mul(g.sub(x, mean)?, inv)?;
            let y = g.add(g.mul(xn, gamma_c)?, beta_c)?;
            Ok((y, None))
        }
    }
}
