use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::kernels::ConvGeom;
use crate::nn::layers::{self, Activation, BatchStats, Mode, RunningStats, BN_EPS, BN_MOMENTUM};
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense { input: usize, output: usize },
    Conv3d { input: usize, output: usize, geom: ConvGeom },
    ConvTranspose3d { input: usize, output: usize, geom: ConvGeom },
    Conv2d { input: usize, output: usize, kernel: usize, stride: usize, pad: usize },
    BatchNorm { channels: usize },
    Act(Activation),
    /// Reshape each sample to the given extents.
    Reshape(Vec<usize>),
    Flatten,
}

impl Layer {
    pub fn tag(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv3d { .. } => "conv3d",
            Layer::ConvTranspose3d { .. } => "deconv3d",
            Layer::Conv2d { .. } => "conv2d",
            Layer::BatchNorm { .. } => "bn",
            Layer::Act(_) => "act",
            Layer::Reshape(_) => "reshape",
            Layer::Flatten => "flatten",
        }
    }

    /// Shapes of this layer's parameters, in storage order.
    fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            Layer::Dense { input, output } => vec![("w", vec![input, output]), ("b", vec![output])],
            Layer::Conv3d { input, output, geom } => {
                let [a, b, c] = geom.kernel;
                vec![("w", vec![output, input, a, b, c]), ("b", vec![output])]
            }
            Layer::ConvTranspose3d { input, output, geom } => {
                let [a, b, c] = geom.kernel;
                vec![("w", vec![input, output, a, b, c]), ("b", vec![output])]
            }
            Layer::Conv2d { input, output, kernel, .. } => {
                vec![("w", vec![output, input, kernel, kernel]), ("b", vec![output])]
            }
            Layer::BatchNorm { channels } => vec![("gamma", vec![channels]), ("beta", vec![channels])],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Output of a forward pass plus the batch statistics it observed.
pub struct Forward {
    pub output: Var,
    pub stats: Vec<BatchStats>,
}

/// A sequential stack of layers with its parameters and batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    params: Vec<Param>,
    running: Vec<RunningStats>,
}

impl Network {
    /// Weights from a truncated normal (std 0.02), biases and shifts 0, scales 1.
    pub fn new(layers: Vec<Layer>, rng: &mut RngState) -> Self {
        let mut params = Vec::new();
        let mut running = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            for (suffix, shape) in layer.param_shapes() {
                let value = match suffix {
                    "w" => rng.sample_truncated_normal(&shape, INIT_STD),
                    "gamma" => Tensor::ones(shape),
                    _ => Tensor::zeros(shape),
                };
                params.push(Param {
                    name: format!("{i}.{}.{suffix}", layer.tag()),
                    value,
                });
            }
            if let Layer::BatchNorm { channels } = layer {
                running.push(RunningStats::new(*channels));
            }
        }
        Network { layers, params, running }
    }

    /// Reassembles a network from stored parameters, validating every shape.
    pub fn from_parts(layers: Vec<Layer>, params: Vec<Param>, running: Vec<RunningStats>) -> Result<Self> {
        let expected: Vec<(String, Vec<usize>)> = layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.param_shapes()
                    .into_iter()
                    .map(move |(s, shape)| (format!("{i}.{}.{s}", l.tag()), shape))
            })
            .collect();
        if expected.len() != params.len() {
            return Err(Error::Model(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in expected.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::Model(format!(
                    "parameter {} {:?} does not match layer slot {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        let bn: Vec<usize> = layers
            .iter()
            .filter_map(|l| match l {
                Layer::BatchNorm { channels } => Some(*channels),
                _ => None,
            })
            .collect();
        if bn.len() != running.len() || bn.iter().zip(&running).any(|(&c, r)| r.mean.len() != c || r.var.len() != c) {
            return Err(Error::Model("batch-norm running statistics do not match layers".into()));
        }
        Ok(Network { layers, params, running })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub fn batchnorm_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, Layer::BatchNorm { .. })).count()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Places every parameter on the graph, trainable or constant.
    pub fn bind(&self, g: &Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| g.leaf(p.value.clone(), trainable))
            .collect()
    }

    pub fn forward(&self, g: &Graph, bound: &[Var], x: Var, mode: Mode) -> Result<Forward> {
        if bound.len() != self.params.len() {
            return Err(Error::Model(format!(
                "{} bound parameters for a network with {}",
                bound.len(),
                self.params.len()
            )));
        }
        let mut h = x;
        let mut next = 0usize;
        let mut bn_index = 0usize;
        let mut stats = Vec::new();
        let mut take = |n: usize| {
            let s = &bound[next..next + n];
            next += n;
            s.to_vec()
        };
        for layer in &self.layers {
            h = match layer {
                Layer::Dense { .. } => {
                    let p = take(2);
                    layers::dense(g, h, p[0], Some(p[1]))?
                }
                Layer::Conv3d { geom, .. } => {
                    let p = take(2);
                    layers::conv3d(g, h, p[0], Some(p[1]), *geom)?
                }
                Layer::ConvTranspose3d { geom, .. } => {
                    let p = take(2);
                    layers::conv_transpose3d(g, h, p[0], Some(p[1]), *geom)?
                }
                Layer::Conv2d { kernel, stride, pad, .. } => {
                    let p = take(2);
                    layers::conv2d(g, h, p[0], Some(p[1]), *kernel, *stride, *pad)?
                }
                Layer::BatchNorm { .. } => {
                    let p = take(2);
                    let (y, s) = layers::batchnorm(g, h, p[0], p[1], mode, &self.running[bn_index], BN_EPS)?;
                    bn_index += 1;
                    stats.extend(s);
                    y
                }
                Layer::Act(a) => a.apply(g, h),
                Layer::Reshape(per_sample) => {
                    let mut shape = vec![g.shape(h)[0]];
                    shape.extend_from_slice(per_sample);
                    g.reshape(h, &shape)?
                }
                Layer::Flatten => {
                    let s = g.shape(h);
                    g.reshape(h, &[s[0], s[1..].iter().product()])?
                }
            };
        }
        Ok(Forward { output: h, stats })
    }

    /// Convenience forward pass on a fresh graph with frozen parameters.
    pub fn infer(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, Vec<BatchStats>)> {
        let g = Graph::new();
        g.set_recording(false);
        let bound = self.bind(&g, false);
        let xv = g.constant(x.clone());
        let f = self.forward(&g, &bound, xv, mode)?;
        let out = (*g.value(f.output)).clone();
        Ok((out, f.stats))
    }

    /// Folds a training pass's batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &[BatchStats]) {
        if stats.is_empty() {
            return;
        }
        debug_assert_eq!(stats.len(), self.running.len());
        for (r, s) in self.running.iter_mut().zip(stats) {
            r.update(s, BN_MOMENTUM);
        }
    }

    pub fn set_running_stats(&mut self, running: Vec<RunningStats>) -> Result<()> {
        if running.len() != self.running.len() {
            return Err(Error::Model("running statistics count mismatch".into()));
        }
        self.running = running;
        Ok(())
    }
}
