//! Finite-difference oracles shared by the integration tests.
#![allow(dead_code)]

use voxgan::kernels::ConvGeom;
use voxgan::models::{
    build_discriminator, build_encoder, build_generator, vae_losses, vanilla_gan_losses, wgan_gp_disc_loss,
    AdversarialSource, Bound, ModelSpec, NetworkKind, VaeBatch, DEFAULT_LAMBDA,
};
use voxgan::nn::layers::{batchnorm, conv2d, conv3d, conv_transpose3d, dense};
use voxgan::nn::{Activation, Mode, Network, Param, RunningStats};
use voxgan::{Graph, Result, RngState, Tensor, Var};

/// Central-difference step.
pub const H: f64 = 1e-5;

/// Per-tensor gradient norms below `ZERO_FLOOR · max(1, ‖∇f‖)` count as zero
/// when forming relative errors; ‖∇f‖ is taken over every checked tensor.
pub const ZERO_FLOOR: f64 = 1e-6;

/// `‖a − b‖ / max(‖a‖, ‖b‖, ZERO_FLOOR)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    rel_err_floor(a, b, ZERO_FLOOR)
}

fn floor_for(grads: &[Tensor]) -> f64 {
    let total: f64 = grads.iter().map(|t| t.norm().powi(2)).sum();
    ZERO_FLOOR * total.sqrt().max(1.0)
}

pub fn rel_err_floor(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(floor)
}

fn bump(t: &Tensor, i: usize, d: f64) -> Tensor {
    let mut data = t.data().to_vec();
    data[i] += d;
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

/// `∂f/∂x` by central differences at the given element indices.
pub fn numeric_grad_at(x: &Tensor, idx: &[usize], f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    idx.iter()
        .map(|&i| (f(&bump(x, i, H)) - f(&bump(x, i, -H))) / (2.0 * H))
        .collect()
}

pub fn numeric_grad(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    let all: Vec<usize> = (0..x.len()).collect();
    numeric_grad_at(x, &all, f)
}

/// Up to `k` distinct element indices of a tensor with `len` elements.
pub fn pick(len: usize, k: usize, rng: &mut RngState) -> Vec<usize> {
    if len <= k {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..k {
        let j = i + rng.below(len - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Worst relative error over `inputs` between the tape gradient of
/// `f(inputs)` and central differences.
pub fn check_inputs(inputs: &[Tensor], f: impl Fn(&Graph, &[Var]) -> Result<Var>) -> f64 {
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&g, &vars).unwrap();
    let grads = g.grad_values(out, &vars).unwrap();
    let floor = floor_for(&grads);
    let eval = |k: usize, x: &Tensor| {
        let g = Graph::new();
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(j, t)| g.param(if j == k { x.clone() } else { t.clone() }))
            .collect();
        g.value(f(&g, &vars).unwrap()).item()
    };
    (0..inputs.len())
        .map(|k| rel_err_floor(grads[k].data(), &numeric_grad(&inputs[k], |x| eval(k, x)), floor))
        .fold(0.0, f64::max)
}

fn with_param(net: &Network, i: usize, value: Tensor) -> Network {
    let mut n = net.clone();
    n.params_mut()[i].value = value;
    n
}

/// Worst per-tensor relative error between tape and central-difference
/// gradients of `loss` with respect to the parameters of `net`, sampling up
/// to `per_param` elements of each parameter tensor.
pub fn check_params(
    net: &Network,
    mode: Mode,
    per_param: usize,
    rng: &mut RngState,
    loss: impl Fn(&Graph, &Bound) -> Result<Var>,
) -> f64 {
    let g = Graph::new();
    let bound = Bound::new(&g, net, true, mode);
    let out = loss(&g, &bound).unwrap();
    let grads = g.grad_values(out, &bound.params).unwrap();
    let floor = floor_for(&grads);
    let mut worst: f64 = 0.0;
    for (i, p) in net.params().iter().enumerate() {
        let idx = pick(p.value.len(), per_param, rng);
        let numeric = numeric_grad_at(&p.value, &idx, |v| {
            let n = with_param(net, i, v.clone());
            let g = Graph::new();
            let b = Bound::new(&g, &n, true, mode);
            g.value(loss(&g, &b).unwrap()).item()
        });
        let analytic: Vec<f64> = idx.iter().map(|&j| grads[i].data()[j]).collect();
        worst = worst.max(rel_err_floor(&analytic, &numeric, floor));
    }
    worst
}

/// Replaces every parameter with `N(0, scale²)` draws so that gradients are
/// well above finite-difference noise.
pub fn randomize(net: &mut Network, scale: f64, rng: &mut RngState) {
    for p in net.params_mut() {
        let shape = p.value.shape().to_vec();
        *p = Param {
            name: p.name.clone(),
            value: rng.sample_normal(&shape).scale(scale),
        };
    }
}

/// Normal draws pushed at least `margin` away from zero, for inputs to kinked functions.
pub fn away_from_zero(shape: &[usize], margin: f64, rng: &mut RngState) -> Tensor {
    rng.sample_normal(shape).map(|v| if v >= 0.0 { v + margin } else { v - margin })
}

fn between(rng: &mut RngState, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// Projects an output onto fixed random weights so every element carries gradient.
fn project(g: &Graph, y: Var, rng: &mut RngState) -> Result<Var> {
    let w = g.constant(rng.sample_normal(&g.shape(y)));
    Ok(g.sum(g.mul(y, w)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerCase {
    Dense,
    Conv3d,
    ConvTranspose3d,
    Conv2d,
    BatchNormTrain,
    BatchNormEval,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    GeneratorNet,
    DiscriminatorNet,
    VoxelEncoderNet,
    ImageEncoderNet,
}

pub const LAYER_CASES: [LayerCase; 14] = [
    LayerCase::Dense,
    LayerCase::Conv3d,
    LayerCase::ConvTranspose3d,
    LayerCase::Conv2d,
    LayerCase::BatchNormTrain,
    LayerCase::BatchNormEval,
    LayerCase::Relu,
    LayerCase::LeakyRelu,
    LayerCase::Tanh,
    LayerCase::Sigmoid,
    LayerCase::GeneratorNet,
    LayerCase::DiscriminatorNet,
    LayerCase::VoxelEncoderNet,
    LayerCase::ImageEncoderNet,
];

fn random_geom(rng: &mut RngState) -> (ConvGeom, usize) {
    let k = between(rng, 1, 3);
    let s = between(rng, 1, 2);
    let p = rng.below(k.min(2));
    let n = between(rng, k.max(2), 5);
    (ConvGeom::cubic(k, s, p), n)
}

fn tiny_spec(kind: NetworkKind, channels: Vec<usize>) -> ModelSpec {
    ModelSpec {
        base: kind,
        resolution: 8,
        latent_dim: 3,
        channels,
    }
}

fn network_case(kind: NetworkKind, rng: &mut RngState) -> (Network, Tensor) {
    let mut net = match kind {
        NetworkKind::Generator => build_generator(&tiny_spec(kind, vec![3, 2, 1]), rng),
        NetworkKind::Discriminator => build_discriminator(&tiny_spec(kind, vec![2, 3]), rng),
        NetworkKind::VoxelEncoder => build_encoder(&tiny_spec(kind, vec![2, 3]), rng),
        NetworkKind::ImageEncoder => build_encoder(&tiny_spec(kind, vec![2, 2, 2, 2]), rng),
    }
    .unwrap();
    randomize(&mut net, 0.3, rng);
    let x = match kind {
        NetworkKind::Generator => rng.sample_normal(&[3, 3]),
        NetworkKind::ImageEncoder => rng.sample_normal(&[2, 1, 8, 8]),
        _ => rng.sample_normal(&[2, 1, 8, 8, 8]),
    };
    (net, x)
}

/// Worst relative gradient error of one randomized layer instance, over its
/// inputs and parameters.
pub fn layer_case_error(case: LayerCase, seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let r = &mut rng;
    match case {
        LayerCase::Dense => {
            let (b, i, o) = (between(r, 1, 4), between(r, 1, 5), between(r, 1, 5));
            let ins = [r.sample_normal(&[b, i]), r.sample_normal(&[i, o]), r.sample_normal(&[o])];
            let proj = r.sample_normal(&[b, o]);
            check_inputs(&ins, |g, v| {
                let y = dense(g, v[0], v[1], Some(v[2]))?;
                Ok(g.sum(g.mul(y, g.constant(proj.clone()))?))
            })
        }
        LayerCase::Conv3d | LayerCase::ConvTranspose3d => {
            let (geom, n) = random_geom(r);
            let (b, ci, co) = (between(r, 1, 2), between(r, 1, 3), between(r, 1, 3));
            let k = geom.kernel[0];
            let ins = if case == LayerCase::Conv3d {
                [r.sample_normal(&[b, ci, n, n, n]), r.sample_normal(&[co, ci, k, k, k]), r.sample_normal(&[co])]
            } else {
                let m = geom.conv_extent([n; 3]).unwrap()[0];
                [r.sample_normal(&[b, ci, m, m, m]), r.sample_normal(&[ci, co, k, k, k]), r.sample_normal(&[co])]
            };
            let seed2 = r.next_u64();
            check_inputs(&ins, |g, v| {
                let y = if case == LayerCase::Conv3d {
                    conv3d(g, v[0], v[1], Some(v[2]), geom)?
                } else {
                    conv_transpose3d(g, v[0], v[1], Some(v[2]), geom)?
                };
                project(g, y, &mut RngState::new(seed2))
            })
        }
        LayerCase::Conv2d => {
            let k = between(r, 1, 3);
            let (s, p) = (between(r, 1, 2), r.below(k.min(2)));
            let n = between(r, k.max(2), 6);
            let (b, ci, co) = (between(r, 1, 2), between(r, 1, 3), between(r, 1, 3));
            let ins = [r.sample_normal(&[b, ci, n, n]), r.sample_normal(&[co, ci, k, k]), r.sample_normal(&[co])];
            let seed2 = r.next_u64();
            check_inputs(&ins, |g, v| {
                let y = conv2d(g, v[0], v[1], Some(v[2]), k, s, p)?;
                project(g, y, &mut RngState::new(seed2))
            })
        }
        LayerCase::BatchNormTrain | LayerCase::BatchNormEval => {
            let (b, c, n) = (between(r, 2, 4), between(r, 1, 3), between(r, 1, 3));
            let ins = [r.sample_normal(&[b, c, n, n, n]), r.sample_normal(&[c]), r.sample_normal(&[c])];
            let running = RunningStats {
                mean: r.sample_normal(&[c]),
                var: r.sample_normal(&[c]).map(|v| 0.5 + v * v),
            };
            let mode = if case == LayerCase::BatchNormTrain { Mode::Train } else { Mode::Eval };
            let seed2 = r.next_u64();
            check_inputs(&ins, |g, v| {
                let (y, _) = batchnorm(g, v[0], v[1], v[2], mode, &running, 1e-5)?;
                project(g, y, &mut RngState::new(seed2))
            })
        }
        LayerCase::Relu | LayerCase::LeakyRelu | LayerCase::Tanh | LayerCase::Sigmoid => {
            let act = match case {
                LayerCase::Relu => Activation::Relu,
                LayerCase::LeakyRelu => Activation::LeakyRelu(0.2),
                LayerCase::Tanh => Activation::Tanh,
                _ => Activation::Sigmoid,
            };
            let len = between(r, 1, 12);
            let ins = [away_from_zero(&[len], 1e-3, r)];
            let seed2 = r.next_u64();
            check_inputs(&ins, |g, v| project(g, act.apply(g, v[0]), &mut RngState::new(seed2)))
        }
        LayerCase::GeneratorNet | LayerCase::DiscriminatorNet | LayerCase::VoxelEncoderNet | LayerCase::ImageEncoderNet => {
            let kind = match case {
                LayerCase::GeneratorNet => NetworkKind::Generator,
                LayerCase::DiscriminatorNet => NetworkKind::Discriminator,
                LayerCase::VoxelEncoderNet => NetworkKind::VoxelEncoder,
                _ => NetworkKind::ImageEncoder,
            };
            let (net, x) = network_case(kind, r);
            let seed2 = r.next_u64();
            let input_err = check_inputs(std::slice::from_ref(&x), |g, v| {
                let f = net.forward(g, &net.bind(g, false), v[0], Mode::Train)?;
                project(g, f.output, &mut RngState::new(seed2))
            });
            let param_err = check_params(&net, Mode::Train, 6, r, |g, b| {
                let x = g.constant(x.clone());
                let (y, _) = b.apply(g, x)?;
                project(g, y, &mut RngState::new(seed2))
            });
            input_err.max(param_err)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossCase {
    /// Minimax critic loss w.r.t. the critic.
    VanillaDisc,
    /// Minimax generator loss w.r.t. the generator.
    VanillaGen,
    /// Gradient-penalty critic loss w.r.t. the critic.
    WganGpDisc,
    /// Reconstruction plus KL w.r.t. the encoder.
    VaeEncoder,
    /// Adversarial plus weighted reconstruction w.r.t. the generator.
    VaeGenerator,
}

pub const LOSS_CASES: [LossCase; 5] = [
    LossCase::VanillaDisc,
    LossCase::VanillaGen,
    LossCase::WganGpDisc,
    LossCase::VaeEncoder,
    LossCase::VaeGenerator,
];

pub struct Trio {
    pub generator: Network,
    pub discriminator: Network,
    pub encoder: Network,
}

pub fn trio(rng: &mut RngState) -> Trio {
    let (generator, _) = network_case(NetworkKind::Generator, rng);
    let (discriminator, _) = network_case(NetworkKind::Discriminator, rng);
    let (encoder, _) = network_case(NetworkKind::VoxelEncoder, rng);
    Trio {
        generator,
        discriminator,
        encoder,
    }
}

fn signed_grids(b: usize, rng: &mut RngState) -> Tensor {
    rng.sample_uniform(&[b, 1, 8, 8, 8]).map(|u| if u < 0.3 { 1.0 } else { -1.0 })
}

/// Worst relative gradient error of one objective at a random point, sampling
/// `per_param` elements of each parameter tensor.
pub fn loss_case_error(case: LossCase, seed: u64, per_param: usize) -> f64 {
    let mut rng = RngState::new(seed);
    let t = trio(&mut rng);
    let b = 2;
    let real = signed_grids(b, &mut rng);
    let z = rng.sample_normal(&[b, 3]);
    let prior = rng.sample_normal(&[b, 3]);
    let eta = rng.sample_normal(&[b, 3]);
    let cond = signed_grids(b, &mut rng);
    let eps_seed = rng.next_u64();
    let r = &mut rng;
    match case {
        LossCase::VanillaDisc => check_params(&t.discriminator, Mode::Train, per_param, r, |g, d| {
            let gen = Bound::new(g, &t.generator, false, Mode::Train);
            let l = vanilla_gan_losses(g, d, &gen, g.constant(real.clone()), g.constant(z.clone()))?;
            Ok(l.disc)
        }),
        LossCase::VanillaGen => check_params(&t.generator, Mode::Train, per_param, r, |g, gen| {
            let d = Bound::new(g, &t.discriminator, false, Mode::Train);
            let l = vanilla_gan_losses(g, &d, gen, g.constant(real.clone()), g.constant(z.clone()))?;
            Ok(l.gen)
        }),
        LossCase::WganGpDisc => {
            let fake = t.generator.infer(&z, Mode::Train).unwrap().0;
            check_params(&t.discriminator, Mode::Train, per_param, r, |g, d| {
                let l = wgan_gp_disc_loss(
                    g,
                    d,
                    g.constant(real.clone()),
                    g.constant(fake.clone()),
                    &mut RngState::new(eps_seed),
                    DEFAULT_LAMBDA,
                )?;
                Ok(l.loss)
            })
        }
        LossCase::VaeEncoder | LossCase::VaeGenerator => {
            let batch = |g: &Graph| VaeBatch {
                condition: g.constant(cond.clone()),
                target: g.constant(real.clone()),
                eta: g.constant(eta.clone()),
                prior: g.constant(prior.clone()),
            };
            if case == LossCase::VaeEncoder {
                check_params(&t.encoder, Mode::Train, per_param, r, |g, e| {
                    let gen = Bound::new(g, &t.generator, false, Mode::Train);
                    let d = Bound::new(g, &t.discriminator, false, Mode::Train);
                    Ok(vae_losses(g, e, &gen, &d, &batch(g), 100.0, AdversarialSource::Prior)?.encoder)
                })
            } else {
                check_params(&t.generator, Mode::Train, per_param, r, |g, gen| {
                    let e = Bound::new(g, &t.encoder, false, Mode::Train);
                    let d = Bound::new(g, &t.discriminator, false, Mode::Train);
                    Ok(vae_losses(g, &e, gen, &d, &batch(g), 100.0, AdversarialSource::Prior)?.generator)
                })
            }
        }
    }
}
