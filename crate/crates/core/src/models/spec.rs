//! Declarative network descriptions and the builders that realize them.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels::ConvGeom;
use crate::nn::layers::LEAKY_SLOPE;
use crate::nn::{Activation, Layer, Network};
use crate::rng::RngState;

pub const SUPPORTED_RESOLUTIONS: [usize; 4] = [8, 16, 20, 32];
pub const DEFAULT_LATENT_DIM: usize = 200;

/// Channel schedules at full scale; smaller grids use a suffix/prefix of these.
const GENERATOR_CHANNELS: [usize; 4] = [256, 128, 64, 32];
const DISCRIMINATOR_CHANNELS: [usize; 4] = [32, 64, 128, 256];
const IMAGE_ENCODER_CHANNELS: [usize; 4] = [64, 128, 256, 512];

pub const VOXEL_KERNEL: usize = 4;
pub const IMAGE_KERNEL: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkKind {
    Generator,
    Discriminator,
    ImageEncoder,
    VoxelEncoder,
}

impl NetworkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkKind::Generator => "generator",
            NetworkKind::Discriminator => "discriminator",
            NetworkKind::ImageEncoder => "image-encoder",
            NetworkKind::VoxelEncoder => "voxel-encoder",
        }
    }

    pub fn is_encoder(self) -> bool {
        matches!(self, NetworkKind::ImageEncoder | NetworkKind::VoxelEncoder)
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NetworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "generator" => NetworkKind::Generator,
            "discriminator" => NetworkKind::Discriminator,
            "image-encoder" => NetworkKind::ImageEncoder,
            "voxel-encoder" => NetworkKind::VoxelEncoder,
            other => return Err(Error::InvalidArgument(format!("unknown network kind `{other}`"))),
        })
    }
}

/// Shape of one network.
///
/// `channels` means, per kind:
/// * generator: the channel count reshaped from the first dense layer, then
///   the output of each transposed convolution (the last is always 1);
/// * discriminator / voxel encoder: the output of each strided convolution;
/// * image encoder: the output of each planar convolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub base: NetworkKind,
    pub resolution: usize,
    pub latent_dim: usize,
    pub channels: Vec<usize>,
}

/// Number of stride-2 stages for a grid resolution and the extent they start from.
fn stages(resolution: usize) -> Result<(usize, usize)> {
    match resolution {
        32 => Ok((4, 2)),
        16 => Ok((3, 2)),
        8 => Ok((2, 2)),
        20 => Ok((2, 5)),
        r => Err(Error::Model(format!(
            "unsupported resolution {r}; expected one of {SUPPORTED_RESOLUTIONS:?}"
        ))),
    }
}

fn halve_small(resolution: usize, c: usize) -> usize {
    if resolution <= 16 {
        (c / 2).max(1)
    } else {
        c
    }
}

impl ModelSpec {
    /// Default schedule for `base` at `resolution`.
    pub fn standard(base: NetworkKind, resolution: usize, latent_dim: usize) -> Result<Self> {
        let (n, _) = stages(resolution)?;
        let channels: Vec<usize> = match base {
            NetworkKind::Generator => GENERATOR_CHANNELS[4 - n..]
                .iter()
                .map(|&c| halve_small(resolution, c))
                .chain(std::iter::once(1))
                .collect(),
            NetworkKind::Discriminator | NetworkKind::VoxelEncoder => DISCRIMINATOR_CHANNELS[..n]
                .iter()
                .map(|&c| halve_small(resolution, c))
                .collect(),
            NetworkKind::ImageEncoder => IMAGE_ENCODER_CHANNELS
                .iter()
                .map(|&c| halve_small(resolution, c))
                .collect(),
        };
        let spec = ModelSpec {
            base,
            resolution,
            latent_dim,
            channels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn encoder_output_dim(&self) -> usize {
        2 * self.latent_dim
    }

    /// Extent of the grid reshaped from the generator's dense layer.
    pub fn start_extent(&self) -> Result<usize> {
        let deconvs = self.channels.len().saturating_sub(1);
        let scale = 1usize << deconvs;
        if deconvs == 0 || !self.resolution.is_multiple_of(scale) {
            return Err(Error::Model(format!(
                "{} deconvolution stages cannot reach resolution {}",
                deconvs, self.resolution
            )));
        }
        Ok(self.resolution / scale)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Model("latent dimension must be positive".into()));
        }
        if self.channels.contains(&0) || self.channels.is_empty() {
            return Err(Error::Model(format!("invalid channel schedule {:?}", self.channels)));
        }
        match self.base {
            NetworkKind::Generator => {
                if *self.channels.last().unwrap() != 1 {
                    return Err(Error::Model("generator schedule must end in 1 channel".into()));
                }
                let start = self.start_extent()?;
                let deconvs = self.channels.len() - 1;
                if start << deconvs != self.resolution {
                    return Err(Error::Model("inconsistent generator schedule".into()));
                }
            }
            NetworkKind::Discriminator | NetworkKind::VoxelEncoder => {
                let mut extent = self.resolution;
                for _ in &self.channels {
                    if !extent.is_multiple_of(2) || extent < 2 {
                        return Err(Error::Model(format!(
                            "convolution stage input extent {extent} is not even (schedule {:?} at {})",
                            self.channels, self.resolution
                        )));
                    }
                    extent /= 2;
                }
            }
            NetworkKind::ImageEncoder => {}
        }
        Ok(())
    }
}

fn voxel_geom() -> ConvGeom {
    ConvGeom::cubic(VOXEL_KERNEL, 2, 1)
}

/// `z → dense → reshape → (deconv, batch norm, ReLU)* → deconv → tanh`.
pub fn build_generator(spec: &ModelSpec, rng: &mut RngState) -> Result<Network> {
    if spec.base != NetworkKind::Generator {
        return Err(Error::Model(format!("expected generator spec, got {}", spec.base)));
    }
    spec.validate()?;
    let s = spec.start_extent()?;
    let c0 = spec.channels[0];
    let mut layers = vec![
        Layer::Dense {
            input: spec.latent_dim,
            output: c0 * s * s * s,
        },
        Layer::Reshape(vec![c0, s, s, s]),
    ];
    let stages = spec.channels.len() - 1;
    for i in 0..stages {
        let (cin, cout) = (spec.channels[i], spec.channels[i + 1]);
        layers.push(Layer::ConvTranspose3d {
            input: cin,
            output: cout,
            geom: voxel_geom(),
        });
        if i + 1 < stages {
            layers.push(Layer::BatchNorm { channels: cout });
            layers.push(Layer::Act(Activation::Relu));
        } else {
            layers.push(Layer::Act(Activation::Tanh));
        }
    }
    Ok(Network::new(layers, rng))
}

fn conv_trunk(spec: &ModelSpec, readout: usize) -> Vec<Layer> {
    let mut layers = Vec::new();
    let mut cin = 1;
    let mut extent = spec.resolution;
    for &c in &spec.channels {
        layers.push(Layer::Conv3d {
            input: cin,
            output: c,
            geom: voxel_geom(),
        });
        layers.push(Layer::Act(Activation::LeakyRelu(LEAKY_SLOPE)));
        cin = c;
        extent /= 2;
    }
    layers.push(Layer::Flatten);
    layers.push(Layer::Dense {
        input: cin * extent * extent * extent,
        output: readout,
    });
    layers
}

/// `voxels → (conv, leaky ReLU)* → flatten → dense(1)`; no batch norm and a linear read-out.
pub fn build_discriminator(spec: &ModelSpec, rng: &mut RngState) -> Result<Network> {
    if spec.base != NetworkKind::Discriminator {
        return Err(Error::Model(format!("expected discriminator spec, got {}", spec.base)));
    }
    spec.validate()?;
    Ok(Network::new(conv_trunk(spec, 1), rng))
}

/// Encoder emitting `2 × latent_dim` values: means followed by log-variances.
pub fn build_encoder(spec: &ModelSpec, rng: &mut RngState) -> Result<Network> {
    spec.validate()?;
    let out = spec.encoder_output_dim();
    let layers = match spec.base {
        NetworkKind::VoxelEncoder => conv_trunk(spec, out),
        NetworkKind::ImageEncoder => {
            let mut layers = Vec::new();
            let mut cin = 1;
            let mut extent = spec.resolution;
            for &c in &spec.channels {
                layers.push(Layer::Conv2d {
                    input: cin,
                    output: c,
                    kernel: IMAGE_KERNEL,
                    stride: 2,
                    pad: 2,
                });
                layers.push(Layer::Act(Activation::LeakyRelu(LEAKY_SLOPE)));
                cin = c;
                extent = extent.div_ceil(2);
            }
            layers.push(Layer::Flatten);
            layers.push(Layer::Dense {
                input: cin * extent * extent,
                output: out,
            });
            layers
        }
        other => return Err(Error::Model(format!("{other} is not an encoder base"))),
    };
    Ok(Network::new(layers, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use crate::tensor::Tensor;

    #[test]
    fn standard_schedules() {
        let g = ModelSpec::standard(NetworkKind::Generator, 32, 200).unwrap();
        assert_eq!(g.channels, vec![256, 128, 64, 32, 1]);
        assert_eq!(g.start_extent().unwrap(), 2);
        let d = ModelSpec::standard(NetworkKind::Discriminator, 32, 200).unwrap();
        assert_eq!(d.channels, vec![32, 64, 128, 256]);
        let g8 = ModelSpec::standard(NetworkKind::Generator, 8, 16).unwrap();
        assert_eq!(g8.channels, vec![32, 16, 1]);
        let g20 = ModelSpec::standard(NetworkKind::Generator, 20, 200).unwrap();
        assert_eq!(g20.start_extent().unwrap(), 5);
        assert_eq!(g.encoder_output_dim(), 400);
    }

    #[test]
    fn paper_scale_generator_layout() {
        let spec = ModelSpec::standard(NetworkKind::Generator, 32, 200).unwrap();
        let net = build_generator(&spec, &mut RngState::new(0)).unwrap();
        assert_eq!(net.layers()[0], Layer::Dense { input: 200, output: 2048 });
        assert_eq!(net.layers()[1], Layer::Reshape(vec![256, 2, 2, 2]));
        let deconvs = net.layers().iter().filter(|l| matches!(l, Layer::ConvTranspose3d { .. })).count();
        assert_eq!(deconvs, 4);
        assert_eq!(net.batchnorm_count(), 3);
        assert_eq!(net.layers().last(), Some(&Layer::Act(Activation::Tanh)));
    }

    #[test]
    fn inconsistent_schedules_rejected() {
        let bad = ModelSpec {
            base: NetworkKind::Generator,
            resolution: 32,
            latent_dim: 8,
            channels: vec![16, 8, 1],
        };
        // two deconvs from 8³ is fine; make it end wrongly instead
        assert!(bad.validate().is_ok());
        let bad = ModelSpec { channels: vec![16, 8, 2], ..bad };
        assert!(build_generator(&bad, &mut RngState::new(0)).is_err());
        let odd = ModelSpec {
            base: NetworkKind::Discriminator,
            resolution: 20,
            latent_dim: 8,
            channels: vec![4, 4, 4],
        };
        assert!(build_discriminator(&odd, &mut RngState::new(0)).is_err());
        let wrong = ModelSpec::standard(NetworkKind::Generator, 8, 4).unwrap();
        assert!(build_encoder(&wrong, &mut RngState::new(0)).is_err());
        assert!(ModelSpec::standard(NetworkKind::Generator, 12, 4).is_err());
    }

    #[test]
    fn small_generator_output_shape_and_range() {
        for res in [8, 20] {
            let spec = ModelSpec {
                base: NetworkKind::Generator,
                resolution: res,
                latent_dim: 6,
                channels: vec![4, 2, 1],
            };
            let net = build_generator(&spec, &mut RngState::new(1)).unwrap();
            let z = RngState::new(2).sample_normal(&[3, 6]);
            let (y, _) = net.infer(&z, Mode::Train).unwrap();
            assert_eq!(y.shape(), &[3, 1, res, res, res]);
            assert!(y.data().iter().all(|&v| v > -1.0 && v < 1.0));
        }
    }

    #[test]
    fn discriminator_is_batchnorm_free_and_linear() {
        let spec = ModelSpec::standard(NetworkKind::Discriminator, 8, 4).unwrap();
        let mut net = build_discriminator(&spec, &mut RngState::new(3)).unwrap();
        assert_eq!(net.batchnorm_count(), 0);
        assert!(matches!(net.layers().last(), Some(Layer::Dense { output: 1, .. })));
        let x = RngState::new(4).sample_normal(&[2, 1, 8, 8, 8]);
        let (y1, _) = net.infer(&x, Mode::Train).unwrap();
        assert_eq!(y1.shape(), &[2, 1]);
        let n = net.params().len();
        let w = &mut net.params_mut()[n - 2].value;
        *w = w.scale(2.0);
        let (y2, _) = net.infer(&x, Mode::Train).unwrap();
        assert_eq!(y2, y1.scale(2.0));
    }

    #[test]
    fn encoders_emit_twice_latent() {
        let spec = ModelSpec {
            base: NetworkKind::VoxelEncoder,
            resolution: 8,
            latent_dim: 5,
            channels: vec![2, 3],
        };
        let net = build_encoder(&spec, &mut RngState::new(5)).unwrap();
        let (y, _) = net.infer(&Tensor::zeros(vec![2, 1, 8, 8, 8]), Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[2, 10]);
        let spec = ModelSpec {
            base: NetworkKind::ImageEncoder,
            resolution: 8,
            latent_dim: 5,
            channels: vec![2, 2, 2, 2],
        };
        let net = build_encoder(&spec, &mut RngState::new(5)).unwrap();
        let convs = net.layers().iter().filter(|l| matches!(l, Layer::Conv2d { .. })).count();
        assert_eq!(convs + 1, 5);
        let (y, _) = net.infer(&Tensor::zeros(vec![2, 1, 8, 8]), Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[2, 10]);
    }
}
