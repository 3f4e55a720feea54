//! Wasserstein GANs with gradient penalty over 3D voxel occupancy grids.
//!
//! The crate carries its own tensor and reverse-mode autodiff engine (with
//! double backward for the gradient penalty), 3D convolutional layers, Adam,
//! the generator/discriminator/encoder builders and losses, training loops for
//! the plain and VAE-conditioned regimes, voxel I/O and synthetic depth scans,
//! and evaluation metrics.

pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kernels;
pub mod models;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod voxel;

pub use error::{Error, Result};
pub use graph::{GradOptions, Graph, Var};
pub use rng::RngState;
pub use tensor::Tensor;
