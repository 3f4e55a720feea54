//! Seeded random streams.
//!
//! All randomness flows through [`RngState`], a ChaCha8 counter-based generator
//! whose full position can be captured and restored for checkpointing.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{numel, Tensor};

pub const ALGORITHM: &str = "chacha8";

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    rng: ChaCha8Rng,
}

/// Equal when both would produce the same future stream.
impl PartialEq for RngState {
    fn eq(&self, other: &Self) -> bool {
        self.snapshot() == other.snapshot()
    }
}

impl Eq for RngState {}

/// Serializable snapshot of an [`RngState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSnapshot {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream derived deterministically from the master seed.
    pub fn split(&self, stream: u64) -> RngState {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream.wrapping_add(1));
        RngState {
            seed: self.seed,
            rng,
        }
    }

    pub fn snapshot(&self) -> RngSnapshot {
        RngSnapshot {
            seed: self.seed,
            stream: self.rng.get_stream(),
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn restore(s: RngSnapshot) -> RngState {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(s.stream);
        rng.set_word_pos(s.word_pos);
        RngState { seed: s.seed, rng }
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn sample_normal(&mut self, shape: &[usize]) -> Tensor {
        let data = (0..numel(shape)).map(|_| self.normal()).collect();
        Tensor::from_parts(shape.to_vec(), data)
    }

    pub fn sample_uniform(&mut self, shape: &[usize]) -> Tensor {
        let data = (0..numel(shape)).map(|_| self.uniform()).collect();
        Tensor::from_parts(shape.to_vec(), data)
    }

    /// Normal samples restricted to two standard deviations, scaled by `std`.
    pub fn sample_truncated_normal(&mut self, shape: &[usize], std: f64) -> Tensor {
        let data = (0..numel(shape))
            .map(|_| loop {
                let x = self.normal();
                if x.abs() <= 2.0 {
                    break x * std;
                }
            })
            .collect();
        Tensor::from_parts(shape.to_vec(), data)
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }
}
