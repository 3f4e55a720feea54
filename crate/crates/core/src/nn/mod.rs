//! Neural-network building blocks.

pub mod layers;
pub mod network;

pub use layers::{Activation, BatchStats, Mode, RunningStats};
pub use network::{Forward, Layer, Network, Param};
