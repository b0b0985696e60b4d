//! Multimodal spiking transformer with cross-modal residual attention.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoding;
pub mod error;
pub mod losses;
pub mod model;
pub mod neuron;
pub mod nn;
pub mod optim;
pub mod report;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Float, SpikeTensor, Tensor};
