//! Parameterized layers and the parameter-visiting plumbing shared by the
//! model, optimizer, and checkpoints.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{BnMode, Float, RunningStats, Tensor};

/// A named storage slot reachable from a module.
pub enum Slot<'a, F: Float> {
    Param(&'a Tensor<F>),
    Buffer(&'a RefCell<RunningStats<F>>),
}

pub trait Module<F: Float> {
    /// Calls `f` for every parameter and buffer, in a fixed order, with its
    /// dotted path under `prefix`.
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>));
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn named_parameters<F: Float, M: Module<F> + ?Sized>(m: &M) -> Vec<(String, Tensor<F>)> {
    let mut out = Vec::new();
    m.visit("", &mut |name, slot| {
        if let Slot::Param(t) = slot {
            out.push((name.to_string(), t.clone()));
        }
    });
    out
}

pub fn parameter_count<F: Float, M: Module<F> + ?Sized>(m: &M) -> usize {
    named_parameters(m).iter().map(|(_, t)| t.numel()).sum()
}

/// Deterministic generator for the parameters living under `path`.
///
/// Keying the stream by path keeps a layer's initial weights independent of
/// which other layers the model happens to contain.
pub fn layer_rng(seed: u64, path: &str) -> ChaCha8Rng {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in path.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h.rotate_left(17))
}

fn uniform<F: Float>(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<F> {
    (0..n).map(|_| F::c(rng.gen_range(-bound..bound))).collect()
}

/// `y = x @ W (+ b)` over the last axis.
pub struct Linear<F: Float> {
    pub weight: Tensor<F>,
    pub bias: Option<Tensor<F>>,
}

impl<F: Float> Linear<F> {
    pub fn new(seed: u64, path: &str, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        let mut rng = layer_rng(seed, path);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Tensor::param(&[fan_in, fan_out], uniform(&mut rng, fan_in * fan_out, bound)).expect("shape");
        let bias = bias.then(|| Tensor::param(&[fan_out], vec![F::zero(); fan_out]).expect("shape"));
        Self { weight, bias }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let y = x.matmul(&self.weight)?;
        match &self.bias {
            Some(b) => y.add(b),
            None => Ok(y),
        }
    }
}

impl<F: Float> Module<F> for Linear<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        f(&join(prefix, "weight"), Slot::Param(&self.weight));
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), Slot::Param(b));
        }
    }
}

pub struct BatchNorm<F: Float> {
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    pub stats: RefCell<RunningStats<F>>,
    channel_axis: usize,
}

impl<F: Float> BatchNorm<F> {
    pub fn new(channels: usize, channel_axis: usize) -> Self {
        Self {
            gamma: Tensor::param(&[channels], vec![F::one(); channels]).expect("shape"),
            beta: Tensor::param(&[channels], vec![F::zero(); channels]).expect("shape"),
            stats: RefCell::new(RunningStats::new(channels)),
            channel_axis,
        }
    }

    /// Normalizes over the last axis, pooling every leading axis.
    pub fn features(channels: usize) -> Self {
        Self::new(channels, usize::MAX)
    }

    pub fn forward(&self, x: &Tensor<F>, mode: BnMode) -> Result<Tensor<F>> {
        let axis = if self.channel_axis == usize::MAX {
            x.rank().saturating_sub(1)
        } else {
            self.channel_axis
        };
        x.batch_norm(&self.gamma, &self.beta, &mut self.stats.borrow_mut(), mode, axis)
    }
}

impl<F: Float> Module<F> for BatchNorm<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        f(&join(prefix, "gamma"), Slot::Param(&self.gamma));
        f(&join(prefix, "beta"), Slot::Param(&self.beta));
        f(&join(prefix, "running"), Slot::Buffer(&self.stats));
    }
}

/// Bias-free square convolution; a batch norm always follows it.
pub struct Conv2d<F: Float> {
    pub weight: Tensor<F>,
    pub stride: usize,
    pub pad: usize,
}

impl<F: Float> Conv2d<F> {
    pub fn new(seed: u64, path: &str, c_in: usize, c_out: usize, k: usize, stride: usize, pad: usize) -> Self {
        let mut rng = layer_rng(seed, path);
        let fan_in = c_in * k * k;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Tensor::param(&[c_out, c_in, k, k], uniform(&mut rng, c_out * fan_in, bound)).expect("shape");
        Self { weight, stride, pad }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        x.conv2d(&self.weight, None, self.stride, self.pad)
    }
}

impl<F: Float> Module<F> for Conv2d<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        f(&join(prefix, "weight"), Slot::Param(&self.weight));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_rng_depends_on_path_and_seed() {
        let a: u64 = layer_rng(1, "a.b").gen();
        let b: u64 = layer_rng(1, "a.c").gen();
        let c: u64 = layer_rng(2, "a.b").gen();
        let d: u64 = layer_rng(1, "a.b").gen();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, d);
    }

    #[test]
    fn linear_visits_in_order() {
        let l = Linear::<f32>::new(0, "l", 3, 2, true);
        let names: Vec<String> = named_parameters(&l).into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["weight", "bias"]);
        assert_eq!(parameter_count(&l), 8);
    }

    #[test]
    fn feature_batchnorm_uses_last_axis() {
        let bn = BatchNorm::<f64>::features(2);
        let x = Tensor::from_f64(&[2, 2, 2], &[1.0, 10.0, 3.0, 30.0, 5.0, 50.0, 7.0, 70.0]).unwrap();
        let y = bn.forward(&x, BnMode::Train).unwrap().to_vec();
        // channel 0 holds {1,3,5,7}; channel 1 is that scaled by 10, same z-scores up to eps
        for i in 0..4 {
            assert!((y[2 * i] - y[2 * i + 1]).abs() < 1e-5);
        }
    }
}
