//! Spiking patch splitting: stacked conv -> BN -> LIF -> max-pool stages that
//! turn a `[T, B, C, H, W]` input into `N` patch tokens of width `D`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{lif_forward, LifConfig};
use crate::nn::{join, BatchNorm, Conv2d, Module, Slot};
use crate::tensor::{BnMode, Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpsConfig {
    pub stages: usize,
    pub in_channels: usize,
    pub embed_dim: usize,
    /// Input `[height, width]`.
    pub input_hw: [usize; 2],
}

impl SpsConfig {
    pub const KERNEL: usize = 3;
    pub const POOL: usize = 2;

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 || self.in_channels == 0 || self.embed_dim == 0 {
            return Err(Error::Config("sps stages, in_channels and embed_dim must be positive".into()));
        }
        let div = 1usize << self.stages;
        if self.input_hw[0] % div != 0 || self.input_hw[1] % div != 0 || self.input_hw.contains(&0) {
            return Err(Error::Config(format!(
                "sps input {:?} must be divisible by 2^{} = {div}",
                self.input_hw, self.stages
            )));
        }
        if self.embed_dim % (1 << (self.stages - 1)) != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} must be divisible by 2^{} for the channel schedule",
                self.embed_dim,
                self.stages - 1
            )));
        }
        Ok(())
    }

    /// Output channels of each stage; doubling up to `embed_dim`.
    pub fn channels(&self) -> Vec<usize> {
        (0..self.stages).map(|i| self.embed_dim >> (self.stages - 1 - i)).collect()
    }

    pub fn grid(&self) -> [usize; 2] {
        [self.input_hw[0] >> self.stages, self.input_hw[1] >> self.stages]
    }

    pub fn patches(&self) -> usize {
        let [h, w] = self.grid();
        h * w
    }
}

pub struct Sps<F: Float> {
    pub cfg: SpsConfig,
    lif: LifConfig,
    convs: Vec<Conv2d<F>>,
    bns: Vec<BatchNorm<F>>,
}

impl<F: Float> Sps<F> {
    pub fn new(cfg: SpsConfig, lif: LifConfig, seed: u64, path: &str) -> Result<Self> {
        cfg.validate()?;
        let mut convs = Vec::new();
        let mut bns = Vec::new();
        let mut c_in = cfg.in_channels;
        for (i, c_out) in cfg.channels().into_iter().enumerate() {
            convs.push(Conv2d::new(seed, &join(path, &format!("conv{i}")), c_in, c_out, SpsConfig::KERNEL, 1, 1));
            bns.push(BatchNorm::new(c_out, 1));
            c_in = c_out;
        }
        Ok(Self { cfg, lif, convs, bns })
    }

    /// `[T, B, C, H, W]` to `[T, B, N, D]` spikes.
    pub fn forward(&self, x: &Tensor<F>, mode: BnMode) -> Result<Tensor<F>> {
        let s = x.shape();
        let [h, w] = self.cfg.input_hw;
        if s.len() != 5 || s[2] != self.cfg.in_channels || s[3] != h || s[4] != w {
            return Err(Error::shape("sps_forward", s, &[0, 0, self.cfg.in_channels, h, w]));
        }
        let (t, b) = (s[0], s[1]);
        let mut cur = x.reshape(&[t * b, s[2], h, w])?;
        for (conv, bn) in self.convs.iter().zip(&self.bns) {
            let y = bn.forward(&conv.forward(&cur)?, mode)?;
            let shape = y.shape().to_vec();
            let spikes = lif_forward(&y.reshape(&[t, y.numel() / t])?, &self.lif)?;
            cur = spikes.reshape(&shape)?.maxpool2d(SpsConfig::POOL, SpsConfig::POOL)?;
        }
        let d = self.cfg.embed_dim;
        let n = self.cfg.patches();
        cur.reshape(&[t, b, d, n])?.permute(&[0, 1, 3, 2])
    }
}

impl<F: Float> Module<F> for Sps<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        for (i, (c, bn)) in self.convs.iter().zip(&self.bns).enumerate() {
            c.visit(&join(prefix, &format!("conv{i}")), f);
            bn.visit(&join(prefix, &format!("bn{i}")), f);
        }
    }
}
