//! Spiking self-attention and cross-modal complementary spatiotemporal
//! attention.
//!
//! All activations are `[T, B, N, D]`. Queries, keys and values are spike maps
//! `SN(BN(x W))`; the attention map `Q K^T V * s` is re-spiked, projected,
//! normalized and spiked again, so the output keeps the input's shape.
//! Spatial attention mixes the `N` patches of each time step; temporal
//! attention mixes the `T` steps of each patch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{lif_forward, LifConfig};
use crate::nn::{join, BatchNorm, Linear, Module, Slot};
use crate::tensor::{BnMode, Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionConfig {
    pub scale: f64,
    pub heads: usize,
    pub embed_dim: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            scale: 0.125,
            heads: 1,
            embed_dim: 64,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) {
            return Err(Error::Config("attention scale must be positive".into()));
        }
        if self.heads == 0 || self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} must be a positive multiple of heads {}",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub alpha: f64,
    pub depth: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { alpha: 1.5, depth: 2 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be >= 1".into()));
        }
        Ok(())
    }
}

/// Axis the attention map is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqAxis {
    /// `N x N` map per (t, b).
    Spatial,
    /// `T x T` map per (b, n).
    Temporal,
}

/// Intermediate tensors of one attention pass.
pub struct AttentionTrace<F: Float> {
    pub q: Tensor<F>,
    pub k: Tensor<F>,
    pub v: Tensor<F>,
    /// `Q K^T V * s` before the spiking neuron, `[T, B, N, D]`.
    pub scores: Tensor<F>,
    pub out: Tensor<F>,
}

/// Parameters of one spiking attention unit.
pub struct SpikingAttention<F: Float> {
    pub cfg: AttentionConfig,
    lif: LifConfig,
    q: Linear<F>,
    k: Linear<F>,
    v: Linear<F>,
    bn_q: BatchNorm<F>,
    bn_k: BatchNorm<F>,
    bn_v: BatchNorm<F>,
    proj: Linear<F>,
    bn_o: BatchNorm<F>,
}

fn check_tbnd(op: &'static str, x: &[usize], d: usize) -> Result<()> {
    if x.len() != 4 || x[3] != d {
        return Err(Error::shape(op, x, &[0, 0, 0, d]));
    }
    Ok(())
}

/// Spiking neuron over the leading time axis of any activation.
pub(crate) fn spike<F: Float>(x: &Tensor<F>, lif: &LifConfig) -> Result<Tensor<F>> {
    let shape = x.shape().to_vec();
    let t = shape[0];
    lif_forward(&x.reshape(&[t, x.numel() / t])?, lif)?.reshape(&shape)
}

impl<F: Float> SpikingAttention<F> {
    pub fn new(cfg: AttentionConfig, lif: LifConfig, seed: u64, path: &str) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let lin = |name: &str| Linear::new(seed, &join(path, name), d, d, false);
        Ok(Self {
            cfg,
            lif,
            q: lin("q"),
            k: lin("k"),
            v: lin("v"),
            bn_q: BatchNorm::features(d),
            bn_k: BatchNorm::features(d),
            bn_v: BatchNorm::features(d),
            proj: lin("proj"),
            bn_o: BatchNorm::features(d),
        })
    }

    fn project(&self, x: &Tensor<F>, lin: &Linear<F>, bn: &BatchNorm<F>, mode: BnMode) -> Result<Tensor<F>> {
        spike(&bn.forward(&lin.forward(x)?, mode)?, &self.lif)
    }

    /// `[T, B, N, D]` to `[.., heads, L, D/heads]` with the attended axis at `L`.
    fn split(&self, x: &Tensor<F>, axis: SeqAxis) -> Result<Tensor<F>> {
        let s = x.shape();
        let (h, dh) = (self.cfg.heads, self.cfg.embed_dim / self.cfg.heads);
        let x = x.reshape(&[s[0], s[1], s[2], h, dh])?;
        match axis {
            SeqAxis::Spatial => x.permute(&[0, 1, 3, 2, 4]),
            SeqAxis::Temporal => x.permute(&[1, 2, 3, 0, 4]),
        }
    }

    fn merge(&self, x: &Tensor<F>, axis: SeqAxis, shape: &[usize]) -> Result<Tensor<F>> {
        let y = match axis {
            SeqAxis::Spatial => x.permute(&[0, 1, 3, 2, 4])?,
            SeqAxis::Temporal => x.permute(&[3, 0, 1, 2, 4])?,
        };
        y.reshape(shape)
    }

    /// Queries from `x_q`, keys and values from `x_kv`.
    pub fn trace(&self, x_q: &Tensor<F>, x_kv: &Tensor<F>, axis: SeqAxis, mode: BnMode) -> Result<AttentionTrace<F>> {
        check_tbnd("cross_ssa", x_q.shape(), self.cfg.embed_dim)?;
        if x_q.shape() != x_kv.shape() {
            return Err(Error::shape("cross_ssa", x_q.shape(), x_kv.shape()));
        }
        let shape = x_q.shape().to_vec();
        let q = self.project(x_q, &self.q, &self.bn_q, mode)?;
        let k = self.project(x_kv, &self.k, &self.bn_k, mode)?;
        let v = self.project(x_kv, &self.v, &self.bn_v, mode)?;
        let (qs, ks, vs) = (self.split(&q, axis)?, self.split(&k, axis)?, self.split(&v, axis)?);
        let kt = ks.transpose(3, 4)?;
        let scores = qs.matmul(&kt)?.matmul(&vs)?.scale(self.cfg.scale);
        let scores = self.merge(&scores, axis, &shape)?;
        let attn = spike(&scores, &self.lif)?;
        let out = self.project(&attn, &self.proj, &self.bn_o, mode)?;
        Ok(AttentionTrace { q, k, v, scores, out })
    }

    pub fn forward(&self, x_q: &Tensor<F>, x_kv: &Tensor<F>, axis: SeqAxis, mode: BnMode) -> Result<Tensor<F>> {
        Ok(self.trace(x_q, x_kv, axis, mode)?.out)
    }
}

impl<F: Float> Module<F> for SpikingAttention<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        self.q.visit(&join(prefix, "q"), f);
        self.k.visit(&join(prefix, "k"), f);
        self.v.visit(&join(prefix, "v"), f);
        self.bn_q.visit(&join(prefix, "bn_q"), f);
        self.bn_k.visit(&join(prefix, "bn_k"), f);
        self.bn_v.visit(&join(prefix, "bn_v"), f);
        self.proj.visit(&join(prefix, "proj"), f);
        self.bn_o.visit(&join(prefix, "bn_o"), f);
    }
}

/// Spatial self-attention.
pub fn ssa<F: Float>(x: &Tensor<F>, params: &SpikingAttention<F>, mode: BnMode) -> Result<Tensor<F>> {
    params.forward(x, x, SeqAxis::Spatial, mode)
}

/// Spatial attention with queries from one modality and keys/values from the other.
pub fn cross_ssa<F: Float>(x_q: &Tensor<F>, x_kv: &Tensor<F>, params: &SpikingAttention<F>, mode: BnMode) -> Result<Tensor<F>> {
    params.forward(x_q, x_kv, SeqAxis::Spatial, mode)
}

/// Mean over `axis` then replication back to its original extent.
pub fn reduce_expand<F: Float>(x: &Tensor<F>, axis: usize) -> Result<Tensor<F>> {
    let extent = *x.shape().get(axis).ok_or(Error::InvalidAxis {
        op: "reduce_expand",
        axis,
        rank: x.rank(),
    })?;
    x.reduce_mean(axis)?.broadcast_expand(axis, extent)
}

/// Spatial complementary attention: cross attention over patches, averaged
/// over `N` and broadcast back.
pub fn scsa<F: Float>(x_q: &Tensor<F>, x_kv: &Tensor<F>, params: &SpikingAttention<F>, mode: BnMode) -> Result<Tensor<F>> {
    reduce_expand(&cross_ssa(x_q, x_kv, params, mode)?, 2)
}

/// Temporal complementary attention: cross attention over time steps,
/// averaged over `T` and broadcast back.
pub fn tcsa<F: Float>(x_q: &Tensor<F>, x_kv: &Tensor<F>, params: &SpikingAttention<F>, mode: BnMode) -> Result<Tensor<F>> {
    reduce_expand(&params.forward(x_q, x_kv, SeqAxis::Temporal, mode)?, 0)
}

pub fn residual_fuse<F: Float>(x: &Tensor<F>, res: &Tensor<F>, alpha: f64) -> Result<Tensor<F>> {
    if x.shape() != res.shape() {
        return Err(Error::shape("residual_fuse", x.shape(), res.shape()));
    }
    x.add(&res.scale(alpha))
}

/// Independent spatial and temporal attention units for one direction of
/// cross-modal fusion.
pub struct Ccssa<F: Float> {
    pub spatial: SpikingAttention<F>,
    pub temporal: SpikingAttention<F>,
}

impl<F: Float> Ccssa<F> {
    pub fn new(cfg: AttentionConfig, lif: LifConfig, seed: u64, path: &str) -> Result<Self> {
        Ok(Self {
            spatial: SpikingAttention::new(cfg, lif, seed, &join(path, "scsa"))?,
            temporal: SpikingAttention::new(cfg, lif, seed, &join(path, "tcsa"))?,
        })
    }

    /// Complementary feature of `x_self` drawn from `x_other`.
    pub fn forward(&self, x_self: &Tensor<F>, x_other: &Tensor<F>, mode: BnMode) -> Result<Tensor<F>> {
        let s = scsa(x_self, x_other, &self.spatial, mode)?;
        let t = tcsa(x_self, x_other, &self.temporal, mode)?;
        s.mul(&t)
    }
}

impl<F: Float> Module<F> for Ccssa<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        self.spatial.visit(&join(prefix, "scsa"), f);
        self.temporal.visit(&join(prefix, "tcsa"), f);
    }
}

pub fn ccssa<F: Float>(x_self: &Tensor<F>, x_other: &Tensor<F>, params: &Ccssa<F>, mode: BnMode) -> Result<Tensor<F>> {
    params.forward(x_self, x_other, mode)
}
