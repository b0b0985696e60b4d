//! Audio-visual spiking transformer with cross-modal residual fusion, and the
//! naive-fusion baseline it collapses to at `alpha = 0`.
//!
//! Per modality: SPS -> positional embedding -> `depth` blocks. A block is
//! `u = x + SSA(x)`, optionally `u += alpha * CCSSA(u, u_other)`, then
//! `x' = u + MLP(u)`. The head sums the modality streams, averages over
//! patches, applies a linear classifier per step and averages over time.

use serde::{Deserialize, Serialize};

use crate::attention::{residual_fuse, ssa, AttentionConfig, Ccssa, FusionConfig, SpikingAttention};
use crate::attention::spike;
use crate::encoding::{add_positional, direct_code, Sps, SpsConfig};
use crate::error::{Error, Result};
use crate::losses::{total_loss, LossBreakdown, SaoConfig};
use crate::neuron::LifConfig;
use crate::nn::{join, BatchNorm, Linear, Module, Slot};
use crate::tensor::{BnMode, Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Modality streams are only summed at the head.
    Baseline,
    #[default]
    Scmrl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Modalities {
    #[default]
    Both,
    Audio,
    Visual,
}

impl Modalities {
    pub fn audio(self) -> bool {
        self != Modalities::Visual
    }

    pub fn visual(self) -> bool {
        self != Modalities::Audio
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityConfig {
    pub channels: usize,
    pub input_hw: [usize; 2],
    pub sps_stages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub time_steps: usize,
    pub embed_dim: usize,
    pub classes: usize,
    pub seed: u64,
    pub mode: FusionMode,
    pub sao: bool,
    pub relaxed: bool,
    pub modalities: Modalities,
    pub audio: ModalityConfig,
    pub visual: ModalityConfig,
    pub attention_scale: f64,
    pub heads: usize,
    pub fusion: FusionConfig,
    pub lif: LifConfig,
    pub sao_config: SaoConfig,
    /// Hidden width of the block MLP as a multiple of `embed_dim`.
    pub mlp_ratio: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            time_steps: 4,
            embed_dim: 64,
            classes: 4,
            seed: 0,
            mode: FusionMode::Scmrl,
            sao: true,
            relaxed: false,
            modalities: Modalities::Both,
            audio: ModalityConfig {
                channels: 1,
                input_hw: [32, 32],
                sps_stages: 2,
            },
            visual: ModalityConfig {
                channels: 3,
                input_hw: [32, 32],
                sps_stages: 2,
            },
            attention_scale: 0.125,
            heads: 1,
            fusion: FusionConfig::default(),
            lif: LifConfig::default(),
            sao_config: SaoConfig::default(),
            mlp_ratio: 4,
        }
    }
}

impl ModelConfig {
    pub fn sps(&self, m: &ModalityConfig) -> SpsConfig {
        SpsConfig {
            stages: m.sps_stages,
            in_channels: m.channels,
            embed_dim: self.embed_dim,
            input_hw: m.input_hw,
        }
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            scale: self.attention_scale,
            heads: self.heads,
            embed_dim: self.embed_dim,
        }
    }

    pub fn neuron(&self) -> LifConfig {
        if self.relaxed {
            self.lif.relaxed()
        } else {
            self.lif
        }
    }

    /// `T = 2`, `D = 8`, 8x8 inputs, one block and 3 classes: under 5k
    /// parameters, small enough for finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            time_steps: 2,
            embed_dim: 8,
            classes: 3,
            audio: ModalityConfig {
                channels: 1,
                input_hw: [8, 8],
                sps_stages: 2,
            },
            visual: ModalityConfig {
                channels: 3,
                input_hw: [8, 8],
                sps_stages: 2,
            },
            fusion: FusionConfig { alpha: 1.5, depth: 1 },
            // at seed 0 a max-pool switch sits within 1e-5 of one conv weight
            seed: 1,
            ..Self::default()
        }
    }

    /// CCSSA and SAO only exist when both modalities are present.
    pub fn fuses(&self) -> bool {
        self.mode == FusionMode::Scmrl && self.modalities == Modalities::Both
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_steps < 1 {
            return Err(Error::Config("time_steps must be >= 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!("classes must be >= 2, got {}", self.classes)));
        }
        if self.mlp_ratio == 0 {
            return Err(Error::Config("mlp_ratio must be >= 1".into()));
        }
        self.attention().validate()?;
        self.fusion.validate()?;
        self.lif.validate()?;
        self.sao_config.validate()?;
        if self.modalities.audio() {
            self.sps(&self.audio).validate()?;
        }
        if self.modalities.visual() {
            self.sps(&self.visual).validate()?;
        }
        if self.fuses() && self.sps(&self.audio).patches() != self.sps(&self.visual).patches() {
            return Err(Error::Config(format!(
                "cross-modal fusion needs equal patch counts, audio {} vs visual {}",
                self.sps(&self.audio).patches(),
                self.sps(&self.visual).patches()
            )));
        }
        Ok(())
    }
}

/// `Linear -> BN -> LIF -> Linear -> BN -> LIF`.
pub struct Mlp<F: Float> {
    fc1: Linear<F>,
    bn1: BatchNorm<F>,
    fc2: Linear<F>,
    bn2: BatchNorm<F>,
    lif: LifConfig,
}

impl<F: Float> Mlp<F> {
    pub fn new(d: usize, hidden: usize, lif: LifConfig, seed: u64, path: &str) -> Self {
        Self {
            fc1: Linear::new(seed, &join(path, "fc1"), d, hidden, false),
            bn1: BatchNorm::features(hidden),
            fc2: Linear::new(seed, &join(path, "fc2"), hidden, d, false),
            bn2: BatchNorm::features(d),
            lif,
        }
    }

    pub fn forward(&self, x: &Tensor<F>, mode: BnMode) -> Result<Tensor<F>> {
        let h = spike(&self.bn1.forward(&self.fc1.forward(x)?, mode)?, &self.lif)?;
        spike(&self.bn2.forward(&self.fc2.forward(&h)?, mode)?, &self.lif)
    }
}

impl<F: Float> Module<F> for Mlp<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
    }
}

struct Stream<F: Float> {
    ssa: SpikingAttention<F>,
    mlp: Mlp<F>,
}

impl<F: Float> Stream<F> {
    fn new(cfg: &ModelConfig, path: &str) -> Result<Self> {
        let d = cfg.embed_dim;
        Ok(Self {
            ssa: SpikingAttention::new(cfg.attention(), cfg.neuron(), cfg.seed, &join(path, "ssa"))?,
            mlp: Mlp::new(d, d * cfg.mlp_ratio, cfg.neuron(), cfg.seed, &join(path, "mlp")),
        })
    }
}

impl<F: Float> Module<F> for Stream<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        self.ssa.visit(&join(prefix, "ssa"), f);
        self.mlp.visit(&join(prefix, "mlp"), f);
    }
}

struct Block<F: Float> {
    audio: Option<Stream<F>>,
    visual: Option<Stream<F>>,
    /// Audio-anchored and visual-anchored CCSSA.
    fuse: Option<(Ccssa<F>, Ccssa<F>)>,
}

impl<F: Float> Module<F> for Block<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        if let Some(s) = &self.audio {
            s.visit(&join(prefix, "audio"), f);
        }
        if let Some(s) = &self.visual {
            s.visit(&join(prefix, "visual"), f);
        }
        if let Some((a, v)) = &self.fuse {
            a.visit(&join(prefix, "ccssa_a"), f);
            v.visit(&join(prefix, "ccssa_v"), f);
        }
    }
}

struct Embed<F: Float> {
    sps: Sps<F>,
    pe: Tensor<F>,
}

impl<F: Float> Embed<F> {
    fn new(cfg: &ModelConfig, m: &ModalityConfig, path: &str) -> Result<Self> {
        let sps_cfg = cfg.sps(m);
        let sps = Sps::new(sps_cfg, cfg.neuron(), cfg.seed, &join(path, "sps"))?;
        let n = sps_cfg.patches();
        let pe = Tensor::param(&[n, cfg.embed_dim], vec![F::zero(); n * cfg.embed_dim])?;
        Ok(Self { sps, pe })
    }

    fn forward(&self, x: &Tensor<F>, steps: usize, mode: BnMode) -> Result<Tensor<F>> {
        let x = match x.rank() {
            4 => direct_code(x, steps)?,
            5 if x.shape()[0] == steps => x.clone(),
            _ => return Err(Error::shape("model_input", x.shape(), &[steps, 0, 0, 0, 0])),
        };
        add_positional(&self.sps.forward(&x, mode)?, &self.pe)
    }
}

impl<F: Float> Module<F> for Embed<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        self.sps.visit(&join(prefix, "sps"), f);
        f(&join(prefix, "pe"), Slot::Param(&self.pe));
    }
}

pub struct ForwardOutput<F: Float> {
    /// `[B, C]`, averaged over time.
    pub logits: Tensor<F>,
    /// Un-scaled CCSSA outputs `(audio, visual)` per block; empty without fusion.
    pub residuals: Vec<(Tensor<F>, Tensor<F>)>,
}

pub struct Model<F: Float> {
    pub cfg: ModelConfig,
    audio: Option<Embed<F>>,
    visual: Option<Embed<F>>,
    blocks: Vec<Block<F>>,
    head: Linear<F>,
}

pub fn build_model<F: Float>(cfg: ModelConfig) -> Result<Model<F>> {
    Model::new(cfg)
}

impl<F: Float> Model<F> {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let audio = cfg.modalities.audio().then(|| Embed::new(&cfg, &cfg.audio, "audio")).transpose()?;
        let visual = cfg.modalities.visual().then(|| Embed::new(&cfg, &cfg.visual, "visual")).transpose()?;
        let mut blocks = Vec::with_capacity(cfg.fusion.depth);
        for i in 0..cfg.fusion.depth {
            let path = format!("blocks.{i}");
            let stream = |name: &str| Stream::new(&cfg, &join(&path, name));
            let fuse = if cfg.fuses() {
                Some((
                    Ccssa::new(cfg.attention(), cfg.neuron(), cfg.seed, &join(&path, "ccssa_a"))?,
                    Ccssa::new(cfg.attention(), cfg.neuron(), cfg.seed, &join(&path, "ccssa_v"))?,
                ))
            } else {
                None
            };
            blocks.push(Block {
                audio: cfg.modalities.audio().then(|| stream("audio")).transpose()?,
                visual: cfg.modalities.visual().then(|| stream("visual")).transpose()?,
                fuse,
            });
        }
        let head = Linear::new(cfg.seed, "head", cfg.embed_dim, cfg.classes, true);
        Ok(Self {
            cfg,
            audio,
            visual,
            blocks,
            head,
        })
    }

    /// Inputs are `[B, C, H, W]` (direct-coded over `T`) or `[T, B, C, H, W]`.
    /// The tensor of an absent modality is ignored.
    pub fn forward(&self, audio: &Tensor<F>, visual: &Tensor<F>, mode: BnMode) -> Result<ForwardOutput<F>> {
        let t = self.cfg.time_steps;
        let mut xa = self.audio.as_ref().map(|e| e.forward(audio, t, mode)).transpose()?;
        let mut xv = self.visual.as_ref().map(|e| e.forward(visual, t, mode)).transpose()?;
        if let (Some(a), Some(v)) = (&xa, &xv) {
            if a.shape()[1] != v.shape()[1] {
                return Err(Error::shape("model_forward", a.shape(), v.shape()));
            }
        }
        let mut residuals = Vec::new();
        for block in &self.blocks {
            let mut ua = match (&xa, &block.audio) {
                (Some(x), Some(s)) => Some(x.add(&ssa(x, &s.ssa, mode)?)?),
                _ => None,
            };
            let mut uv = match (&xv, &block.visual) {
                (Some(x), Some(s)) => Some(x.add(&ssa(x, &s.ssa, mode)?)?),
                _ => None,
            };
            if let (Some((ca, cv)), Some(a), Some(v)) = (&block.fuse, &ua, &uv) {
                let ra = ca.forward(a, v, mode)?;
                let rv = cv.forward(v, a, mode)?;
                let alpha = self.cfg.fusion.alpha;
                ua = Some(residual_fuse(a, &ra, alpha)?);
                uv = Some(residual_fuse(v, &rv, alpha)?);
                residuals.push((ra, rv));
            }
            if let (Some(u), Some(s)) = (&ua, &block.audio) {
                xa = Some(u.add(&s.mlp.forward(u, mode)?)?);
            }
            if let (Some(u), Some(s)) = (&uv, &block.visual) {
                xv = Some(u.add(&s.mlp.forward(u, mode)?)?);
            }
        }
        let z = match (xa, xv) {
            (Some(a), Some(v)) => a.add(&v)?,
            (Some(a), None) => a,
            (None, Some(v)) => v,
            (None, None) => unreachable!("at least one modality"),
        };
        let pooled = z.reduce_mean(2)?;
        let logits = self.head.forward(&pooled)?.reduce_mean(0)?;
        Ok(ForwardOutput { logits, residuals })
    }

    /// Objective for one forward pass; SAO is skipped when disabled in the
    /// config or when the model has no fusion residuals.
    pub fn loss(&self, out: &ForwardOutput<F>, labels: &[usize]) -> Result<(Tensor<F>, LossBreakdown)> {
        let sao = self.cfg.sao.then_some(&self.cfg.sao_config);
        total_loss(&out.logits, labels, &out.residuals, sao)
    }
}

impl<F: Float> Module<F> for Model<F> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, F>)) {
        if let Some(e) = &self.audio {
            e.visit(&join(prefix, "audio"), f);
        }
        if let Some(e) = &self.visual {
            e.visit(&join(prefix, "visual"), f);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }
}
