//! Classification loss, semantic alignment loss over cross-modal residual
//! features, and their sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaoConfig {
    pub temperature: f64,
    /// Average the audio-anchored and visual-anchored directions.
    pub symmetric: bool,
}

impl Default for SaoConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            symmetric: false,
        }
    }
}

impl SaoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!("sao temperature must be > 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub sao: f64,
    pub total: f64,
}

/// Mean softmax cross-entropy of `[B, C]` logits.
pub fn cross_entropy<F: Float>(logits: &Tensor<F>, labels: &[usize]) -> Result<Tensor<F>> {
    logits.cross_entropy(labels)
}

/// `[T, B, N, D]` residuals to `[T, B, D]` unit vectors (mean over `N`).
pub fn sao_features<F: Float>(res: &Tensor<F>) -> Result<Tensor<F>> {
    if res.rank() != 4 {
        return Err(Error::shape("sao_features", res.shape(), &[0, 0, 0, 0]));
    }
    res.reduce_mean(2)?.l2_normalize()
}

fn anchored<F: Float>(anchor: &Tensor<F>, other: &Tensor<F>, tau: f64) -> Result<Tensor<F>> {
    let (t, b) = (anchor.shape()[0], anchor.shape()[1]);
    let logits = anchor.matmul(&other.transpose(1, 2)?)?.scale(1.0 / tau);
    let labels: Vec<usize> = (0..t).flat_map(|_| 0..b).collect();
    logits.reshape(&[t * b, b])?.cross_entropy(&labels)
}

/// InfoNCE over the batch at each time step: the positive for audio item `i`
/// is visual item `i`, negatives are the other visual items at the same `t`.
pub fn sao_loss<F: Float>(fa: &Tensor<F>, fv: &Tensor<F>, cfg: &SaoConfig) -> Result<Tensor<F>> {
    cfg.validate()?;
    if fa.shape() != fv.shape() || fa.rank() != 3 {
        return Err(Error::shape("sao_loss", fa.shape(), fv.shape()));
    }
    if fa.shape()[1] < 2 {
        log::warn!("sao_loss: batch of {} has no negatives, returning 0", fa.shape()[1]);
        return Ok(Tensor::scalar(F::zero()));
    }
    let forward = anchored(fa, fv, cfg.temperature)?;
    if cfg.symmetric {
        let backward = anchored(fv, fa, cfg.temperature)?;
        Ok(forward.add(&backward)?.scale(0.5))
    } else {
        Ok(forward)
    }
}

/// Alignment loss averaged over `(audio residual, visual residual)` pairs,
/// one pair per fusion block.
pub fn sao_over_blocks<F: Float>(pairs: &[(Tensor<F>, Tensor<F>)], cfg: &SaoConfig) -> Result<Tensor<F>> {
    if pairs.is_empty() {
        return Ok(Tensor::scalar(F::zero()));
    }
    let mut acc: Option<Tensor<F>> = None;
    for (ra, rv) in pairs {
        let l = sao_loss(&sao_features(ra)?, &sao_features(rv)?, cfg)?;
        acc = Some(match acc {
            Some(a) => a.add(&l)?,
            None => l,
        });
    }
    Ok(acc.expect("non-empty").scale(1.0 / pairs.len() as f64))
}

/// `ce + sao`. Passing `None` for `sao` disables the alignment term.
pub fn total_loss<F: Float>(
    logits: &Tensor<F>,
    labels: &[usize],
    residuals: &[(Tensor<F>, Tensor<F>)],
    sao: Option<&SaoConfig>,
) -> Result<(Tensor<F>, LossBreakdown)> {
    let ce = cross_entropy(logits, labels)?;
    let (total, sao_v) = match sao {
        Some(cfg) if !residuals.is_empty() => {
            let s = sao_over_blocks(residuals, cfg)?;
            let v = s.item().f64();
            (ce.add(&s)?, v)
        }
        _ => (ce.clone(), 0.0),
    };
    let ce_v = ce.item().f64();
    let breakdown = LossBreakdown {
        ce: ce_v,
        sao: sao_v,
        total: total.item().f64(),
    };
    Ok((total, breakdown))
}
