//! Leaky integrate-and-fire neurons.
//!
//! Discrete dynamics per step, with resting potential 0:
//!
//! ```text
//! v'  = v + (I - v) / tau
//! s   = step(v' - v_th)
//! v'' = v' * (1 - s)
//! ```
//!
//! In [`LifMode::Relaxed`] the step is replaced by `sigmoid(slope * (v' - v_th))`
//! so the whole network is smooth and can be checked with finite differences.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LifMode {
    #[default]
    Spiking,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifConfig {
    pub tau: f64,
    pub v_th: f64,
    pub v_reset: f64,
    pub surrogate_slope: f64,
    pub mode: LifMode,
}

impl Default for LifConfig {
    fn default() -> Self {
        Self {
            tau: 2.0,
            v_th: 1.0,
            v_reset: 0.0,
            surrogate_slope: 4.0,
            mode: LifMode::Spiking,
        }
    }
}

impl LifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 1.0) {
            return Err(Error::Config(format!("lif tau must be > 1, got {}", self.tau)));
        }
        if !(self.v_th > self.v_reset) {
            return Err(Error::Config(format!("lif v_th {} must exceed v_reset {}", self.v_th, self.v_reset)));
        }
        if self.v_reset != 0.0 {
            return Err(Error::Config("lif v_reset is fixed at 0".into()));
        }
        if !(self.surrogate_slope > 0.0) {
            return Err(Error::Config("lif surrogate_slope must be positive".into()));
        }
        Ok(())
    }

    pub fn relaxed(mut self) -> Self {
        self.mode = LifMode::Relaxed;
        self
    }
}

/// Membrane potentials carried between steps.
#[derive(Debug, Clone)]
pub struct LifState<F: Float> {
    pub v: Tensor<F>,
}

impl<F: Float> LifState<F> {
    /// Resting state for activations of `shape`.
    pub fn rest(shape: &[usize]) -> Self {
        Self { v: Tensor::zeros(shape) }
    }
}

/// One membrane update built from differentiable primitives.
pub fn lif_step<F: Float>(state: &LifState<F>, input: &Tensor<F>, cfg: &LifConfig) -> Result<(LifState<F>, Tensor<F>)> {
    if state.v.shape() != input.shape() {
        return Err(Error::shape("lif_step", state.v.shape(), input.shape()));
    }
    let charged = state.v.add(&input.sub(&state.v)?.scale(1.0 / cfg.tau))?;
    let shifted = charged.add_scalar(-cfg.v_th);
    let spikes = match cfg.mode {
        LifMode::Spiking => {
            let s = shifted.heaviside_surrogate(cfg.surrogate_slope).into_tensor();
            record(&s.values());
            s
        }
        LifMode::Relaxed => shifted.scale(cfg.surrogate_slope).sigmoid(),
    };
    let keep = spikes.neg().add_scalar(1.0);
    let v = charged.mul(&keep)?;
    Ok((LifState { v }, spikes))
}

/// Counts of spiking-mode neuron outputs seen by [`audit_spikes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SpikeAudit {
    pub layers: usize,
    pub values: usize,
    pub non_binary: usize,
}

thread_local! {
    static AUDIT: RefCell<Option<SpikeAudit>> = const { RefCell::new(None) };
}

/// Runs `f` and tallies every spike emitted by [`lif_forward`] on this thread
/// in spiking mode.
pub fn audit_spikes<R>(f: impl FnOnce() -> R) -> (R, SpikeAudit) {
    let outer = AUDIT.with(|a| a.borrow_mut().replace(SpikeAudit::default()));
    let r = f();
    let audit = AUDIT.with(|a| std::mem::replace(&mut *a.borrow_mut(), outer)).unwrap_or_default();
    (r, audit)
}

fn record<F: Float>(spikes: &[F]) {
    AUDIT.with(|a| {
        if let Some(a) = a.borrow_mut().as_mut() {
            a.layers += 1;
            a.values += spikes.len();
            a.non_binary += spikes.iter().filter(|&&s| s != F::zero() && s != F::one()).count();
        }
    });
}

/// Runs the neuron over the leading (time) axis of `inputs` starting from
/// rest. Fused equivalent of folding [`lif_step`] over time.
pub fn lif_forward<F: Float>(inputs: &Tensor<F>, cfg: &LifConfig) -> Result<Tensor<F>> {
    let shape = inputs.shape().to_vec();
    let steps = *shape.first().ok_or(Error::EmptyInput("lif_forward needs a time axis"))?;
    if steps == 0 {
        return Err(Error::EmptyInput("lif_forward over zero time steps"));
    }
    let m = inputs.numel() / steps;
    let decay = F::c(1.0 - 1.0 / cfg.tau);
    let gain = F::c(1.0 / cfg.tau);
    let v_th = F::c(cfg.v_th);
    let slope = F::c(cfg.surrogate_slope);
    let relaxed = cfg.mode == LifMode::Relaxed;

    let x = inputs.values();
    let mut spikes = vec![F::zero(); x.len()];
    // charged potentials v' per step, needed for the backward pass
    let mut charged = vec![F::zero(); x.len()];
    let mut v = vec![F::zero(); m];
    for t in 0..steps {
        let off = t * m;
        for j in 0..m {
            let vp = decay * v[j] + gain * x[off + j];
            let s = if relaxed {
                crate::tensor::sigmoid(slope * (vp - v_th))
            } else if vp >= v_th {
                F::one()
            } else {
                F::zero()
            };
            charged[off + j] = vp;
            spikes[off + j] = s;
            v[j] = vp * (F::one() - s);
        }
    }
    drop(x);
    if !relaxed {
        record(&spikes);
    }
    let out = spikes.clone();
    Ok(Tensor::from_op(
        "lif",
        shape,
        out,
        vec![inputs.clone()],
        Box::new(move |g, _| {
            let mut gx = vec![F::zero(); g.len()];
            // gradient flowing into v'' of the current step from the future
            let mut g_v = vec![F::zero(); m];
            for t in (0..steps).rev() {
                let off = t * m;
                for j in 0..m {
                    let i = off + j;
                    let (vp, s) = (charged[i], spikes[i]);
                    let ds = crate::tensor::surrogate_grad(vp - v_th, slope);
                    let g_vp = g_v[j] * (F::one() - s) + (g[i] - g_v[j] * vp) * ds;
                    gx[i] = g_vp * gain;
                    g_v[j] = g_vp * decay;
                }
            }
            vec![Some(gx)]
        }),
    ))
}

/// A neuron layer that keeps its membrane state between explicit steps.
#[derive(Debug, Clone)]
pub struct LifLayer<F: Float> {
    pub cfg: LifConfig,
    state: Option<LifState<F>>,
}

impl<F: Float> LifLayer<F> {
    pub fn new(cfg: LifConfig) -> Self {
        Self { cfg, state: None }
    }

    /// Advances one step, initializing at rest on first use.
    pub fn step(&mut self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let state = match self.state.take() {
            Some(s) => s,
            None => LifState::rest(input.shape()),
        };
        let (next, spikes) = lif_step(&state, input, &self.cfg)?;
        self.state = Some(next);
        Ok(spikes)
    }

    /// Full sequence from rest. Does not touch the stepping state.
    pub fn forward(&self, inputs: &Tensor<F>) -> Result<Tensor<F>> {
        lif_forward(inputs, &self.cfg)
    }

    pub fn state(&self) -> Option<&LifState<F>> {
        self.state.as_ref()
    }

    pub fn reset_state(&mut self) {
        if let Some(s) = self.state.as_mut() {
            s.v = Tensor::zeros(s.v.shape());
        }
    }
}
