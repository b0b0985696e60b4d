//! Waveform to log-amplitude spectrogram image.
//!
//! Peak normalization, linear-interpolation resampling, centered
//! reflect-padded STFT with a periodic Hann window, `ln(|X| + offset)`, then a
//! half-pixel-centered bilinear resize to the model's input extent.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::resize_bilinear;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioPipelineConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub log_offset: f64,
    /// Output `[height, width]`; height runs over frequency, width over frames.
    pub target_hw: [usize; 2],
}

impl Default for AudioPipelineConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22_050,
            n_fft: 512,
            hop: 353,
            log_offset: 1e-7,
            target_hw: [32, 32],
        }
    }
}

impl AudioPipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.n_fft || self.n_fft < 2 {
            return Err(Error::Config(format!("audio hop {} must be in 1..={}", self.hop, self.n_fft)));
        }
        if !(self.log_offset > 0.0) {
            return Err(Error::Config("audio log_offset must be positive".into()));
        }
        if self.sample_rate == 0 || self.target_hw.contains(&0) {
            return Err(Error::Config("audio sample_rate and target_hw must be non-zero".into()));
        }
        Ok(())
    }

    pub fn freq_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// Scales so the largest magnitude is 1. All-zero input is returned as is.
pub fn peak_normalize(x: &[f64]) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter().map(|v| v / peak).collect()
    } else {
        x.to_vec()
    }
}

/// Linear-interpolation resampling from `from` Hz to `to` Hz.
pub fn resample_linear(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || x.is_empty() {
        return x.to_vec();
    }
    let out_len = ((x.len() as u64 * to as u64) / from as u64) as usize;
    let ratio = from as f64 / to as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let i0 = pos.floor() as usize;
            let frac = pos - i0 as f64;
            let a = x[i0.min(x.len() - 1)];
            let b = x[(i0 + 1).min(x.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    out
}

/// Magnitude STFT, `frames x (n_fft/2 + 1)`, centered with reflect padding.
pub fn stft_magnitude(x: &[f64], n_fft: usize, hop: usize) -> Result<Vec<Vec<f64>>> {
    if x.len() < n_fft {
        return Err(Error::WaveformTooShort { len: x.len(), min: n_fft });
    }
    let padded = reflect_pad(x, n_fft / 2);
    let frames = 1 + (padded.len() - n_fft) / hop;
    let window = hann(n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let bins = n_fft / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let seg = &padded[f * hop..f * hop + n_fft];
        for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        out.push(buf[..bins].iter().map(|c| c.norm()).collect());
    }
    Ok(out)
}

/// Log-amplitude spectrogram before resizing, laid out `[freq][frame]`.
pub fn log_spectrogram(waveform: &[f64], sample_rate: u32, cfg: &AudioPipelineConfig) -> Result<(usize, usize, Vec<f64>)> {
    if waveform.is_empty() {
        return Err(Error::EmptyInput("waveform"));
    }
    let normalized = peak_normalize(waveform);
    let resampled = resample_linear(&normalized, sample_rate, cfg.sample_rate);
    let mag = stft_magnitude(&resampled, cfg.n_fft, cfg.hop)?;
    let (frames, bins) = (mag.len(), cfg.freq_bins());
    let mut spec = vec![0.0; bins * frames];
    for (t, frame) in mag.iter().enumerate() {
        for (k, &m) in frame.iter().enumerate() {
            spec[k * frames + t] = (m + cfg.log_offset).ln();
        }
    }
    Ok((bins, frames, spec))
}

/// Full pipeline to a `[1, H, W]` image.
pub fn audio_to_logspec<F: Float>(waveform: &[f64], sample_rate: u32, cfg: &AudioPipelineConfig) -> Result<Tensor<F>> {
    cfg.validate()?;
    let (bins, frames, spec) = log_spectrogram(waveform, sample_rate, cfg)?;
    let [h, w] = cfg.target_hw;
    let img = resize_bilinear(&spec, bins, frames, h, w);
    Tensor::from_f64(&[1, h, w], &img)
}
