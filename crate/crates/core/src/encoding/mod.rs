//! Input encodings: direct coding, event frames, audio spectrograms, patch
//! splitting, and positional embeddings.

pub mod audio;
pub mod events;
pub mod sps;

pub use audio::{audio_to_logspec, AudioPipelineConfig};
pub use events::{aggregate_events, Event, EventStream};
pub use sps::{Sps, SpsConfig};

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// Replicates a static input along a new leading time axis.
pub fn direct_code<F: Float>(x: &Tensor<F>, steps: usize) -> Result<Tensor<F>> {
    if steps < 1 {
        return Err(Error::InvalidArgument("direct_code needs T >= 1".into()));
    }
    x.broadcast_expand(0, steps)
}

/// Adds a learned `[N, D]` embedding to every time step and batch item of
/// `[T, B, N, D]`.
pub fn add_positional<F: Float>(x: &Tensor<F>, pe: &Tensor<F>) -> Result<Tensor<F>> {
    let s = x.shape();
    if s.len() != 4 || pe.shape() != &s[2..] {
        return Err(Error::shape("add_positional", s, pe.shape()));
    }
    x.add(pe)
}

/// Per output index, the contributing input indices and normalized weights
/// of a triangle filter. The filter widens with the downscale factor, so
/// shrinking averages every input sample instead of skipping some.
fn triangle_weights(out: usize, inp: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = inp as f64 / out as f64;
    let support = scale.max(1.0);
    (0..out)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale;
            let lo = (center - support).floor().max(0.0) as usize;
            let hi = ((center + support).ceil() as usize).min(inp);
            let mut taps: Vec<(usize, f64)> = (lo..hi)
                .map(|j| (j, (1.0 - ((j as f64 + 0.5 - center) / support).abs()).max(0.0)))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Bilinear resize with half-pixel centers, `[h, w] -> [th, tw]`. When
/// shrinking, the kernel is stretched by the scale factor (antialiased).
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, th: usize, tw: usize) -> Vec<f64> {
    if h == th && w == tw {
        return src.to_vec();
    }
    let rows = triangle_weights(th, h);
    let cols = triangle_weights(tw, w);
    let mut tmp = vec![0.0; h * tw];
    for y in 0..h {
        for (x, taps) in cols.iter().enumerate() {
            tmp[y * tw + x] = taps.iter().map(|&(j, wt)| src[y * w + j] * wt).sum();
        }
    }
    let mut out = vec![0.0; th * tw];
    for (y, taps) in rows.iter().enumerate() {
        for x in 0..tw {
            out[y * tw + x] = taps.iter().map(|&(j, wt)| tmp[j * tw + x] * wt).sum();
        }
    }
    out
}

/// Resizes every plane of a `[C, H, W]` buffer.
pub fn resize_planes(src: &[f64], c: usize, h: usize, w: usize, th: usize, tw: usize) -> Vec<f64> {
    (0..c)
        .flat_map(|p| resize_bilinear(&src[p * h * w..(p + 1) * h * w], h, w, th, tw))
        .collect()
}
