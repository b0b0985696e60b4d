//! Event-camera streams and their aggregation into binary frames.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    /// Microseconds.
    pub t: u64,
    pub x: u32,
    pub y: u32,
    /// `true` for ON (p = 1), `false` for OFF (p = 0).
    pub on: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventStream {
    pub events: Vec<Event>,
}

impl EventStream {
    /// Rejects streams whose timestamps decrease.
    pub fn new(events: Vec<Event>) -> Result<Self> {
        if let Some(w) = events.windows(2).find(|w| w[1].t < w[0].t) {
            return Err(Error::InvalidArgument(format!("event timestamps decrease: {} then {}", w[0].t, w[1].t)));
        }
        Ok(Self { events })
    }

    /// Parses `t x y p` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut events = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::InvalidArgument(format!("event line {}: {line:?}", lineno + 1));
            let mut it = line.split_whitespace();
            let mut next = || it.next().ok_or_else(bad);
            let t = next()?.parse().map_err(|_| bad())?;
            let x = next()?.parse().map_err(|_| bad())?;
            let y = next()?.parse().map_err(|_| bad())?;
            let on = match next()? {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            events.push(Event { t, x, y, on });
        }
        Self::new(events)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            let _ = writeln!(s, "{} {} {} {}", e.t, e.x, e.y, e.on as u8);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Per-bin, per-polarity event counts `[T, 2, H, W]` before clipping.
pub fn event_counts(s: &EventStream, steps: usize, h: usize, w: usize) -> Result<Vec<u32>> {
    let (first, last) = match (s.events.first(), s.events.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::EmptyInput("event stream")),
    };
    if steps == 0 {
        return Err(Error::InvalidArgument("aggregate_events needs T >= 1".into()));
    }
    let span = last - first;
    let mut counts = vec![0u32; steps * 2 * h * w];
    for e in &s.events {
        if e.x as usize >= w || e.y as usize >= h {
            return Err(Error::EventOutOfRange {
                x: e.x,
                y: e.y,
                width: w,
                height: h,
            });
        }
        let bin = if span == 0 {
            0
        } else {
            (((e.t - first) as u128 * steps as u128) / span as u128).min(steps as u128 - 1) as usize
        };
        let idx = ((bin * 2 + e.on as usize) * h + e.y as usize) * w + e.x as usize;
        counts[idx] += 1;
    }
    Ok(counts)
}

/// Splits the stream's time range into `steps` equal bins and marks every
/// pixel that saw at least one event of a polarity in a bin.
pub fn aggregate_events<F: Float>(s: &EventStream, steps: usize, h: usize, w: usize) -> Result<Tensor<F>> {
    let counts = event_counts(s, steps, h, w)?;
    Tensor::from_vec(
        &[steps, 2, h, w],
        counts.into_iter().map(|c| if c > 0 { F::one() } else { F::zero() }).collect(),
    )
}
