//! Audio-visual samples: synthetic generation, on-disk layout, SNR noise,
//! seeded splits and encoding into model inputs.
//!
//! On disk a dataset is `root/<class>/<id>.wav` plus one of `<id>.png`,
//! `<id>.ppm`, `<id>.pgm` or `<id>.evt` (text events, one `t x y p` per line).
//! Classes are the sorted sub-directory names.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encoding::audio::log_spectrogram;
use crate::encoding::{aggregate_events, resize_bilinear, resize_planes, AudioPipelineConfig, EventStream};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseTarget {
    Audio,
    Visual,
    #[default]
    Both,
}

impl NoiseTarget {
    pub fn audio(self) -> bool {
        self != NoiseTarget::Visual
    }

    pub fn visual(self) -> bool {
        self != NoiseTarget::Audio
    }
}

impl std::str::FromStr for NoiseTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(Self::Audio),
            "visual" => Ok(Self::Visual),
            "both" => Ok(Self::Both),
            _ => Err(Error::InvalidArgument(format!("noise target must be audio|visual|both, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr_db: f64,
    pub target: NoiseTarget,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            snr_db: 10.0,
            target: NoiseTarget::Both,
            seed: 0,
        }
    }
}

/// Adds `sqrt(E[x^2] / 10^(snr/10)) * N(0, 1)` to every element. A silent
/// signal is returned unchanged.
pub fn add_noise(x: &[f64], snr_db: f64, rng: &mut impl Rng) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let power = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    if power == 0.0 {
        log::warn!("inject_noise: zero signal power, input left unchanged");
        return x.to_vec();
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    x.iter()
        .map(|&v| {
            let n: f64 = rng.sample(StandardNormal);
            v + sigma * n
        })
        .collect()
}

/// Noise generator for sample `index` under `cfg`; independent of batching.
pub fn noise_rng(cfg: &NoiseConfig, index: u64, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index);
    rng
}

/// Treats the whole tensor as one sample.
pub fn inject_noise<F: Float>(x: &Tensor<F>, cfg: &NoiseConfig) -> Result<Tensor<F>> {
    if x.numel() == 0 {
        return Err(Error::EmptyInput("inject_noise"));
    }
    let mut rng = noise_rng(cfg, 0, 0);
    Tensor::from_f64(x.shape(), &add_noise(&x.to_f64_vec(), cfg.snr_db, &mut rng))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Visual {
    /// `[channels, h, w]` intensities, usually in `[0, 1]`.
    Image { channels: usize, h: usize, w: usize, data: Vec<f64> },
    Events { stream: EventStream, h: usize, w: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: usize,
    pub id: String,
    pub sample_rate: u32,
    pub audio: Vec<f64>,
    pub visual: Visual,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
    pub image_hw: [usize; 2],
    pub sample_rate: u32,
    pub duration_s: f64,
    pub audio_noise: f64,
    pub pixel_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            per_class: 50,
            seed: 0,
            image_hw: [32, 32],
            sample_rate: 22_050,
            duration_s: 0.5,
            audio_noise: 0.2,
            pixel_noise: 0.1,
        }
    }
}

/// Tone frequency of class `k`.
pub fn class_frequency(k: usize) -> f64 {
    500.0 * (k + 1) as f64
}

const GLYPH: usize = 5;

/// Fixed 5x5 bitmap of class `k`, independent of the dataset seed. Distinct
/// classes get distinct bitmaps with at least 8 lit cells.
pub fn class_glyph(k: usize) -> [[bool; GLYPH]; GLYPH] {
    let mut salt = 0u64;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + k as u64 * 7919 + salt * 104_729);
        let mut g = [[false; GLYPH]; GLYPH];
        for row in g.iter_mut() {
            for cell in row.iter_mut() {
                *cell = rng.gen_bool(0.5);
            }
        }
        let lit = g.iter().flatten().filter(|&&c| c).count();
        let clash = (0..k).any(|j| class_glyph(j) == g);
        if lit >= 8 && !clash {
            return g;
        }
        salt += 1;
    }
}

/// Class-conditional tones and glyphs with per-sample jitter and noise.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.classes < 2 {
        return Err(Error::Config(format!("synthetic dataset needs >= 2 classes, got {}", cfg.classes)));
    }
    if cfg.per_class == 0 || cfg.duration_s <= 0.0 || cfg.sample_rate == 0 {
        return Err(Error::Config("synthetic per_class, duration_s and sample_rate must be positive".into()));
    }
    let [h, w] = cfg.image_hw;
    let cell = (h.min(w) / 16).max(1);
    let size = GLYPH * cell;
    if h < size || w < size {
        return Err(Error::Config(format!("image {h}x{w} too small for the glyph")));
    }
    let nyquist = cfg.sample_rate as f64 / 2.0;
    if class_frequency(cfg.classes - 1) >= nyquist {
        return Err(Error::Config(format!("{} classes exceed the Nyquist limit at {} Hz", cfg.classes, cfg.sample_rate)));
    }
    let glyphs: Vec<_> = (0..cfg.classes).map(class_glyph).collect();
    let len = (cfg.duration_s * cfg.sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.classes * cfg.per_class);
    for i in 0..cfg.per_class {
        for (k, glyph) in glyphs.iter().enumerate() {
            let freq = class_frequency(k);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp = rng.gen_range(0.3..1.0);
            let audio = (0..len)
                .map(|n| {
                    let t = n as f64 / cfg.sample_rate as f64;
                    let z: f64 = rng.sample(StandardNormal);
                    amp * (std::f64::consts::TAU * freq * t + phase).sin() + cfg.audio_noise * amp * z
                })
                .collect();
            let oy = rng.gen_range(0..=h - size);
            let ox = rng.gen_range(0..=w - size);
            let tint: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.6..1.0));
            let mut data = vec![0.0; 3 * h * w];
            for (c, &tc) in tint.iter().enumerate() {
                for y in 0..h {
                    for x in 0..w {
                        let (gy, gx) = (y.wrapping_sub(oy) / cell, x.wrapping_sub(ox) / cell);
                        let on = y >= oy && x >= ox && gy < GLYPH && gx < GLYPH && glyph[gy][gx];
                        let z: f64 = rng.sample(StandardNormal);
                        let v = if on { tc } else { 0.0 } + cfg.pixel_noise * z;
                        data[(c * h + y) * w + x] = v.clamp(0.0, 1.0);
                    }
                }
            }
            samples.push(Sample {
                label: k,
                id: format!("{i:05}"),
                sample_rate: cfg.sample_rate,
                audio,
                visual: Visual::Image { channels: 3, h, w, data },
            });
        }
    }
    Ok(Dataset {
        class_names: (0..cfg.classes).map(|k| format!("class{k}")).collect(),
        samples,
    })
}

fn read_wav(path: &Path) -> Result<(u32, Vec<f64>)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let raw: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()?
        }
    };
    let ch = spec.channels.max(1) as usize;
    let mono = raw.chunks(ch).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    Ok((spec.sample_rate, mono))
}

fn write_wav(path: &Path, sample_rate: u32, audio: &[f64]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in audio {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}

fn read_image(path: &Path) -> Result<Visual> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data) = if img.color().has_color() {
        let rgb = img.to_rgb8();
        let mut data = vec![0.0; 3 * h * w];
        for (x, y, p) in rgb.enumerate_pixels() {
            for c in 0..3 {
                data[(c * h + y as usize) * w + x as usize] = p[c] as f64 / 255.0;
            }
        }
        (3, data)
    } else {
        let gray = img.to_luma8();
        (1, gray.pixels().map(|p| p[0] as f64 / 255.0).collect())
    };
    Ok(Visual::Image { channels, h, w, data })
}

fn write_png(path: &Path, channels: usize, h: usize, w: usize, data: &[f64]) -> Result<()> {
    let px = |c: usize, y: usize, x: usize| (data[(c * h + y) * w + x].clamp(0.0, 1.0) * 255.0).round() as u8;
    let img = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        if channels == 3 {
            image::Rgb([px(0, y, x), px(1, y, x), px(2, y, x)])
        } else {
            let v = px(0, y, x);
            image::Rgb([v, v, v])
        }
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Writes `root/<class>/<id>.wav` and `.png` (or `.evt`) for every sample.
pub fn save_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    for name in &ds.class_names {
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for s in &ds.samples {
        let dir = root.join(&ds.class_names[s.label]);
        write_wav(&dir.join(format!("{}.wav", s.id)), s.sample_rate, &s.audio)?;
        match &s.visual {
            Visual::Image { channels, h, w, data } => write_png(&dir.join(format!("{}.png", s.id)), *channels, *h, *w, data)?,
            Visual::Events { stream, h, w } => {
                let p = dir.join(format!("{}.evt", s.id));
                let text = format!("# {w} {h}\n{}", stream.to_text());
                fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            }
        }
    }
    Ok(())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

fn read_events(path: &Path) -> Result<Visual> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .map(|l| l.split_whitespace().filter_map(|v| v.parse::<usize>().ok()).collect::<Vec<_>>());
    let (w, h) = match header.as_deref() {
        Some([w, h]) => (*w, *h),
        _ => return Err(Error::Dataset(format!("{}: first line must be '# <width> <height>'", path.display()))),
    };
    Ok(Visual::Events {
        stream: EventStream::parse(&text)?,
        h,
        w,
    })
}

/// Reads the on-disk layout described in the module docs.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let mut ds = Dataset::default();
    for class_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let label = ds.class_names.len();
        ds.class_names.push(class_dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        for wav in sorted_entries(&class_dir)?.into_iter().filter(|p| p.extension().is_some_and(|e| e == "wav")) {
            let stem = wav.with_extension("");
            let visual_path = ["png", "ppm", "pgm", "evt"]
                .iter()
                .map(|ext| stem.with_extension(ext))
                .find(|p| p.exists())
                .ok_or_else(|| Error::Dataset(format!("{} has no matching image or event file", wav.display())))?;
            let visual = if visual_path.extension().is_some_and(|e| e == "evt") {
                read_events(&visual_path)?
            } else {
                read_image(&visual_path)?
            };
            let (sample_rate, audio) = read_wav(&wav)?;
            ds.samples.push(Sample {
                label,
                id: stem.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                sample_rate,
                audio,
                visual,
            });
        }
    }
    if ds.classes() < 2 {
        return Err(Error::Dataset(format!("{} holds fewer than 2 class directories", root.display())));
    }
    if ds.is_empty() {
        return Err(Error::Dataset(format!("{} holds no samples", root.display())));
    }
    Ok(ds)
}

/// Seeded shuffle split; `test_ratio` of the samples (rounded, at least one)
/// go to the test side.
pub fn split_indices(n: usize, test_ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * test_ratio).round() as usize).clamp(1.min(n), n);
    let test = idx.split_off(n - n_test);
    (idx, test)
}

/// Model-ready inputs of a set of samples, stored flat per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub audio_shape: Vec<usize>,
    pub visual_shape: Vec<usize>,
    pub audio: Vec<Vec<f32>>,
    pub visual: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Stacks the given rows into `([B, ..] audio, visual, labels)`. Event
    /// inputs come out `[T, B, ..]`.
    pub fn batch<F: Float>(&self, rows: &[usize]) -> Result<(Tensor<F>, Tensor<F>, Vec<usize>)> {
        let stack = |items: &Vec<Vec<f32>>, shape: &[usize], time_major: bool| -> Result<Tensor<F>> {
            let per: usize = shape.iter().product();
            let b = rows.len();
            if time_major {
                let t = shape[0];
                let step = per / t;
                let mut data = Vec::with_capacity(b * per);
                for ti in 0..t {
                    for &r in rows {
                        data.extend(items[r][ti * step..(ti + 1) * step].iter().map(|&v| F::c(v as f64)));
                    }
                }
                let mut s = vec![t, b];
                s.extend_from_slice(&shape[1..]);
                Tensor::from_vec(&s, data)
            } else {
                let data = rows.iter().flat_map(|&r| items[r].iter().map(|&v| F::c(v as f64))).collect();
                let mut s = vec![b];
                s.extend_from_slice(shape);
                Tensor::from_vec(&s, data)
            }
        };
        let audio = stack(&self.audio, &self.audio_shape, false)?;
        let visual = stack(&self.visual, &self.visual_shape, self.visual_shape.len() == 4)?;
        Ok((audio, visual, rows.iter().map(|&r| self.labels[r]).collect()))
    }
}

/// Audio pipeline settings whose output extent matches the model's audio input.
pub fn audio_config_for(model: &ModelConfig, base: &AudioPipelineConfig) -> AudioPipelineConfig {
    AudioPipelineConfig {
        target_hw: model.audio.input_hw,
        ..*base
    }
}

/// Encodes the selected samples: waveform to log spectrogram, image resized
/// to the model extent, events aggregated into `T` frames. Optional noise is
/// applied to the raw waveform / image before encoding.
pub fn encode(
    ds: &Dataset,
    rows: &[usize],
    model: &ModelConfig,
    audio_cfg: &AudioPipelineConfig,
    noise: Option<&NoiseConfig>,
) -> Result<Encoded> {
    let acfg = audio_config_for(model, audio_cfg);
    acfg.validate()?;
    let [vh, vw] = model.visual.input_hw;
    let vc = model.visual.channels;
    let mut out = Encoded {
        audio_shape: vec![1, acfg.target_hw[0], acfg.target_hw[1]],
        visual_shape: Vec::new(),
        audio: Vec::with_capacity(rows.len()),
        visual: Vec::with_capacity(rows.len()),
        labels: Vec::with_capacity(rows.len()),
    };
    for &r in rows {
        let s = ds.samples.get(r).ok_or_else(|| Error::InvalidArgument(format!("sample index {r} out of range")))?;
        if s.label >= model.classes {
            return Err(Error::LabelOutOfRange {
                label: s.label,
                classes: model.classes,
            });
        }
        let wave = match noise {
            Some(n) if n.target.audio() => add_noise(&s.audio, n.snr_db, &mut noise_rng(n, r as u64, 1)),
            _ => s.audio.clone(),
        };
        let (bins, frames, spec) = log_spectrogram(&wave, s.sample_rate, &acfg)?;
        let [ah, aw] = acfg.target_hw;
        out.audio.push(resize_bilinear(&spec, bins, frames, ah, aw).into_iter().map(|v| v as f32).collect());
        let (shape, pixels) = match &s.visual {
            Visual::Image { channels, h, w, data } => {
                let data = match noise {
                    Some(n) if n.target.visual() => add_noise(data, n.snr_db, &mut noise_rng(n, r as u64, 2)),
                    _ => data.clone(),
                };
                let data = match (*channels, vc) {
                    (c, m) if c == m => data,
                    (3, 1) => (0..h * w).map(|i| (data[i] + data[h * w + i] + data[2 * h * w + i]) / 3.0).collect(),
                    (1, 3) => data.repeat(3),
                    (c, m) => return Err(Error::Dataset(format!("image has {c} channels, model expects {m}"))),
                };
                (vec![vc, vh, vw], resize_planes(&data, vc, *h, *w, vh, vw))
            }
            Visual::Events { stream, h, w } => {
                if vc != 2 || [*h, *w] != [vh, vw] {
                    return Err(Error::Dataset(format!(
                        "event sensor {w}x{h} needs a 2-channel {vw}x{vh} visual input, model has {vc} channels at {vw}x{vh}"
                    )));
                }
                let t = model.time_steps;
                let mut frames = aggregate_events::<f64>(stream, t, *h, *w)?.to_vec();
                if let Some(n) = noise.filter(|n| n.target.visual()) {
                    frames = add_noise(&frames, n.snr_db, &mut noise_rng(n, r as u64, 2));
                }
                (vec![t, 2, vh, vw], frames)
            }
        };
        if out.visual_shape.is_empty() {
            out.visual_shape = shape;
        } else if out.visual_shape != shape {
            return Err(Error::Dataset("mixed image and event samples".into()));
        }
        out.visual.push(pixels.into_iter().map(|v| v as f32).collect());
        out.labels.push(s.label);
    }
    if out.visual_shape.is_empty() {
        out.visual_shape = vec![vc, vh, vw];
    }
    Ok(out)
}
