//! C ABI for spikefuse.
//!
//! Every fallible function returns an [`SfStatus`]. On failure a description
//! is available from [`sf_last_error`] on the same thread until the next
//! failing call. Models are opaque [`SfModel`] handles released with
//! [`sf_model_free`]. Buffers are caller-allocated; lengths are element
//! counts, not bytes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use spikefuse::checkpoint::Checkpoint;
use spikefuse::data::{audio_config_for, inject_noise, NoiseConfig};
use spikefuse::encoding::{audio_to_logspec, AudioPipelineConfig};
use spikefuse::losses::{sao_loss, SaoConfig};
use spikefuse::model::Model;
use spikefuse::neuron::{lif_forward, LifConfig};
use spikefuse::tensor::{no_grad, BnMode};
use spikefuse::{Error, Tensor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Io = 4,
    CorruptCheckpoint = 5,
    VersionMismatch = 6,
    Config = 7,
    BufferTooSmall = 8,
    Numeric = 9,
    Panic = 10,
    Internal = 11,
}

/// A loaded model in inference mode.
pub struct SfModel {
    model: Model<f32>,
    audio: AudioPipelineConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SfStatus {
    match e {
        Error::ShapeMismatch { .. } | Error::InvalidAxis { .. } => SfStatus::ShapeMismatch,
        Error::Io { .. } => SfStatus::Io,
        Error::CorruptCheckpoint(_) => SfStatus::CorruptCheckpoint,
        Error::CheckpointVersion { .. } => SfStatus::VersionMismatch,
        Error::Config(_) | Error::CheckpointMismatch(_) | Error::Json(_) => SfStatus::Config,
        Error::NonFiniteLoss { .. } => SfStatus::Numeric,
        Error::InvalidArgument(_)
        | Error::EmptyInput(_)
        | Error::LabelOutOfRange { .. }
        | Error::WaveformTooShort { .. }
        | Error::EventOutOfRange { .. }
        | Error::KernelTooLarge { .. }
        | Error::WindowTooLarge { .. }
        | Error::DegenerateBatch { .. }
        | Error::NonScalarLoss(_) => SfStatus::InvalidArgument,
        _ => SfStatus::Internal,
    }
}

struct Fail(SfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SfStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(SfStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len < need {
        return Err(Fail(SfStatus::BufferTooSmall, format!("{what} holds {len}, need {need}")));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    non_null(p, what)?;
    Ok(slice::from_raw_parts_mut(p, need))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SfStatus::InvalidArgument, msg.into())
}

/// Message of the last failure on this thread, or null. Owned by the library;
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file into a new model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_model_load(path: *const c_char, out: *mut *mut SfModel) -> SfStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not utf-8"))?;
        let ckpt = Checkpoint::load(Path::new(path))?;
        let model = ckpt.build_model::<f32>()?;
        let audio = audio_config_for(&model.cfg, &ckpt.meta.data.audio);
        *out = Box::into_raw(Box::new(SfModel { model, audio }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`sf_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_model_free(model: *mut SfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn model_ref<'a>(m: *const SfModel) -> Result<&'a SfModel, Fail> {
    non_null(m, "model")?;
    Ok(&*m)
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_model_num_classes(model: *const SfModel, out: *mut usize) -> SfStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = model_ref(model)?.model.cfg.classes;
        Ok(())
    })
}

/// Simulation time steps `T`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_model_time_steps(model: *const SfModel, out: *mut usize) -> SfStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = model_ref(model)?.model.cfg.time_steps;
        Ok(())
    })
}

/// Per-sample audio input shape `[C, H, W]`.
///
/// # Safety
/// `model` must be a live handle and `out` must hold 3 values.
#[no_mangle]
pub unsafe extern "C" fn sf_model_audio_shape(model: *const SfModel, out: *mut usize) -> SfStatus {
    guard(|| {
        let cfg = &model_ref(model)?.model.cfg;
        let dst = output(out, 3, 3, "out")?;
        dst.copy_from_slice(&[cfg.audio.channels, cfg.audio.input_hw[0], cfg.audio.input_hw[1]]);
        Ok(())
    })
}

/// Per-sample visual input shape `[C, H, W]`.
///
/// # Safety
/// `model` must be a live handle and `out` must hold 3 values.
#[no_mangle]
pub unsafe extern "C" fn sf_model_visual_shape(model: *const SfModel, out: *mut usize) -> SfStatus {
    guard(|| {
        let cfg = &model_ref(model)?.model.cfg;
        let dst = output(out, 3, 3, "out")?;
        dst.copy_from_slice(&[cfg.visual.channels, cfg.visual.input_hw[0], cfg.visual.input_hw[1]]);
        Ok(())
    })
}

/// Waveform to the model's audio input `[1, H, W]` using the preprocessing
/// stored in the checkpoint.
///
/// # Safety
/// `wave` must hold `wave_len` values and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn sf_model_audio_input(
    model: *const SfModel,
    wave: *const f64,
    wave_len: usize,
    sample_rate: u32,
    out: *mut f32,
    out_len: usize,
) -> SfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = input(wave, wave_len, "wave")?;
        let spec = audio_to_logspec::<f32>(x, sample_rate, &m.audio)?;
        output(out, out_len, spec.numel(), "out")?.copy_from_slice(&spec.values());
        Ok(())
    })
}

/// Eval-mode logits `[batch, classes]`.
///
/// `audio` is `[batch, C, H, W]`. `visual` is `[batch, C, H, W]` when
/// `visual_frames` is 0 (repeated over time), or `[batch, T, C, H, W]` per-step
/// frames otherwise. All arrays are row-major.
///
/// # Safety
/// Pointers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn sf_model_predict(
    model: *const SfModel,
    batch: usize,
    audio: *const f32,
    audio_len: usize,
    visual: *const f32,
    visual_len: usize,
    visual_frames: i32,
    logits: *mut f32,
    logits_len: usize,
) -> SfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let cfg = &m.model.cfg;
        if batch == 0 {
            return Err(invalid("batch must be positive"));
        }
        let a_shape = [batch, cfg.audio.channels, cfg.audio.input_hw[0], cfg.audio.input_hw[1]];
        let per_frame = cfg.visual.channels * cfg.visual.input_hw[0] * cfg.visual.input_hw[1];
        let t = cfg.time_steps;
        let v_need = if visual_frames != 0 { batch * t * per_frame } else { batch * per_frame };
        let a_need: usize = a_shape.iter().product();
        // an absent modality may pass an empty buffer
        let a_need = if cfg.modalities.audio() { a_need } else { 0 };
        let v_need = if cfg.modalities.visual() { v_need } else { 0 };
        if audio_len != a_need || visual_len != v_need {
            return Err(Fail(
                SfStatus::ShapeMismatch,
                format!("expected {a_need} audio and {v_need} visual values, got {audio_len} and {visual_len}"),
            ));
        }
        let a = input(audio, audio_len, "audio")?;
        let v = input(visual, visual_len, "visual")?;
        let a_t = if a_need > 0 {
            Tensor::from_vec(&a_shape, a.to_vec())?
        } else {
            Tensor::zeros(&[batch, 1, 1, 1])
        };
        let v_t = if v_need == 0 {
            Tensor::zeros(&[batch, 1, 1, 1])
        } else if visual_frames != 0 {
            let mut data = Vec::with_capacity(v_need);
            for ti in 0..t {
                for b in 0..batch {
                    let off = (b * t + ti) * per_frame;
                    data.extend_from_slice(&v[off..off + per_frame]);
                }
            }
            Tensor::from_vec(
                &[t, batch, cfg.visual.channels, cfg.visual.input_hw[0], cfg.visual.input_hw[1]],
                data,
            )?
        } else {
            Tensor::from_vec(
                &[batch, cfg.visual.channels, cfg.visual.input_hw[0], cfg.visual.input_hw[1]],
                v.to_vec(),
            )?
        };
        let out = no_grad(|| m.model.forward(&a_t, &v_t, BnMode::Eval))?;
        let dst = output(logits, logits_len, batch * cfg.classes, "logits")?;
        dst.copy_from_slice(&out.logits.values());
        Ok(())
    })
}

/// Log spectrogram resized to `[out_h, out_w]` with default STFT settings
/// (22.05 kHz, 512-point FFT, hop 353).
///
/// # Safety
/// `wave` must hold `wave_len` values and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn sf_audio_logspec(
    wave: *const f64,
    wave_len: usize,
    sample_rate: u32,
    out_h: usize,
    out_w: usize,
    out: *mut f64,
    out_len: usize,
) -> SfStatus {
    guard(|| {
        let x = input(wave, wave_len, "wave")?;
        let cfg = AudioPipelineConfig {
            target_hw: [out_h, out_w],
            ..AudioPipelineConfig::default()
        };
        let spec = audio_to_logspec::<f64>(x, sample_rate, &cfg)?;
        output(out, out_len, spec.numel(), "out")?.copy_from_slice(&spec.values());
        Ok(())
    })
}

/// LIF spikes for `[steps, width]` input currents starting from rest.
///
/// # Safety
/// `input` and `spikes` must each hold `steps * width` values.
#[no_mangle]
pub unsafe extern "C" fn sf_lif_forward(
    input_currents: *const f64,
    steps: usize,
    width: usize,
    tau: f64,
    v_th: f64,
    spikes: *mut f64,
) -> SfStatus {
    guard(|| {
        let n = steps.checked_mul(width).ok_or_else(|| invalid("steps * width overflows"))?;
        if n == 0 {
            return Err(invalid("steps and width must be positive"));
        }
        let x = input(input_currents, n, "input")?;
        let cfg = LifConfig {
            tau,
            v_th,
            ..LifConfig::default()
        };
        cfg.validate()?;
        let s = lif_forward(&Tensor::from_vec(&[steps, width], x.to_vec())?, &cfg)?;
        output(spikes, n, n, "spikes")?.copy_from_slice(&s.values());
        Ok(())
    })
}

/// Alignment loss between audio and visual features `[T, B, D]`. Features are
/// L2-normalized along `D` first.
///
/// # Safety
/// `audio` and `visual` must each hold `t * b * d` values; `loss` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_sao_loss(
    audio: *const f64,
    visual: *const f64,
    t: usize,
    b: usize,
    d: usize,
    temperature: f64,
    symmetric: i32,
    loss: *mut f64,
) -> SfStatus {
    guard(|| {
        non_null(loss, "loss")?;
        let n = t.checked_mul(b).and_then(|v| v.checked_mul(d)).ok_or_else(|| invalid("shape overflows"))?;
        if n == 0 {
            return Err(invalid("t, b and d must be positive"));
        }
        let fa = Tensor::from_vec(&[t, b, d], input(audio, n, "audio")?.to_vec())?.l2_normalize()?;
        let fv = Tensor::from_vec(&[t, b, d], input(visual, n, "visual")?.to_vec())?.l2_normalize()?;
        let cfg = SaoConfig {
            temperature,
            symmetric: symmetric != 0,
        };
        *loss = no_grad(|| sao_loss(&fa, &fv, &cfg))?.item();
        Ok(())
    })
}

/// Adds Gaussian noise at `snr_db` relative to the power of the whole array.
/// `out` may alias `x`.
///
/// # Safety
/// `x` and `out` must each hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn sf_inject_noise(x: *const f64, len: usize, snr_db: f64, seed: u64, out: *mut f64) -> SfStatus {
    guard(|| {
        if len == 0 {
            return Err(invalid("len must be positive"));
        }
        if snr_db.is_nan() {
            return Err(invalid("snr_db is NaN"));
        }
        let src = input(x, len, "x")?.to_vec();
        let cfg = NoiseConfig {
            snr_db,
            seed,
            ..NoiseConfig::default()
        };
        let noisy = inject_noise(&Tensor::from_vec(&[len], src)?, &cfg)?;
        output(out, len, len, "out")?.copy_from_slice(&noisy.values());
        Ok(())
    })
}
