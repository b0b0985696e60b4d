use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikefuse::checkpoint::{Checkpoint, CheckpointMeta};
use spikefuse::config::{DataConfig, RunConfig};
use spikefuse::data::{class_frequency, encode, load_dataset, save_dataset, synth_dataset, NoiseTarget, SynthConfig, Visual};
use spikefuse::encoding::audio::stft_magnitude;
use spikefuse::encoding::AudioPipelineConfig;
use spikefuse::model::{FusionMode, Model, ModelConfig};
use spikefuse::tensor::{no_grad, BnMode};
use spikefuse::train::{evaluate, snr_sweep, TrainConfig};
use spikefuse::{Error, Tensor};

fn small_synth() -> SynthConfig {
    SynthConfig {
        classes: 3,
        per_class: 4,
        image_hw: [16, 16],
        duration_s: 0.1,
        ..SynthConfig::default()
    }
}

#[test]
fn stft_matches_direct_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (n_fft, hop) = (64, 24);
    let got = stft_magnitude(&x, n_fft, hop).unwrap();

    let pad = n_fft / 2;
    let n = x.len() as isize;
    let at = |i: isize| -> f64 {
        // reflect without repeating the edge sample
        let j = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
        x[j as usize]
    };
    let frames = 1 + (x.len() + 2 * pad - n_fft) / hop;
    assert_eq!(got.len(), frames);
    let mut worst = 0.0f64;
    for (f, row) in got.iter().enumerate() {
        assert_eq!(row.len(), n_fft / 2 + 1);
        for (k, &mag) in row.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for m in 0..n_fft {
                let w = 0.5 - 0.5 * (2.0 * PI * m as f64 / n_fft as f64).cos();
                let s = at((f * hop + m) as isize - pad as isize) * w;
                let ang = -2.0 * PI * (k * m) as f64 / n_fft as f64;
                re += s * ang.cos();
                im += s * ang.sin();
            }
            worst = worst.max((mag - (re * re + im * im).sqrt()).abs());
        }
    }
    assert!(worst < 1e-10, "max deviation {worst}");
}

#[test]
fn synthetic_tones_sit_at_their_class_frequency() {
    let ds = synth_dataset(&small_synth()).unwrap();
    assert_eq!(ds.len(), 12);
    for s in &ds.samples {
        let mag = stft_magnitude(&s.audio, 2048, 1024).unwrap();
        let row = &mag[mag.len() / 2];
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        let want = class_frequency(s.label) * 2048.0 / s.sample_rate as f64;
        assert!((peak as f64 - want).abs() <= 1.0, "label {} peak bin {peak}, expected ~{want:.1}", s.label);
    }
}

#[test]
fn dataset_round_trips_through_disk() {
    let ds = synth_dataset(&small_synth()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.class_names, ds.class_names);
    assert_eq!(back.len(), ds.len());
    for s in &ds.samples {
        let b = back.samples.iter().find(|b| b.id == s.id && b.label == s.label).expect("sample present");
        assert_eq!(b.sample_rate, s.sample_rate);
        assert!(b.audio.iter().zip(&s.audio).all(|(p, q)| (p - q).abs() < 1e-6));
        match (&s.visual, &b.visual) {
            (Visual::Image { data: a, .. }, Visual::Image { data: c, .. }) => {
                assert!(a.iter().zip(c).all(|(p, q)| (p.clamp(0.0, 1.0) - q).abs() <= 0.5 / 255.0 + 1e-9));
            }
            _ => panic!("image expected"),
        }
    }
}

#[test]
fn loading_rejects_bad_directories() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Dataset(_))));
    assert!(load_dataset(&dir.path().join("missing")).is_err());
}

fn saved_tiny(dir: &std::path::Path) -> (std::path::PathBuf, Model<f32>, ModelConfig) {
    let cfg = ModelConfig::tiny();
    let model = Model::<f32>::new(cfg.clone()).unwrap();
    let meta = CheckpointMeta {
        model: cfg.clone(),
        train: TrainConfig::default(),
        data: DataConfig::default(),
        epoch: 0,
        adam_step: 0,
        history: Vec::new(),
    };
    let path = dir.join("tiny.ckpt");
    Checkpoint::capture(&model, None, meta).save(&path).unwrap();
    (path, model, cfg)
}

#[test]
fn checkpoint_rejects_damage() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _, cfg) = saved_tiny(dir.path());
    let bytes = std::fs::read(&path).unwrap();
    assert!(Checkpoint::from_bytes(&bytes).is_ok());

    for cut in [0, 4, 12, bytes.len() / 3, bytes.len() - 1] {
        assert!(
            matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::CorruptCheckpoint(_))),
            "truncated at {cut}"
        );
    }
    let mut flipped = bytes.clone();
    let mid = bytes.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::CorruptCheckpoint(_))));

    let mut newer = bytes.clone();
    newer[8..12].copy_from_slice(&7u32.to_le_bytes());
    assert!(matches!(Checkpoint::from_bytes(&newer), Err(Error::CheckpointVersion { found: 7, .. })));

    let other = Model::<f32>::new(ModelConfig { embed_dim: 16, ..cfg }).unwrap();
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    assert!(matches!(ck.restore(&other), Err(Error::CheckpointMismatch(_))));
}

#[test]
fn batch_rows_are_independent_in_eval() {
    let cfg = ModelConfig::tiny();
    let model = Model::<f32>::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut rand = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::<f32>::from_vec(shape, (0..n).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap()
    };
    let (a, v) = (rand(&[4, 1, 8, 8]), rand(&[4, 3, 8, 8]));
    let all = no_grad(|| model.forward(&a, &v, BnMode::Eval)).unwrap().logits.to_vec();
    let (av, vv) = (a.to_vec(), v.to_vec());
    for i in 0..4 {
        let ai = Tensor::from_vec(&[1, 1, 8, 8], av[i * 64..(i + 1) * 64].to_vec()).unwrap();
        let vi = Tensor::from_vec(&[1, 3, 8, 8], vv[i * 192..(i + 1) * 192].to_vec()).unwrap();
        let one = no_grad(|| model.forward(&ai, &vi, BnMode::Eval)).unwrap().logits.to_vec();
        for (c, &l) in one.iter().enumerate() {
            assert!((l - all[i * 3 + c]).abs() < 1e-5, "row {i} class {c}");
        }
    }
}

#[test]
fn sweep_has_one_row_per_snr_and_infinite_snr_is_clean() {
    let mut cfg = ModelConfig::tiny();
    cfg.audio.input_hw = [16, 16];
    cfg.visual.input_hw = [16, 16];
    let model = Model::<f32>::new(cfg.clone()).unwrap();
    let ds = synth_dataset(&small_synth()).unwrap();
    let rows: Vec<usize> = (0..ds.len()).collect();
    let audio = AudioPipelineConfig::default();
    let snrs = [f64::INFINITY, 20.0, 0.0];
    let sweep = snr_sweep(&model, &ds, &rows, &audio, &snrs, NoiseTarget::Both, 3).unwrap();
    assert_eq!(sweep.len(), snrs.len());
    assert!(sweep.iter().zip(snrs).all(|(r, s)| r.snr == s || (r.snr.is_infinite() && s.is_infinite())));
    let clean = evaluate(&model, &encode(&ds, &rows, &cfg, &audio, None).unwrap()).unwrap();
    assert_eq!(sweep[0].accuracy, clean.accuracy);
    assert!(sweep.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
}

#[test]
fn run_config_json_round_trip() {
    let mut cfg = RunConfig::desk();
    cfg.model.mode = FusionMode::Baseline;
    cfg.model.fusion.alpha = 0.75;
    let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
    assert_eq!(back, cfg);
    assert!(RunConfig::from_json(r#"{"model": {"embed_dimm": 8}}"#).is_err());
    let mut bad = RunConfig::desk();
    bad.train.batch_size = 1;
    assert!(bad.validate().is_err());
}
