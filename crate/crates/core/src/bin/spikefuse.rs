use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use spikefuse::checkpoint::{Checkpoint, CheckpointMeta};
use spikefuse::config::RunConfig;
use spikefuse::data::{encode, load_dataset, save_dataset, synth_dataset, Dataset, NoiseConfig, NoiseTarget, SynthConfig};
use spikefuse::model::{FusionMode, Model, ModelConfig};
use spikefuse::report;
use spikefuse::train::{evaluate, evaluate_dataset, model_gradcheck, snr_sweep, train, Metrics};
use spikefuse::{Error, Result};

#[derive(Parser)]
#[command(name = "spikefuse", version, about = "Audio-visual spiking transformer with cross-modal residual fusion")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Baseline,
    Scmrl,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Audio,
    Visual,
    Both,
}

impl From<TargetArg> for NoiseTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Audio => NoiseTarget::Audio,
            TargetArg::Visual => NoiseTarget::Visual,
            TargetArg::Both => NoiseTarget::Both,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write checkpoint, metrics CSV and plots.
    Train {
        /// JSON run config; the desk preset when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Drop the semantic alignment loss.
        #[arg(long)]
        no_sao: bool,
        #[arg(long)]
        alpha: Option<f64>,
        /// Seeds both initialization and batch order.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Dataset directory, overriding the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
    },
    /// Accuracy of a checkpoint on its test split, optionally under noise.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long, value_enum, default_value = "both")]
        noise_target: TargetArg,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        /// Evaluate every sample of this directory instead of the test split.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Test accuracy over a list of SNR values.
    Sweep {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20,30")]
        snrs: Vec<f64>,
        #[arg(long, value_enum, default_value = "both")]
        noise_target: TargetArg,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory for sweep.csv and sweep.svg.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the relaxed model's gradients in f64.
    Gradcheck {
        /// Model config to check; a T=2, D=8 model when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        batch: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Seeds both initialization and the random inputs.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a synthetic audio-visual dataset to disk.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        /// Samples per class.
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one model per fusion strength and report test accuracy.
    AlphaSweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5,2")]
        alphas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::desk()),
    }
}

fn print_metrics(m: &Metrics, names: &[String]) {
    println!("accuracy {:.4} ({} samples)", m.accuracy, m.count);
    for (c, acc) in m.per_class_accuracy.iter().enumerate() {
        let name = names.get(c).map_or("?", String::as_str);
        match acc {
            Some(a) => println!("  class {c} {name}: {a:.4}"),
            None => println!("  class {c} {name}: no samples"),
        }
    }
}

fn run_train(cfg: RunConfig, out: &Path) -> Result<f64> {
    cfg.validate()?;
    let ds = cfg.data.load()?;
    let (tr, te) = cfg.data.split(ds.len());
    info!("dataset: {} samples, {} train / {} test", ds.len(), tr.len(), te.len());
    let train_set = encode(&ds, &tr, &cfg.model, &cfg.data.audio, None)?;
    let test_set = encode(&ds, &te, &cfg.model, &cfg.data.audio, cfg.noise.as_ref())?;
    let model = Model::<f32>::new(cfg.model.clone())?;
    let state = train(&model, &train_set, Some(&test_set), &cfg.train, |_| {})?;
    let metrics = evaluate(&model, &test_set)?;
    print_metrics(&metrics, &ds.class_names);

    let meta = CheckpointMeta {
        model: cfg.model.clone(),
        train: cfg.train,
        data: cfg.data.clone(),
        epoch: state.epochs_run,
        adam_step: state.opt.t,
        history: state.history.clone(),
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    Checkpoint::capture(&model, Some(&state.opt), meta).save(&out.join("model.ckpt"))?;
    report::write_text(&out.join("config.json"), &cfg.to_json()?)?;
    report::write_text(&out.join("metrics.csv"), &report::metrics_csv(&state.history))?;
    report::write_text(&out.join("loss.svg"), &report::loss_plot(&state.history))?;
    report::write_text(&out.join("accuracy.svg"), &report::accuracy_plot(&state.history))?;
    println!("wrote {}", out.display());
    Ok(metrics.accuracy)
}

/// Dataset and evaluation rows for a checkpoint: its own test split, or all
/// of `data` when given.
fn eval_rows(ckpt: &Checkpoint, data: Option<&Path>) -> Result<(Dataset, Vec<usize>)> {
    match data {
        Some(dir) => {
            let ds = load_dataset(dir)?;
            let rows = (0..ds.len()).collect();
            Ok((ds, rows))
        }
        None => {
            let ds = ckpt.meta.data.load()?;
            let (_, test) = ckpt.meta.data.split(ds.len());
            Ok((ds, test))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train {
            config,
            mode,
            no_sao,
            alpha,
            seed,
            epochs,
            data,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(m) = mode {
                cfg.model.mode = match m {
                    ModeArg::Baseline => FusionMode::Baseline,
                    ModeArg::Scmrl => FusionMode::Scmrl,
                };
            }
            if no_sao {
                cfg.model.sao = false;
            }
            if let Some(a) = alpha {
                cfg.model.fusion.alpha = a;
            }
            if let Some(s) = seed {
                cfg.model.seed = s;
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if data.is_some() {
                cfg.data.root = data;
            }
            run_train(cfg, &out)?;
        }
        Cmd::Eval {
            ckpt,
            snr,
            noise_target,
            noise_seed,
            data,
        } => {
            let ck = Checkpoint::load(&ckpt)?;
            let model = ck.build_model::<f32>()?;
            let (ds, rows) = eval_rows(&ck, data.as_deref())?;
            let noise = snr.map(|snr_db| NoiseConfig {
                snr_db,
                target: noise_target.into(),
                seed: noise_seed,
            });
            let m = evaluate_dataset(&model, &ds, &rows, &ck.meta.data.audio, noise.as_ref())?;
            print_metrics(&m, &ds.class_names);
        }
        Cmd::Sweep {
            ckpt,
            snrs,
            noise_target,
            noise_seed,
            data,
            out,
        } => {
            let ck = Checkpoint::load(&ckpt)?;
            let model = ck.build_model::<f32>()?;
            let (ds, rows) = eval_rows(&ck, data.as_deref())?;
            let rows = snr_sweep(&model, &ds, &rows, &ck.meta.data.audio, &snrs, noise_target.into(), noise_seed)?;
            let csv = report::sweep_csv(&rows);
            print!("{csv}");
            if let Some(dir) = out {
                report::write_text(&dir.join("sweep.csv"), &csv)?;
                report::write_text(&dir.join("sweep.svg"), &report::sweep_plot(&rows))?;
            }
        }
        Cmd::Gradcheck {
            config,
            batch,
            step,
            tolerance,
            seed,
        } => {
            let mut model = match config {
                Some(p) => RunConfig::load(&p)?.model,
                None => ModelConfig::tiny(),
            };
            model.relaxed = true;
            if let Some(s) = seed {
                model.seed = s;
            }
            let start = std::time::Instant::now();
            let report = model_gradcheck(&model, batch, model.seed, step)?;
            for p in &report.params {
                println!("{:<48} rel {:.3e} abs {:.3e}", p.name, p.max_relative_error, p.max_abs_error);
            }
            let ok = report.max_relative_error < tolerance;
            println!(
                "{} coordinates, max relative error {:.3e}, {:.1}s: {}",
                report.coordinates,
                report.max_relative_error,
                start.elapsed().as_secs_f64(),
                if ok { "ok" } else { "FAILED" }
            );
            if !ok {
                return Err(Error::InvalidArgument(format!("gradient check above tolerance {tolerance}")));
            }
        }
        Cmd::Synth { out, classes, n, seed } => {
            let cfg = SynthConfig {
                classes,
                per_class: n,
                seed,
                ..SynthConfig::default()
            };
            let ds = synth_dataset(&cfg)?;
            save_dataset(&ds, &out)?;
            println!("wrote {} samples in {} classes to {}", ds.len(), classes, out.display());
        }
        Cmd::AlphaSweep { config, alphas, out } => {
            let base = load_config(config.as_deref())?;
            let dir = out.unwrap_or_else(|| PathBuf::from("runs/alpha"));
            let mut csv = String::from("alpha,accuracy\n");
            for a in alphas {
                let mut cfg = base.clone();
                cfg.model.fusion.alpha = a;
                let acc = run_train(cfg, &dir.join(format!("alpha_{a}")))?;
                csv.push_str(&format!("{a},{acc}\n"));
            }
            print!("{csv}");
            report::write_text(&dir.join("alpha.csv"), &csv)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(n) = std::env::var("SPIKEFUSE_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => std::env::set_var("MATMUL_NUM_THREADS", n.to_string()),
            _ => warn!("ignoring SPIKEFUSE_THREADS={n:?}"),
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
