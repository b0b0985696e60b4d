//! Training loop, evaluation and noise sweeps.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{encode, Dataset, Encoded, NoiseConfig, NoiseTarget};
use crate::encoding::AudioPipelineConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::nn::named_parameters;
use crate::optim::{Adam, AdamConfig};
use crate::tensor::{grad_check, no_grad, BnMode, Float, GradCheckReport, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Stop after the first epoch whose training accuracy reaches this value.
    pub stop_at_train_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            epochs: 100,
            batch_size: 128,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            stop_at_train_acc: None,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self, sao: bool) -> Result<()> {
        if !(self.lr >= 0.0) {
            return Err(Error::Config(format!("lr must be >= 0, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be >= 2 for batch statistics{}, got {}",
                if sao { " and SAO negatives" } else { "" },
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ce: f64,
    pub sao: f64,
    pub total: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

/// Optimizer and history after [`train`].
pub struct TrainState<F: Float> {
    pub opt: Adam<F>,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows<F: Float>(logits: &Tensor<F>) -> Vec<usize> {
    let c = *logits.shape().last().unwrap_or(&1);
    logits
        .values()
        .chunks(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, F::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Shuffled mini-batches of `n` rows for `epoch`; a trailing batch with fewer
/// than two rows is dropped.
pub fn epoch_batches(n: usize, batch: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    idx.shuffle(&mut rng);
    idx.chunks(batch.max(1)).filter(|c| c.len() >= 2).map(<[usize]>::to_vec).collect()
}

/// Runs Adam over `train` for `cfg.epochs` epochs, evaluating on `test` after
/// each epoch when given. `on_epoch` sees every record as it is produced.
pub fn train<F: Float>(
    model: &Model<F>,
    train: &Encoded,
    test: Option<&Encoded>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainState<F>> {
    let mut state = TrainState {
        opt: Adam::new(named_parameters(model), cfg.adam())?,
        epochs_run: 0,
        history: Vec::new(),
    };
    train_more(model, train, test, cfg, &mut state, &mut on_epoch)?;
    Ok(state)
}

/// Continues from `state.epochs_run` up to `cfg.epochs`.
pub fn train_more<F: Float>(
    model: &Model<F>,
    train: &Encoded,
    test: Option<&Encoded>,
    cfg: &TrainConfig,
    state: &mut TrainState<F>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<()> {
    cfg.validate(model.cfg.sao)?;
    if train.len() < 2 {
        return Err(Error::Dataset(format!("training split has {} samples, need >= 2", train.len())));
    }
    let opt = &mut state.opt;
    for epoch in state.epochs_run..cfg.epochs {
        let (mut ce, mut sao, mut total, mut correct, mut seen) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for (step, rows) in epoch_batches(train.len(), cfg.batch_size, cfg.seed, epoch).into_iter().enumerate() {
            let (a, v, labels) = train.batch::<F>(&rows)?;
            opt.zero_grad();
            let out = model.forward(&a, &v, BnMode::Train)?;
            let (loss, parts) = model.loss(&out, &labels)?;
            if !parts.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    ce: parts.ce,
                    sao: parts.sao,
                });
            }
            loss.backward()?;
            opt.step();
            let b = rows.len();
            ce += parts.ce * b as f64;
            sao += parts.sao * b as f64;
            total += parts.total * b as f64;
            correct += argmax_rows(&out.logits).iter().zip(&labels).filter(|(p, l)| p == l).count();
            seen += b;
        }
        let n = seen.max(1) as f64;
        let test_acc = test.filter(|t| !t.is_empty()).map(|t| evaluate(model, t).map(|m| m.accuracy)).transpose()?;
        let rec = EpochRecord {
            epoch: epoch + 1,
            ce: ce / n,
            sao: sao / n,
            total: total / n,
            train_acc: correct as f64 / n,
            test_acc,
        };
        log::info!(
            "epoch {} ce {:.4} sao {:.4} total {:.4} train_acc {:.4} test_acc {}",
            rec.epoch,
            rec.ce,
            rec.sao,
            rec.total,
            rec.train_acc,
            rec.test_acc.map_or("-".into(), |a| format!("{a:.4}"))
        );
        on_epoch(&rec);
        state.history.push(rec);
        state.epochs_run = epoch + 1;
        if cfg.stop_at_train_acc.is_some_and(|target| rec.train_acc >= target) {
            break;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub count: usize,
}

const EVAL_BATCH: usize = 64;

/// Eval-mode predictions for every row.
pub fn predict<F: Float>(model: &Model<F>, data: &Encoded) -> Result<Vec<usize>> {
    no_grad(|| {
        let rows: Vec<usize> = (0..data.len()).collect();
        let mut preds = Vec::with_capacity(data.len());
        for chunk in rows.chunks(EVAL_BATCH) {
            let (a, v, _) = data.batch::<F>(chunk)?;
            preds.extend(argmax_rows(&model.forward(&a, &v, BnMode::Eval)?.logits));
        }
        Ok(preds)
    })
}

pub fn evaluate<F: Float>(model: &Model<F>, data: &Encoded) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let classes = model.cfg.classes;
    let preds = predict(model, data)?;
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &l) in preds.iter().zip(&data.labels) {
        confusion[l][p] += 1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[c] as f64 / n as f64)
        })
        .collect();
    Ok(Metrics {
        accuracy: correct as f64 / data.len() as f64,
        per_class_accuracy,
        confusion,
        count: data.len(),
    })
}

/// Accuracy with noise at the given SNR applied to `target`, or clean when
/// `noise` is `None`.
pub fn evaluate_dataset<F: Float>(
    model: &Model<F>,
    ds: &Dataset,
    rows: &[usize],
    audio: &AudioPipelineConfig,
    noise: Option<&NoiseConfig>,
) -> Result<Metrics> {
    let enc = encode(ds, rows, &model.cfg, audio, noise)?;
    evaluate(model, &enc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub snr: f64,
    pub accuracy: f64,
}

/// One evaluation per SNR, all with the same noise seed and target.
pub fn snr_sweep<F: Float>(
    model: &Model<F>,
    ds: &Dataset,
    rows: &[usize],
    audio: &AudioPipelineConfig,
    snrs: &[f64],
    target: NoiseTarget,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    snrs.iter()
        .map(|&snr| {
            let noise = NoiseConfig { snr_db: snr, target, seed };
            let m = evaluate_dataset(model, ds, rows, audio, Some(&noise))?;
            Ok(SweepRow { snr, accuracy: m.accuracy })
        })
        .collect()
}

/// Finite-difference check of the full training objective in `f64` on a
/// random batch. Use with `relaxed = true` so every path is differentiable.
pub fn model_gradcheck(cfg: &ModelConfig, batch: usize, seed: u64, h: f64) -> Result<GradCheckReport> {
    use rand::Rng;
    let model = Model::<f64>::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input = |c: usize, [hh, ww]: [usize; 2]| {
        let v: Vec<f64> = (0..batch * c * hh * ww).map(|_| rng.gen::<f64>()).collect();
        Tensor::from_vec(&[batch, c, hh, ww], v)
    };
    let a = input(cfg.audio.channels, cfg.audio.input_hw)?;
    let v = input(cfg.visual.channels, cfg.visual.input_hw)?;
    let labels: Vec<usize> = (0..batch).map(|i| i % cfg.classes).collect();
    let params = named_parameters(&model);
    grad_check(
        &params,
        || {
            let out = model.forward(&a, &v, BnMode::Train)?;
            Ok(model.loss(&out, &labels)?.0)
        },
        h,
    )
}
