//! Toy-scale training: packed (elastic) and fixed-length baseline regimes,
//! optional mixed-resolution compression, and length/resolution sweeps.

mod task;

use ndarray::{s, Array2};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use task::{Factor, Sample, SampleSource, Split, TaskKind, TaskSpec};

use crate::encoder::{backward, cross_entropy, encoder_forward, fixed_forward, FixedSample, ModelParams};
use crate::packing::{pack, packed_stats, PackingStats, TokenSequence};
use crate::spectrogram::{patchify, PatchGrid};
use crate::{Error, Real, Result};

/// Frame-shift multipliers 1.0, 1.2, …, 4.0.
pub fn fshift_factors() -> Vec<f64> {
    (0..16).map(|i| 1.0 + 0.2 * i as f64).map(|c| (c * 10.0).round() / 10.0).collect()
}

/// Integer average-pool widths.
pub const AVGPOOL_FACTORS: [usize; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "factors", rename_all = "snake_case")]
pub enum Compression {
    None,
    Fshift(Vec<f64>),
    Avgpool(Vec<usize>),
}

impl Compression {
    pub fn validate(&self) -> Result<()> {
        match self {
            Compression::None => Ok(()),
            Compression::Fshift(set) => {
                let allowed = fshift_factors();
                if set.is_empty() || set.iter().any(|c| !allowed.iter().any(|a| (a - c).abs() < 1e-9)) {
                    return Err(Error::InvalidArgument(format!(
                        "frame-shift factors must be a non-empty subset of {allowed:?}"
                    )));
                }
                Ok(())
            }
            Compression::Avgpool(set) => {
                if set.is_empty() || set.iter().any(|c| !AVGPOOL_FACTORS.contains(c)) {
                    return Err(Error::InvalidArgument(
                        "average-pool factors must be a non-empty subset of {1,2,3,4}".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TrainMode {
    /// Native lengths, packed rows, masked attention pooling.
    Elastic,
    /// Every sample trimmed or zero-padded to `frames`, read out by a prepended token.
    Fixed { frames: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    /// Samples per optimizer step, packed together.
    pub packing_batch: usize,
    pub budget: usize,
    pub compression: Compression,
    pub mode: TrainMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 10,
            packing_batch: 12,
            budget: crate::DEFAULT_BUDGET,
            compression: Compression::None,
            mode: TrainMode::Elastic,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate {} is invalid", self.lr)));
        }
        if self.packing_batch == 0 || self.budget == 0 {
            return Err(Error::InvalidArgument("packing batch and budget must be positive".into()));
        }
        if let TrainMode::Fixed { frames: 0 } = self.mode {
            return Err(Error::InvalidArgument("fixed length must be positive".into()));
        }
        self.compression.validate()
    }
}

/// Uniform draw from the configured compression set.
pub fn sample_compression<R: Rng>(compression: &Compression, rng: &mut R) -> Factor {
    match compression {
        Compression::None => Factor::None,
        Compression::Fshift(set) => Factor::Fshift(*set.choose(rng).expect("validated non-empty")),
        Compression::Avgpool(set) => Factor::Avgpool(*set.choose(rng).expect("validated non-empty")),
    }
}

/// Keeps the first `len` tokens or appends zero tokens up to `len`.
///
/// Appended tokens carry coordinate `(0, 0)` but no position embedding: they are plain zeros.
pub fn trim_or_pad<T: Real>(seq: &TokenSequence<T>, len: usize) -> TokenSequence<T> {
    let keep = seq.len().min(len);
    let mut tokens = Array2::zeros((len, seq.tokens.ncols()));
    tokens.slice_mut(s![..keep, ..]).assign(&seq.tokens.slice(s![..keep, ..]));
    let mut coords = seq.coords[..keep].to_vec();
    coords.resize(len, (0, 0));
    TokenSequence {
        tokens,
        coords,
        sample_id: seq.sample_id.clone(),
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: ModelParams<T>,
    v: ModelParams<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ModelParams<T>, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) {
        self.step += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(self.step));
        let c2 = T::lit(1.0 - self.beta2.powi(self.step));
        let lr = T::lit(self.lr);
        let eps = T::lit(self.eps);
        let one = T::one();
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gi;
                v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
                let mhat = m.data[i] / c1;
                let vhat = v.data[i] / c2;
                p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Patch grid of one sample at a given compression.
pub fn prepare_grid(task: &TaskSpec, sample: &Sample, factor: Factor, patch: usize) -> Result<PatchGrid> {
    let spec = task.featurize(sample, factor)?;
    patchify(&spec, patch, sample.id.clone())
}

/// Token count of a baseline input of `frames` frames.
pub fn fixed_tokens(frames: usize, freq_patches: usize, patch: usize) -> usize {
    (frames / patch) * freq_patches
}

#[derive(Debug, Clone)]
pub struct BatchResult<T> {
    pub loss: f64,
    pub grads: ModelParams<T>,
    pub stats: PackingStats,
    pub correct: usize,
}

/// Forward, mean cross-entropy and backward for one optimizer batch.
pub fn batch_gradient<T: Real>(
    params: &ModelParams<T>,
    grids: &[PatchGrid],
    labels: &[usize],
    mode: TrainMode,
    budget: usize,
) -> Result<BatchResult<T>> {
    let (trace, stats) = match mode {
        TrainMode::Elastic => {
            let batch = pack::<T, _>(grids, budget)?;
            let stats = packed_stats(&batch.layout);
            (encoder_forward(&batch, params)?, stats)
        }
        TrainMode::Fixed { frames } => {
            let p = params.config.patch_size;
            let mut stats = PackingStats::default();
            let samples: Vec<FixedSample<T>> = grids
                .iter()
                .map(|g| {
                    let len = fixed_tokens(frames, g.freq_patches, p);
                    stats = stats.merge(crate::packing::fixed_length_stats(&[g.len()], len));
                    FixedSample::from_grid(g, len)
                })
                .collect();
            (fixed_forward(&samples, params)?, stats)
        }
    };
    let (loss, dlogits) = cross_entropy(&trace.logits, labels)?;
    let grads = backward(&trace, params, &dlogits);
    let correct = count_correct(&trace.logits, labels);
    Ok(BatchResult {
        loss,
        grads,
        stats,
        correct,
    })
}

fn count_correct<T: Real>(logits: &Array2<T>, labels: &[usize]) -> usize {
    logits
        .outer_iter()
        .zip(labels)
        .filter(|(row, &label)| argmax(row.as_slice().unwrap()) == label)
        .count()
}

fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub pad_ratio: f64,
    pub cut_ratio: f64,
}

/// Model, optimizer and sampling state of one training run.
pub struct Trainer<T> {
    pub params: ModelParams<T>,
    pub optimizer: Adam<T>,
    pub config: TrainConfig,
    pub task: TaskSpec,
    rng: ChaCha8Rng,
    step: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(params: ModelParams<T>, config: TrainConfig, task: TaskSpec) -> Result<Self> {
        config.validate()?;
        task.validate()?;
        if matches!(config.compression, Compression::Fshift(_))
            && matches!(task.kind, TaskKind::LateSignal { .. })
        {
            return Err(Error::InvalidArgument(
                "frame-shift compression needs a waveform task".into(),
            ));
        }
        let optimizer = Adam::new(&params, &config);
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6169_6e65);
        Ok(Self {
            params,
            optimizer,
            config,
            task,
            rng,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One optimizer step on an explicit group of samples.
    pub fn train_step(&mut self, samples: &[&Sample]) -> Result<StepLog> {
        let p = self.params.config.patch_size;
        let mut grids = Vec::with_capacity(samples.len());
        for s in samples {
            let factor = sample_compression(&self.config.compression, &mut self.rng);
            let grid = prepare_grid(&self.task, s, factor, p)?;
            grids.push(grid);
        }
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        let result = batch_gradient(&self.params, &grids, &labels, self.config.mode, self.config.budget)?;
        if !result.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                loss: result.loss,
            });
        }
        self.optimizer.step(&mut self.params, &result.grads);
        let log = StepLog {
            step: self.step,
            loss: result.loss,
            lr: self.optimizer.lr,
            pad_ratio: result.stats.pad_ratio(),
            cut_ratio: result.stats.cut_ratio(),
        };
        self.step += 1;
        Ok(log)
    }

    /// Shuffles the data and steps through it in packing batches.
    pub fn train_epoch(&mut self, data: &[Sample]) -> Result<Vec<StepLog>> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut logs = Vec::new();
        for chunk in order.chunks(self.config.packing_batch) {
            let group: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            logs.push(self.train_step(&group)?);
        }
        Ok(logs)
    }
}

/// Mean loss of an epoch's step logs.
pub fn mean_loss(logs: &[StepLog]) -> f64 {
    logs.iter().map(|l| l.loss).sum::<f64>() / logs.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    /// Evaluation length in frames, or the compression factor.
    pub setting: f64,
    pub accuracy: f64,
    pub samples: usize,
}

const EVAL_GROUP: usize = 32;

fn accuracy_on_grids<T: Real>(
    params: &ModelParams<T>,
    mode: TrainMode,
    grids: &[PatchGrid],
    labels: &[usize],
    budget: usize,
    fixed_len: Option<usize>,
) -> Result<usize> {
    let mut correct = 0;
    for (g, l) in grids.chunks(EVAL_GROUP).zip(labels.chunks(EVAL_GROUP)) {
        let logits = match mode {
            TrainMode::Elastic => encoder_forward(&pack::<T, _>(g, budget)?, params)?.logits,
            TrainMode::Fixed { .. } => {
                let len = fixed_len.expect("fixed length");
                let samples: Vec<FixedSample<T>> = g.iter().map(|x| FixedSample::from_grid(x, len)).collect();
                fixed_forward(&samples, params)?.logits
            }
        };
        correct += count_correct(&logits, l);
    }
    Ok(correct)
}

/// Top-1 accuracy at each evaluation length (frames).
///
/// Elastic models see each sample cut to the length only when it is longer;
/// baselines trim or pad every sample to exactly that length.
pub fn evaluate_lengths<T: Real>(
    params: &ModelParams<T>,
    mode: TrainMode,
    task: &TaskSpec,
    data: &[Sample],
    lengths: &[usize],
    budget: usize,
) -> Result<Vec<SweepPoint>> {
    let p = params.config.patch_size;
    let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
    let native: Vec<_> = data
        .iter()
        .map(|s| task.featurize(s, Factor::None))
        .collect::<Result<_>>()?;
    let freq_patches = task.n_mels / p;
    lengths
        .iter()
        .map(|&len| {
            let (grids, fixed_len) = match mode {
                TrainMode::Elastic => {
                    let grids = data
                        .iter()
                        .zip(&native)
                        .map(|(s, spec)| patchify(&spec.truncated(len), p, s.id.clone()))
                        .collect::<Result<Vec<_>>>()?;
                    (grids, None)
                }
                TrainMode::Fixed { .. } => {
                    let grids = data
                        .iter()
                        .zip(&native)
                        .map(|(s, spec)| patchify(spec, p, s.id.clone()))
                        .collect::<Result<Vec<_>>>()?;
                    (grids, Some(fixed_tokens(len, freq_patches, p)))
                }
            };
            let correct = accuracy_on_grids(params, mode, &grids, &labels, budget, fixed_len)?;
            Ok(SweepPoint {
                setting: len as f64,
                accuracy: correct as f64 / data.len() as f64,
                samples: data.len(),
            })
        })
        .collect()
}

/// Top-1 accuracy at each compression factor. Baselines keep their training input size.
pub fn evaluate_factors<T: Real>(
    params: &ModelParams<T>,
    mode: TrainMode,
    task: &TaskSpec,
    data: &[Sample],
    factors: &[Factor],
    budget: usize,
) -> Result<Vec<SweepPoint>> {
    let p = params.config.patch_size;
    let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
    let fixed_len = match mode {
        TrainMode::Fixed { frames } => Some(fixed_tokens(frames, task.n_mels / p, p)),
        TrainMode::Elastic => None,
    };
    factors
        .iter()
        .map(|&factor| {
            let grids = data
                .iter()
                .map(|s| prepare_grid(task, s, factor, p))
                .collect::<Result<Vec<_>>>()?;
            let correct = accuracy_on_grids(params, mode, &grids, &labels, budget, fixed_len)?;
            let setting = match factor {
                Factor::None => 1.0,
                Factor::Fshift(c) => c,
                Factor::Avgpool(c) => c as f64,
            };
            Ok(SweepPoint {
                setting,
                accuracy: correct as f64 / data.len() as f64,
                samples: data.len(),
            })
        })
        .collect()
}
