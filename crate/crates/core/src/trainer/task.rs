//! Synthetic classification tasks standing in for variable-length audio corpora.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::spectrogram::{compress_avgpool, compress_fshift, MelConfig, Spectrogram, Waveform};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    /// Spectrogram-domain noise whose final `signal_fraction` of frames carries a
    /// class-specific set of raised mel bins. Lengths are log-normal, clamped.
    LateSignal {
        median_frames: f64,
        sigma: f64,
        min_frames: usize,
        max_frames: usize,
        signal_fraction: f64,
        bins_per_class: usize,
        amplitude: f64,
    },
    /// Fixed-duration waveforms: one of four tone bands, steady or pulsed.
    Resolution { duration_s: f64, sample_rate: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub n_classes: usize,
    pub n_mels: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub seed: u64,
    pub kind: TaskKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleSource {
    Spectrogram(Spectrogram),
    Waveform(Waveform),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub source: SampleSource,
}

/// Temporal compression applied to one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Factor {
    None,
    Fshift(f64),
    Avgpool(usize),
}

const TONE_BANDS_HZ: [f64; 4] = [350.0, 900.0, 2000.0, 4500.0];
const PULSE_HZ: f64 = 4.0;
/// Log-mel standardization of the resolution task.
const RESOLUTION_MEAN: f64 = -2.0;
const RESOLUTION_STD: f64 = 4.0;

impl TaskSpec {
    /// Variable-length task: lengths log-normal around `median_frames`, clamped to 256..=3072.
    pub fn late_signal(n_classes: usize, median_frames: f64, sigma: f64, seed: u64) -> Self {
        Self {
            n_classes,
            n_mels: 32,
            n_train: 480,
            n_eval: 240,
            seed,
            kind: TaskKind::LateSignal {
                median_frames,
                sigma,
                min_frames: 256,
                max_frames: 3072,
                signal_fraction: 0.2,
                bins_per_class: 3,
                amplitude: 1.5,
            },
        }
    }

    /// Fixed-length task (2.56 s clips) for temporal-resolution sweeps; eight classes.
    pub fn resolution(seed: u64) -> Self {
        Self {
            n_classes: 8,
            n_mels: 32,
            n_train: 480,
            n_eval: 240,
            seed,
            kind: TaskKind::Resolution {
                duration_s: 2.56,
                sample_rate: 16000,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidArgument("a task needs at least two classes".into()));
        }
        match &self.kind {
            TaskKind::LateSignal {
                min_frames,
                max_frames,
                bins_per_class,
                ..
            } => {
                if min_frames > max_frames || *max_frames == 0 {
                    return Err(Error::InvalidArgument("empty length range".into()));
                }
                if bins_per_class * 2 > self.n_mels {
                    return Err(Error::InvalidArgument("too many signal bins per class".into()));
                }
            }
            TaskKind::Resolution { .. } => {
                if self.n_classes > 2 * TONE_BANDS_HZ.len() {
                    return Err(Error::InvalidArgument(format!(
                        "resolution task supports at most {} classes",
                        2 * TONE_BANDS_HZ.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Longest sample, in frames at the base resolution.
    pub fn max_frames(&self) -> usize {
        match &self.kind {
            TaskKind::LateSignal { max_frames, .. } => *max_frames,
            TaskKind::Resolution { duration_s, sample_rate } => MelConfig {
                n_mels: self.n_mels,
                ..MelConfig::default()
            }
            .frame_count((duration_s * *sample_rate as f64).round() as usize, *sample_rate),
        }
    }

    pub fn mel_config(&self) -> MelConfig {
        MelConfig {
            n_mels: self.n_mels,
            ..MelConfig::default()
        }
    }

    pub fn generate(&self, split: Split) -> Result<Vec<Sample>> {
        self.validate()?;
        let (n, salt, prefix) = match split {
            Split::Train => (self.n_train, 0x7261_696e, "train"),
            Split::Eval => (self.n_eval, 0x6576_616c, "eval"),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ salt);
        (0..n)
            .map(|i| {
                let label = i % self.n_classes;
                let source = match &self.kind {
                    TaskKind::LateSignal { .. } => {
                        SampleSource::Spectrogram(self.late_signal_sample(label, &mut rng)?)
                    }
                    TaskKind::Resolution { duration_s, sample_rate } => {
                        SampleSource::Waveform(tone_sample(label, *duration_s, *sample_rate, &mut rng)?)
                    }
                };
                Ok(Sample {
                    id: format!("{prefix}-{i:05}"),
                    label,
                    source,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(|mut v| {
                v.shuffle(&mut rng);
                v
            })
    }

    /// Mel bins raised by each class, fixed by the task seed.
    pub fn class_bins(&self) -> Vec<Vec<usize>> {
        let per_class = match &self.kind {
            TaskKind::LateSignal { bins_per_class, .. } => *bins_per_class,
            TaskKind::Resolution { .. } => return Vec::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x6269_6e73);
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(self.n_classes);
        while out.len() < self.n_classes {
            let mut bins: Vec<usize> = (0..self.n_mels).collect();
            bins.shuffle(&mut rng);
            let mut pick = bins[..per_class].to_vec();
            pick.sort_unstable();
            if seen.insert(pick.clone()) {
                out.push(pick);
            }
        }
        out
    }

    fn late_signal_sample(&self, label: usize, rng: &mut ChaCha8Rng) -> Result<Spectrogram> {
        let TaskKind::LateSignal {
            median_frames,
            sigma,
            min_frames,
            max_frames,
            signal_fraction,
            amplitude,
            ..
        } = &self.kind
        else {
            unreachable!()
        };
        let dist = LogNormal::new(median_frames.ln(), *sigma)
            .map_err(|e| Error::InvalidArgument(format!("length distribution: {e}")))?;
        let frames = (dist.sample(rng).round() as usize).clamp(*min_frames, *max_frames);
        let mut energies =
            Array2::from_shape_simple_fn((self.n_mels, frames), || rng.sample::<f64, _>(StandardNormal) as f32);
        let onset = ((1.0 - signal_fraction) * frames as f64).floor() as usize;
        for &bin in &self.class_bins()[label] {
            for t in onset..frames {
                energies[[bin, t]] += *amplitude as f32;
            }
        }
        Spectrogram::new(energies, 10.0)
    }

    /// Standardized spectrogram of one sample at the requested compression.
    pub fn featurize(&self, sample: &Sample, factor: Factor) -> Result<Spectrogram> {
        let base = self.mel_config();
        let spec = match (&sample.source, factor) {
            (SampleSource::Spectrogram(s), Factor::None) => return Ok(s.clone()),
            (SampleSource::Spectrogram(s), Factor::Avgpool(c)) => return compress_avgpool(s, c),
            (SampleSource::Spectrogram(_), Factor::Fshift(_)) => {
                return Err(Error::InvalidArgument(
                    "frame-shift compression needs waveform samples".into(),
                ))
            }
            (SampleSource::Waveform(w), Factor::None) => compress_fshift(w, 1.0, &base)?,
            (SampleSource::Waveform(w), Factor::Fshift(c)) => compress_fshift(w, c, &base)?,
            (SampleSource::Waveform(w), Factor::Avgpool(c)) => {
                compress_avgpool(&compress_fshift(w, 1.0, &base)?, c)?
            }
        };
        let energies = spec
            .energies
            .mapv(|v| ((v as f64 - RESOLUTION_MEAN) / RESOLUTION_STD) as f32);
        Spectrogram::new(energies, spec.frame_shift_ms)
    }
}

/// Class `label` picks a tone band (`label / 2`) and whether the tone is pulsed (`label % 2`).
fn tone_sample(label: usize, duration_s: f64, sample_rate: u32, rng: &mut ChaCha8Rng) -> Result<Waveform> {
    let n = (duration_s * sample_rate as f64).round() as usize;
    let band = TONE_BANDS_HZ[label / 2];
    let pulsed = label % 2 == 1;
    let freq = band * rng.random_range(0.95..1.05);
    let phase = rng.random_range(0.0..2.0 * PI);
    let pulse_phase = rng.random_range(0.0..1.0);
    let amp = rng.random_range(0.15..0.3);
    let sr = sample_rate as f64;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let gate = if pulsed {
                if (t * PULSE_HZ + pulse_phase).fract() < 0.5 {
                    1.0
                } else {
                    0.0
                }
            } else {
                1.0
            };
            let noise: f64 = rng.sample(StandardNormal);
            (amp * gate * (2.0 * PI * freq * t + phase).sin() + 0.01 * noise) as f32
        })
        .collect();
    Waveform::new(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn late_signal_is_seeded_and_in_range() {
        let task = TaskSpec {
            n_train: 40,
            ..TaskSpec::late_signal(4, 700.0, 0.2, 3)
        };
        let a = task.generate(Split::Train).unwrap();
        let b = task.generate(Split::Train).unwrap();
        assert_eq!(a, b);
        for s in &a {
            let SampleSource::Spectrogram(spec) = &s.source else { panic!() };
            assert!((256..=3072).contains(&spec.n_frames()));
            assert_eq!(spec.n_mels(), 32);
        }
        let bins = task.class_bins();
        assert_eq!(bins.len(), 4);
        let unique: std::collections::HashSet<_> = bins.iter().collect();
        assert_eq!(unique.len(), 4);
    }

    #[test]
    fn signal_lives_in_the_tail() {
        let task = TaskSpec {
            n_train: 8,
            ..TaskSpec::late_signal(2, 1000.0, 0.1, 5)
        };
        let bins = task.class_bins();
        for s in task.generate(Split::Train).unwrap() {
            let SampleSource::Spectrogram(spec) = &s.source else { panic!() };
            let t = spec.n_frames();
            let bin = bins[s.label][0];
            let head: f32 = (0..t / 2).map(|j| spec.energies[[bin, j]]).sum::<f32>() / (t / 2) as f32;
            let tail: f32 = (t - t / 10..t).map(|j| spec.energies[[bin, j]]).sum::<f32>() / (t / 10) as f32;
            assert!(tail - head > 1.0, "head {head} tail {tail}");
        }
    }

    #[test]
    fn resolution_featurization_shrinks_with_factor() {
        let task = TaskSpec {
            n_train: 2,
            ..TaskSpec::resolution(1)
        };
        let samples = task.generate(Split::Train).unwrap();
        let full = task.featurize(&samples[0], Factor::Fshift(1.0)).unwrap();
        let quarter = task.featurize(&samples[0], Factor::Fshift(4.0)).unwrap();
        let pooled = task.featurize(&samples[0], Factor::Avgpool(4)).unwrap();
        assert_eq!(full.n_frames(), task.max_frames());
        assert_eq!(full.n_frames(), 254);
        assert_eq!(quarter.n_frames(), 64);
        assert_eq!(pooled.n_frames(), 63);
        assert!(task.featurize(&samples[0], Factor::None).unwrap() == full);
    }
}
