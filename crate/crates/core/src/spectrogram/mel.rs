use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{Spectrogram, Waveform};
use crate::{Error, Result};

/// Added to every mel energy before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub window_ms: f64,
    pub shift_ms: f64,
    pub n_mels: usize,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            shift_ms: 10.0,
            n_mels: 128,
        }
    }
}

impl MelConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn shift_samples(&self, sample_rate: u32) -> usize {
        (self.shift_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    /// `1 + floor((n - window) / shift)`, or zero when the signal is shorter than a window.
    pub fn frame_count(&self, n_samples: usize, sample_rate: u32) -> usize {
        let win = self.window_samples(sample_rate);
        let hop = self.shift_samples(sample_rate);
        if n_samples < win || hop == 0 {
            0
        } else {
            1 + (n_samples - win) / hop
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// HTK-scale triangular filters over `n_fft / 2 + 1` power bins, `n_mels × bins`.
///
/// Returns the filter matrix and the center frequency of each filter in Hz.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> (Array2<f64>, Vec<f64>) {
    let n_bins = n_fft / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut bank = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let rise = (f - lo) / (center - lo);
            let fall = (hi - f) / (hi - center);
            bank[[m, k]] = rise.min(fall).max(0.0);
        }
    }
    (bank, edges[1..=n_mels].to_vec())
}

/// Reusable featurizer: FFT plan, window and filterbank for one sample rate.
pub struct MelExtractor {
    config: MelConfig,
    sample_rate: u32,
    window: Vec<f64>,
    hop: usize,
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
    bank: Array2<f64>,
}

impl MelExtractor {
    pub fn new(config: &MelConfig, sample_rate: u32) -> Result<Self> {
        let win = config.window_samples(sample_rate);
        let hop = config.shift_samples(sample_rate);
        if win == 0 || hop == 0 || config.n_mels == 0 {
            return Err(Error::InvalidArgument(format!(
                "degenerate mel configuration {config:?} at {sample_rate} Hz"
            )));
        }
        let n_fft = win.next_power_of_two();
        // periodic Hann
        let window = (0..win)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        let (bank, _) = mel_filterbank(config.n_mels, n_fft, sample_rate);
        Ok(Self {
            config: config.clone(),
            sample_rate,
            window,
            hop,
            n_fft,
            fft,
            bank,
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn compute(&self, wave: &Waveform) -> Result<Spectrogram> {
        if wave.sample_rate != self.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "extractor built for {} Hz, waveform is {} Hz",
                self.sample_rate, wave.sample_rate
            )));
        }
        let n_frames = self.config.frame_count(wave.samples.len(), self.sample_rate);
        if n_frames == 0 {
            return Err(Error::Shape(format!(
                "{} samples are shorter than one {} ms window",
                wave.samples.len(),
                self.config.window_ms
            )));
        }
        let n_bins = self.n_fft / 2 + 1;
        let mut energies = Array2::<f32>::zeros((self.config.n_mels, n_frames));
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut power = vec![0.0f64; n_bins];
        for t in 0..n_frames {
            let start = t * self.hop;
            buf.fill(Complex::new(0.0, 0.0));
            for (i, w) in self.window.iter().enumerate() {
                buf[i].re = wave.samples[start + i] as f64 * w;
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (m, filter) in self.bank.outer_iter().enumerate() {
                let e: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                energies[[m, t]] = (e + LOG_FLOOR).ln() as f32;
            }
        }
        Spectrogram::new(energies, self.config.shift_ms)
    }
}
