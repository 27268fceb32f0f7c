//! Throughput and token-efficiency comparison of packed and fixed-length processing.

use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::{encoder_forward, fixed_forward, FixedSample, ModelConfig, ModelParams};
use crate::packing::{fixed_length_stats, pack, packed_stats, PackingStats};
use crate::spectrogram::PatchGrid;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub samples: usize,
    /// Median sample length in tokens.
    pub median_tokens: f64,
    pub sigma: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Fixed-regime length; `None` uses the mean sample length.
    pub fixed_tokens: Option<usize>,
    pub budget: usize,
    pub packing_batch: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            samples: 96,
            median_tokens: 256.0,
            sigma: 0.5,
            min_tokens: 16,
            max_tokens: 1024,
            fixed_tokens: None,
            budget: 1024,
            packing_batch: 32,
            dim: 64,
            heads: 4,
            layers: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub stats: PackingStats,
    pub seconds: f64,
    /// Processed positions (informative or not) per second.
    pub tokens_per_sec: f64,
    pub informative_per_sec: f64,
}

impl RegimeReport {
    fn new(stats: PackingStats, seconds: f64) -> Self {
        let secs = seconds.max(1e-9);
        Self {
            stats,
            seconds,
            tokens_per_sec: stats.total_tokens as f64 / secs,
            informative_per_sec: (stats.total_tokens - stats.pad_tokens) as f64 / secs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub lengths: Vec<usize>,
    pub fixed_tokens: usize,
    pub packed: RegimeReport,
    pub fixed: RegimeReport,
}

/// Seeded log-normal token lengths clamped to `[min_tokens, max_tokens]`.
pub fn sample_lengths(cfg: &BenchConfig) -> Result<Vec<usize>> {
    if cfg.samples == 0 || cfg.min_tokens == 0 || cfg.min_tokens > cfg.max_tokens {
        return Err(Error::InvalidArgument("bench needs samples > 0 and 0 < min <= max tokens".into()));
    }
    let dist = LogNormal::new(cfg.median_tokens.ln(), cfg.sigma)
        .map_err(|e| Error::InvalidArgument(format!("length distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.samples)
        .map(|_| (dist.sample(&mut rng).round() as usize).clamp(cfg.min_tokens, cfg.max_tokens))
        .collect())
}

fn random_grid(len: usize, patch: usize, id: usize, rng: &mut ChaCha8Rng) -> PatchGrid {
    let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    PatchGrid {
        patches: Array2::from_shape_simple_fn((len, patch * patch), || normal.sample(rng)),
        coords: (0..len).map(|t| (0, t)).collect(),
        patch_size: patch,
        freq_patches: 1,
        time_patches: len,
        sample_id: format!("b{id}"),
    }
}

/// Times forward passes of both regimes over the same synthetic samples.
pub fn bench<T: Real>(cfg: &BenchConfig) -> Result<BenchReport> {
    let lengths = sample_lengths(cfg)?;
    if cfg.packing_batch == 0 {
        return Err(Error::InvalidArgument("packing batch must be positive".into()));
    }
    let fixed_len = cfg
        .fixed_tokens
        .unwrap_or_else(|| (lengths.iter().sum::<usize>() as f64 / lengths.len() as f64).round() as usize)
        .max(1);
    let mut config = ModelConfig::with_dims(cfg.dim, cfg.heads, cfg.layers, 2);
    config.freq_max = 1;
    config.time_max = cfg.max_tokens.max(fixed_len);
    let params = ModelParams::<T>::init(&config, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let grids: Vec<PatchGrid> = lengths
        .iter()
        .enumerate()
        .map(|(i, &l)| random_grid(l, config.patch_size, i, &mut rng))
        .collect();

    let mut packed = PackingStats::default();
    let start = Instant::now();
    for group in grids.chunks(cfg.packing_batch) {
        let batch = pack::<T, _>(group, cfg.budget)?;
        packed = packed.merge(packed_stats(&batch.layout));
        encoder_forward(&batch, &params)?;
    }
    let packed = RegimeReport::new(packed, start.elapsed().as_secs_f64());

    let start = Instant::now();
    for group in grids.chunks(cfg.packing_batch) {
        let samples: Vec<FixedSample<T>> = group.iter().map(|g| FixedSample::from_grid(g, fixed_len)).collect();
        fixed_forward(&samples, &params)?;
    }
    let fixed = RegimeReport::new(fixed_length_stats(&lengths, fixed_len), start.elapsed().as_secs_f64());

    Ok(BenchReport {
        lengths,
        fixed_tokens: fixed_len,
        packed,
        fixed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchConfig {
        BenchConfig {
            samples: 24,
            median_tokens: 40.0,
            sigma: 0.6,
            min_tokens: 4,
            max_tokens: 128,
            budget: 128,
            packing_batch: 12,
            dim: 16,
            heads: 2,
            layers: 1,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn equal_lengths_filling_rows() {
        let cfg = BenchConfig {
            sigma: 1e-9,
            median_tokens: 32.0,
            fixed_tokens: Some(32),
            ..small()
        };
        let r = bench::<f32>(&cfg).unwrap();
        assert!(r.lengths.iter().all(|&l| l == 32));
        assert_eq!(r.packed.stats.informative_fraction(), 1.0);
        assert_eq!(r.fixed.stats.informative_fraction(), 1.0);
    }

    #[test]
    fn packed_beats_mean_length_fixed() {
        let cfg = BenchConfig {
            samples: 48,
            budget: 256,
            max_tokens: 256,
            packing_batch: 48,
            ..small()
        };
        let r = bench::<f32>(&cfg).unwrap();
        assert!(r.fixed.stats.cut_tokens > 0 && r.fixed.stats.pad_tokens > 0);
        assert!(r.packed.stats.informative_fraction() > r.fixed.stats.informative_fraction());
        assert!(r.packed.tokens_per_sec > 0.0 && r.fixed.tokens_per_sec > 0.0);
    }

    #[test]
    fn one_per_row_matches_fixed_at_max() {
        // Every length exceeds half the budget, so no two samples share a row.
        let cfg = BenchConfig {
            min_tokens: 65,
            max_tokens: 128,
            median_tokens: 90.0,
            ..small()
        };
        let lengths = sample_lengths(&cfg).unwrap();
        let max = *lengths.iter().max().unwrap();
        let cfg = BenchConfig {
            budget: max,
            fixed_tokens: Some(max),
            packing_batch: cfg.samples,
            ..cfg
        };
        let r = bench::<f32>(&cfg).unwrap();
        assert_eq!(r.packed.stats.rows, lengths.len());
        assert_eq!(r.packed.stats.pad_tokens, r.fixed.stats.pad_tokens);
        assert_eq!(r.packed.stats.informative_fraction(), r.fixed.stats.informative_fraction());
    }
}
