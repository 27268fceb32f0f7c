//! Central finite-difference check of the analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::encoder::{backward, cross_entropy, encoder_forward, fixed_forward, FixedSample, ModelConfig, ModelParams};
use crate::packing::{pack, PackedBatch};
use crate::spectrogram::PatchGrid;
use crate::Result;

/// Differences below this magnitude count as absolute rather than relative error.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub eps: f64,
    /// Entries checked per tensor; `None` checks every entry.
    pub max_per_tensor: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 16,
            heads: 2,
            layers: 2,
            eps: 1e-5,
            max_per_tensor: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_ERR_FLOOR)
}

/// A small problem exercising both read-outs so every tensor carries gradient.
struct Problem {
    packed: PackedBatch<f64>,
    fixed: Vec<FixedSample<f64>>,
    labels: Vec<usize>,
}

impl Problem {
    fn new(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let p = config.patch_size;
        let n_samples = rng.random_range(2..=4);
        let grids: Vec<PatchGrid> = (0..n_samples)
            .map(|s| {
                let freq_patches = rng.random_range(1..=config.freq_max);
                let time_patches = rng.random_range(1..=config.time_max.min(4));
                let n = freq_patches * time_patches;
                let patches = Array2::from_shape_fn((n, p * p), |_| rng.sample::<f64, _>(StandardNormal) as f32);
                let coords = (0..time_patches)
                    .flat_map(|b| (0..freq_patches).map(move |a| (a, b)))
                    .collect();
                PatchGrid {
                    patches,
                    coords,
                    patch_size: p,
                    freq_patches,
                    time_patches,
                    sample_id: format!("g{s}"),
                }
            })
            .collect();
        let budget = grids.iter().map(|g| g.len()).max().unwrap() + 3;
        let packed = pack(&grids, budget)?;
        let fixed_len = 3;
        let fixed = grids.iter().map(|g| FixedSample::from_grid(g, fixed_len)).collect();
        let labels = (0..n_samples).map(|_| rng.random_range(0..config.n_classes)).collect();
        Ok(Self { packed, fixed, labels })
    }

    fn loss(&self, params: &ModelParams<f64>) -> Result<f64> {
        let a = encoder_forward(&self.packed, params)?;
        let b = fixed_forward(&self.fixed, params)?;
        Ok(cross_entropy(&a.logits, &self.labels)?.0 + cross_entropy(&b.logits, &self.labels)?.0)
    }

    fn gradient(&self, params: &ModelParams<f64>) -> Result<ModelParams<f64>> {
        let a = encoder_forward(&self.packed, params)?;
        let (_, da) = cross_entropy(&a.logits, &self.labels)?;
        let mut g = backward(&a, params, &da);
        let b = fixed_forward(&self.fixed, params)?;
        let (_, db) = cross_entropy(&b.logits, &self.labels)?;
        g.add_scaled(&backward(&b, params, &db), 1.0);
        Ok(g)
    }
}

/// Compares analytic gradients with `(L(θ+ε) − L(θ−ε)) / 2ε` entry by entry.
pub fn grad_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut config = ModelConfig::with_dims(cfg.dim, cfg.heads, cfg.layers, 3);
    config.freq_max = 2;
    config.time_max = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::<f64>::init(&config, cfg.seed)?;
    // non-trivial norms and biases
    for t in params.tensors_mut() {
        if t.name.ends_with("_g") || t.name.ends_with("_b") {
            for v in t.data.iter_mut() {
                *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let problem = Problem::new(&config, &mut rng)?;
    let analytic = problem.gradient(&params)?;
    let analytic_flat: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.data.to_vec()))
        .collect();

    let mut tensors = Vec::new();
    for (ti, (name, grad)) in analytic_flat.iter().enumerate() {
        let n = grad.len();
        let indices: Vec<usize> = match cfg.max_per_tensor {
            Some(m) if m < n => (0..m).map(|_| rng.random_range(0..n)).collect(),
            _ => (0..n).collect(),
        };
        let mut check = TensorCheck {
            name: name.clone(),
            checked: indices.len(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
        };
        for idx in indices {
            let original = params.tensors()[ti].data[idx];
            params.tensors_mut()[ti].data[idx] = original + cfg.eps;
            let plus = problem.loss(&params)?;
            params.tensors_mut()[ti].data[idx] = original - cfg.eps;
            let minus = problem.loss(&params)?;
            params.tensors_mut()[ti].data[idx] = original;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            check.max_rel_err = check.max_rel_err.max(relative_error(grad[idx], numeric));
            check.max_abs_err = check.max_abs_err.max((grad[idx] - numeric).abs());
        }
        tensors.push(check);
    }
    Ok(GradCheckReport { tensors })
}
