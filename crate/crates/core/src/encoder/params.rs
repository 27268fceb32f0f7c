use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub patch_size: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub mlp_hidden: usize,
    /// Rows of the frequency-position table.
    pub freq_max: usize,
    /// Rows of the time-position table.
    pub time_max: usize,
    pub n_classes: usize,
}

impl ModelConfig {
    /// D=64, H=4, two layers, p=16, 8 frequency and 192 time positions.
    pub fn desk(n_classes: usize) -> Self {
        Self::with_dims(64, 4, 2, n_classes)
    }

    pub fn with_dims(dim: usize, heads: usize, layers: usize, n_classes: usize) -> Self {
        Self {
            patch_size: 16,
            dim,
            heads,
            layers,
            mlp_hidden: 4 * dim,
            freq_max: 8,
            time_max: 192,
            n_classes,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return bad(format!("dim {} not divisible by heads {}", self.dim, self.heads));
        }
        if self.patch_size == 0 || self.mlp_hidden == 0 {
            return bad("patch size and MLP width must be positive".into());
        }
        if self.freq_max == 0 || self.time_max == 0 {
            return bad("position tables must be non-empty".into());
        }
        if self.n_classes < 2 {
            return bad(format!("need at least two classes, got {}", self.n_classes));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_g: Array1<T>,
    pub ln1_b: Array1<T>,
    pub wq: Array2<T>,
    pub bq: Array1<T>,
    pub wk: Array2<T>,
    pub bk: Array1<T>,
    pub wv: Array2<T>,
    pub bv: Array1<T>,
    pub wo: Array2<T>,
    pub bo: Array1<T>,
    pub ln2_g: Array1<T>,
    pub ln2_b: Array1<T>,
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

/// All trainable tensors. Weight matrices are stored `in × out` so that `y = x·W + b`.
///
/// The same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub patch_w: Array2<T>,
    pub patch_b: Array1<T>,
    pub pos_freq: Array2<T>,
    pub pos_time: Array2<T>,
    /// Prepended read-out token of the fixed-length baseline.
    pub cls_token: Array1<T>,
    pub layers: Vec<LayerParams<T>>,
    pub norm_g: Array1<T>,
    pub norm_b: Array1<T>,
    pub pool_query: Array1<T>,
    pub pool_wk: Array2<T>,
    pub pool_bk: Array1<T>,
    pub pool_wv: Array2<T>,
    pub pool_bv: Array1<T>,
    pub pool_wo: Array2<T>,
    pub pool_bo: Array1<T>,
    pub head_w: Array2<T>,
    pub head_b: Array1<T>,
}

/// Borrowed view of one named tensor.
pub struct TensorRef<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

pub struct TensorMut<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [T],
}

macro_rules! visit_fields {
    ($p:expr, $slice:ident, $iter:ident, $out:ident, $make:ident) => {{
        let p = $p;
        $out.push($make("patch_w".into(), p.patch_w.shape().to_vec(), p.patch_w.$slice().unwrap()));
        $out.push($make("patch_b".into(), p.patch_b.shape().to_vec(), p.patch_b.$slice().unwrap()));
        $out.push($make("pos_freq".into(), p.pos_freq.shape().to_vec(), p.pos_freq.$slice().unwrap()));
        $out.push($make("pos_time".into(), p.pos_time.shape().to_vec(), p.pos_time.$slice().unwrap()));
        $out.push($make("cls_token".into(), p.cls_token.shape().to_vec(), p.cls_token.$slice().unwrap()));
        for (i, l) in p.layers.$iter().enumerate() {
            visit_fields!(@layer l, i, $slice, $out, $make,
                ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2);
        }
        visit_fields!(@top p, $slice, $out, $make,
            norm_g, norm_b, pool_query, pool_wk, pool_bk, pool_wv, pool_bv, pool_wo, pool_bo,
            head_w, head_b);
    }};
    (@layer $l:ident, $i:ident, $slice:ident, $out:ident, $make:ident, $($f:ident),*) => {
        $( $out.push($make(format!("layers.{}.{}", $i, stringify!($f)), $l.$f.shape().to_vec(), $l.$f.$slice().unwrap())); )*
    };
    (@top $p:ident, $slice:ident, $out:ident, $make:ident, $($f:ident),*) => {
        $( $out.push($make(stringify!($f).to_string(), $p.$f.shape().to_vec(), $p.$f.$slice().unwrap())); )*
    };
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.dim;
        let z1 = |n| Array1::zeros(n);
        let z2 = |r, c| Array2::zeros((r, c));
        let layer = || LayerParams {
            ln1_g: z1(d),
            ln1_b: z1(d),
            wq: z2(d, d),
            bq: z1(d),
            wk: z2(d, d),
            bk: z1(d),
            wv: z2(d, d),
            bv: z1(d),
            wo: z2(d, d),
            bo: z1(d),
            ln2_g: z1(d),
            ln2_b: z1(d),
            w1: z2(d, config.mlp_hidden),
            b1: z1(config.mlp_hidden),
            w2: z2(config.mlp_hidden, d),
            b2: z1(d),
        };
        Self {
            config: config.clone(),
            patch_w: z2(config.patch_dim(), d),
            patch_b: z1(d),
            pos_freq: z2(config.freq_max, d),
            pos_time: z2(config.time_max, d),
            cls_token: z1(d),
            layers: (0..config.layers).map(|_| layer()).collect(),
            norm_g: z1(d),
            norm_b: z1(d),
            pool_query: z1(d),
            pool_wk: z2(d, d),
            pool_bk: z1(d),
            pool_wv: z2(d, d),
            pool_bv: z1(d),
            pool_wo: z2(d, d),
            pool_bo: z1(d),
            head_w: z2(d, config.n_classes),
            head_b: z1(config.n_classes),
        }
    }

    /// Seeded initialization: linear weights and biases uniform in `±1/√fan_in`,
    /// position tables, read-out token and pooling query from `N(0, 0.02²)`,
    /// layer norms at identity.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let fill_normal = |a: &mut [T], rng: &mut ChaCha8Rng| {
            for v in a {
                *v = T::lit(normal.sample(rng));
            }
        };
        let fill_uniform = |a: &mut [T], fan_in: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound).unwrap();
            for v in a {
                *v = T::lit(u.sample(rng));
            }
        };
        let d = config.dim;
        for t in p.tensors_mut() {
            let name = t.name.rsplit('.').next().unwrap().to_string();
            match name.as_str() {
                "pos_freq" | "pos_time" | "cls_token" | "pool_query" => fill_normal(t.data, &mut rng),
                "ln1_g" | "ln2_g" | "norm_g" => t.data.fill(T::one()),
                "ln1_b" | "ln2_b" | "norm_b" => {}
                "patch_w" | "patch_b" => fill_uniform(t.data, config.patch_dim(), &mut rng),
                "w2" | "b2" => fill_uniform(t.data, config.mlp_hidden, &mut rng),
                _ => fill_uniform(t.data, d, &mut rng),
            }
        }
        Ok(p)
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        let mut out = Vec::new();
        let make = |name, shape, data| TensorRef { name, shape, data };
        visit_fields!(self, as_slice, iter, out, make);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let mut out = Vec::new();
        let make = |name, shape, data| TensorMut { name, shape, data };
        visit_fields!(self, as_slice_mut, iter_mut, out, make);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// `self += scale · other`, tensor by tensor in declared order.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.data.iter_mut().zip(b.data) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.data.iter().zip(b.data).map(|(x, y)| (*x - *y).abs().as_f64()))
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Converts every tensor to another precision.
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(&self.config);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d = U::lit(s.as_f64());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_order_and_shapes() {
        let c = ModelConfig::with_dims(8, 2, 2, 3);
        let p = ModelParams::<f64>::init(&c, 1).unwrap();
        let names: Vec<_> = p.tensors().into_iter().map(|t| t.name).collect();
        assert_eq!(names[0], "patch_w");
        assert_eq!(names[5], "layers.0.ln1_g");
        assert_eq!(names[21], "layers.1.ln1_g");
        assert_eq!(names.last().unwrap(), "head_b");
        assert_eq!(names.len(), 5 + 2 * 16 + 11);
        let shapes: Vec<_> = p.tensors().into_iter().map(|t| t.shape).collect();
        assert_eq!(shapes[0], vec![256, 8]);
        assert_eq!(shapes.last().unwrap(), &vec![3]);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let c = ModelConfig::with_dims(16, 4, 1, 4);
        let a = ModelParams::<f64>::init(&c, 9).unwrap();
        let b = ModelParams::<f64>::init(&c, 9).unwrap();
        let other = ModelParams::<f64>::init(&c, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
        let bound = 1.0 / 256f64.sqrt();
        assert!(a.patch_w.iter().all(|v| v.abs() <= bound));
        assert!(a.layers[0].ln1_g.iter().all(|&v| v == 1.0));
        assert!(a.layers[0].ln2_b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(ModelConfig::with_dims(10, 3, 1, 2).validate().is_err());
        assert!(ModelConfig::with_dims(8, 2, 1, 1).validate().is_err());
    }
}
