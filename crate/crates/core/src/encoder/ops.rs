//! Row-wise building blocks shared by the forward and backward passes.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::Real;

pub(crate) const LN_EPS: f64 = 1e-6;
/// Logit assigned to masked attention entries.
pub const MASKED_LOGIT: f64 = -1e9;

/// `x·W + b`.
pub(crate) fn linear<T: Real>(x: &ArrayView2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    let mut y = x.dot(w);
    y += b;
    y
}

/// Accumulates weight and bias gradients of `y = x·W + b` and returns `dx`.
pub(crate) fn linear_backward<T: Real>(
    x: &ArrayView2<T>,
    w: &Array2<T>,
    dy: &Array2<T>,
    dw: &mut Array2<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    *dw += &x.t().dot(dy);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

pub(crate) struct LayerNormCache<T> {
    pub xhat: Array2<T>,
    pub rstd: Array1<T>,
}

pub(crate) fn layer_norm<T: Real>(
    x: &Array2<T>,
    gamma: &Array1<T>,
    beta: &Array1<T>,
) -> (Array2<T>, LayerNormCache<T>) {
    let d = T::lit(x.ncols() as f64);
    let eps = T::lit(LN_EPS);
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.outer_iter_mut().zip(rstd.iter_mut()) {
        let mean = row.iter().copied().sum::<T>() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *r = T::one() / (var + eps).sqrt();
        let s = *r;
        row.mapv_inplace(|v| v * s);
    }
    let mut y = &xhat * gamma;
    y += beta;
    (y, LayerNormCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward<T: Real>(
    dy: &Array2<T>,
    cache: &LayerNormCache<T>,
    gamma: &Array1<T>,
    dgamma: &mut Array1<T>,
    dbeta: &mut Array1<T>,
) -> Array2<T> {
    *dgamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let d = T::lit(dy.ncols() as f64);
    let mut dx = dy * gamma;
    for ((mut row, xh), &r) in dx.outer_iter_mut().zip(cache.xhat.outer_iter()).zip(&cache.rstd) {
        let mean_g = row.iter().copied().sum::<T>() / d;
        let mean_gx = row.iter().zip(xh.iter()).map(|(&g, &x)| g * x).sum::<T>() / d;
        for (g, &x) in row.iter_mut().zip(xh.iter()) {
            *g = r * (*g - mean_g - x * mean_gx);
        }
    }
    dx
}

const GELU_K: f64 = 0.044715;

/// Tanh-approximated GELU.
pub(crate) fn gelu<T: Real>(u: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = T::lit(0.5);
    half * u * (T::one() + (c * (u + T::lit(GELU_K) * u * u * u)).tanh())
}

pub(crate) fn gelu_grad<T: Real>(u: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = T::lit(0.5);
    let k = T::lit(GELU_K);
    let t = (c * (u + k * u * u * u)).tanh();
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * k * u * u)
}

/// In-place softmax of `logits`.
pub(crate) fn softmax_in_place<T: Real>(logits: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Zeroes rows whose flag is false.
pub(crate) fn zero_rows<T: Real>(x: &mut Array2<T>, keep: &[bool]) {
    for (mut row, &k) in x.outer_iter_mut().zip(keep) {
        if !k {
            row.fill(T::zero());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference() {
        for &u in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((fd - gelu_grad(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = Array2::from_shape_fn((3, 6), |(i, j)| (i * 7 + j * j) as f64);
        let g = Array1::ones(6);
        let b = Array1::zeros(6);
        let (y, _) = layer_norm(&x, &g, &b);
        for row in y.outer_iter() {
            let mean: f64 = row.sum() / 6.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut v = vec![1.0f64, -2.0, 0.5, MASKED_LOGIT];
        softmax_in_place(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(v[3], 0.0);
    }
}
