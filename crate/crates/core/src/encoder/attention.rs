//! Multi-head attention restricted to each query's own segment.
//!
//! Segments are contiguous, so the allowed keys of a query form one range. The
//! range kernel below is the production path; [`masked_self_attention`] is the
//! dense formulation over a boolean `N'×N'` mask with masked logits set to
//! [`MASKED_LOGIT`]. The two agree bit for bit: masked entries contribute exact
//! zeros to every sum.

use ndarray::{Array2, ArrayView2};

use super::ops::{linear, softmax_in_place, zero_rows, MASKED_LOGIT};
use super::params::LayerParams;
use crate::{Error, Real, Result};

/// Key range `[start, end)` per query; `None` marks padding.
pub type Spans = [Option<(usize, usize)>];

/// Attention probabilities kept for the backward pass.
pub(crate) struct AttnWeights<T> {
    /// Flattened per head, per query, over the query's span.
    pub probs: Vec<T>,
    /// Start of each `(head, query)` block in `probs`.
    pub offsets: Vec<usize>,
}

pub(crate) fn span_attention<T: Real>(
    q: &Array2<T>,
    k: &Array2<T>,
    v: &Array2<T>,
    spans: &Spans,
    heads: usize,
) -> (Array2<T>, AttnWeights<T>) {
    let (n, d) = q.dim();
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let (qs, ks, vs) = (
        q.as_slice().unwrap(),
        k.as_slice().unwrap(),
        v.as_slice().unwrap(),
    );
    let mut out = Array2::<T>::zeros((n, d));
    let os = out.as_slice_mut().unwrap();
    let span_total: usize = spans.iter().flatten().map(|(s, e)| e - s).sum();
    let mut probs = Vec::with_capacity(heads * span_total);
    let mut offsets = Vec::with_capacity(heads * n);
    let mut logits = Vec::new();
    for h in 0..heads {
        let c0 = h * dh;
        for (i, span) in spans.iter().enumerate() {
            offsets.push(probs.len());
            let Some((s, e)) = *span else { continue };
            let qi = &qs[i * d + c0..i * d + c0 + dh];
            logits.clear();
            for j in s..e {
                let kj = &ks[j * d + c0..j * d + c0 + dh];
                let mut dot = T::zero();
                for c in 0..dh {
                    dot += qi[c] * kj[c];
                }
                logits.push(dot * scale);
            }
            softmax_in_place(&mut logits);
            let oi = &mut os[i * d + c0..i * d + c0 + dh];
            for (j, &w) in (s..e).zip(&logits) {
                let vj = &vs[j * d + c0..j * d + c0 + dh];
                for c in 0..dh {
                    oi[c] += w * vj[c];
                }
            }
            probs.extend_from_slice(&logits);
        }
    }
    (out, AttnWeights { probs, offsets })
}

/// Returns `(dq, dk, dv)` for upstream gradient `dout`.
pub(crate) fn span_attention_backward<T: Real>(
    dout: &Array2<T>,
    q: &Array2<T>,
    k: &Array2<T>,
    v: &Array2<T>,
    spans: &Spans,
    heads: usize,
    weights: &AttnWeights<T>,
) -> (Array2<T>, Array2<T>, Array2<T>) {
    let (n, d) = q.dim();
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let (qs, ks, vs, dos) = (
        q.as_slice().unwrap(),
        k.as_slice().unwrap(),
        v.as_slice().unwrap(),
        dout.as_slice().unwrap(),
    );
    let mut dq = Array2::<T>::zeros((n, d));
    let mut dk = Array2::<T>::zeros((n, d));
    let mut dv = Array2::<T>::zeros((n, d));
    let (dqs, dks, dvs) = (
        dq.as_slice_mut().unwrap(),
        dk.as_slice_mut().unwrap(),
        dv.as_slice_mut().unwrap(),
    );
    let mut ds = Vec::new();
    for h in 0..heads {
        let c0 = h * dh;
        for (i, span) in spans.iter().enumerate() {
            let Some((s, e)) = *span else { continue };
            let off = weights.offsets[h * n + i];
            let a = &weights.probs[off..off + (e - s)];
            let doi = &dos[i * d + c0..i * d + c0 + dh];
            ds.clear();
            let mut weighted = T::zero();
            for (j, &w) in (s..e).zip(a) {
                let vj = &vs[j * d + c0..j * d + c0 + dh];
                let mut da = T::zero();
                for c in 0..dh {
                    da += doi[c] * vj[c];
                }
                let dvj = &mut dvs[j * d + c0..j * d + c0 + dh];
                for c in 0..dh {
                    dvj[c] += w * doi[c];
                }
                weighted += w * da;
                ds.push(da);
            }
            for (dsj, &w) in ds.iter_mut().zip(a) {
                *dsj = w * (*dsj - weighted) * scale;
            }
            let qi = &qs[i * d + c0..i * d + c0 + dh];
            for (j, &g) in (s..e).zip(&ds) {
                let kj = &ks[j * d + c0..j * d + c0 + dh];
                let dqi = &mut dqs[i * d + c0..i * d + c0 + dh];
                for c in 0..dh {
                    dqi[c] += g * kj[c];
                }
                let dkj = &mut dks[j * d + c0..j * d + c0 + dh];
                for c in 0..dh {
                    dkj[c] += g * qi[c];
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Dense masked multi-head self-attention sublayer: projections, softmax over
/// `Mask(QKᵀ/√d_h)`, output projection. Padding query rows produce zeros.
///
/// Fails if a non-padding query has no key it may attend to.
pub fn masked_self_attention<T: Real>(
    x: &ArrayView2<T>,
    mask: &Array2<bool>,
    is_pad: &[bool],
    layer: &LayerParams<T>,
    heads: usize,
) -> Result<Array2<T>> {
    let (n, d) = x.dim();
    if mask.dim() != (n, n) || is_pad.len() != n {
        return Err(Error::Shape(format!(
            "mask {:?} / pad flags {} do not match {n} tokens",
            mask.dim(),
            is_pad.len()
        )));
    }
    if d % heads != 0 {
        return Err(Error::Shape(format!("dim {d} not divisible by {heads} heads")));
    }
    for i in 0..n {
        if !is_pad[i] && !mask.row(i).iter().any(|&m| m) {
            return Err(Error::Segments(format!("query {i} is not padding but attends to nothing")));
        }
    }
    let q = linear(x, &layer.wq, &layer.bq);
    let k = linear(x, &layer.wk, &layer.bk);
    let v = linear(x, &layer.wv, &layer.bv);
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let mut out = Array2::<T>::zeros((n, d));
    let mut logits = vec![T::zero(); n];
    for h in 0..heads {
        let c0 = h * dh;
        for i in 0..n {
            if is_pad[i] {
                continue;
            }
            for (j, l) in logits.iter_mut().enumerate() {
                *l = if mask[[i, j]] {
                    let mut dot = T::zero();
                    for c in 0..dh {
                        dot += q[[i, c0 + c]] * k[[j, c0 + c]];
                    }
                    dot * scale
                } else {
                    T::lit(MASKED_LOGIT)
                };
            }
            softmax_in_place(&mut logits);
            for (j, &w) in logits.iter().enumerate() {
                for c in 0..dh {
                    out[[i, c0 + c]] += w * v[[j, c0 + c]];
                }
            }
        }
    }
    let mut y = linear(&out.view(), &layer.wo, &layer.bo);
    let keep: Vec<bool> = is_pad.iter().map(|p| !p).collect();
    zero_rows(&mut y, &keep);
    Ok(y)
}
