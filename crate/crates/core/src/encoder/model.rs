use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use super::attention::{span_attention, span_attention_backward, AttnWeights};
use super::ops::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, softmax_in_place,
    zero_rows, LayerNormCache, MASKED_LOGIT,
};
use super::params::ModelParams;
use crate::packing::{segment_runs, segment_spans, PackedBatch, TokenSequence};
use crate::spectrogram::PatchGrid;
use crate::{Error, Real, Result};

/// How a sample representation is read off the encoder output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// Masked attention pooling with a learnable query, one vector per packed sample.
    Pool,
    /// The output at a prepended learnable token (fixed-length baseline).
    Cls,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TokenSource {
    Patch { freq: usize, time: usize },
    /// Zero embedding that still takes part in attention (baseline padding).
    Zero,
    Pad,
    Cls,
}

struct RowInput<T> {
    patches: Array2<T>,
    sources: Vec<TokenSource>,
    spans: Vec<Option<(usize, usize)>>,
    valid: Vec<bool>,
    /// `(start, len)` per pooled slot.
    slots: Vec<(usize, usize)>,
}

struct LayerCache<T> {
    ln1: LayerNormCache<T>,
    h1: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    attn: AttnWeights<T>,
    o: Array2<T>,
    ln2: LayerNormCache<T>,
    h2: Array2<T>,
    u: Array2<T>,
    g: Array2<T>,
}

struct PoolCache<T> {
    kp: Array2<T>,
    vp: Array2<T>,
    probs: Vec<Vec<T>>,
    z: Array2<T>,
}

struct RowTrace<T> {
    input: RowInput<T>,
    layers: Vec<LayerCache<T>>,
    lnf: LayerNormCache<T>,
    hf: Array2<T>,
    pool: Option<PoolCache<T>>,
    /// Read-out vectors, one per slot (or the single read-out token).
    outputs: Array2<T>,
}

/// Activations of one forward pass, kept for [`backward`].
pub struct ForwardTrace<T> {
    readout: Readout,
    rows: Vec<RowTrace<T>>,
    /// `(row, slot)` of every sample in input order.
    sample_slots: Vec<(usize, usize)>,
    /// Sample representations in input order, `B × D`.
    pub pooled: Array2<T>,
    /// `B × K`.
    pub logits: Array2<T>,
}

impl<T: Real> ForwardTrace<T> {
    pub fn n_samples(&self) -> usize {
        self.sample_slots.len()
    }

    pub fn readout(&self) -> Readout {
        self.readout
    }

    /// Read-out vectors as `rows × n × D`, zero at empty slots.
    pub fn slot_grid(&self, n: usize) -> Array3<T> {
        let d = self.pooled.ncols();
        let mut out = Array3::zeros((self.rows.len(), n, d));
        for (r, row) in self.rows.iter().enumerate() {
            for (s, v) in row.outputs.outer_iter().enumerate().take(n) {
                out.slice_mut(s![r, s, ..]).assign(&v);
            }
        }
        out
    }

    /// Final-layer-norm output of one row, the input to the read-out.
    pub fn encoded_row(&self, row: usize) -> ArrayView2<'_, T> {
        self.rows[row].hf.view()
    }
}

/// One sample trimmed or padded to a fixed token count for the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedSample<T> {
    pub patches: Array2<T>,
    pub coords: Vec<(usize, usize)>,
    /// Zero tokens appended after the kept patches.
    pub fill: usize,
    pub sample_id: String,
}

impl<T: Real> FixedSample<T> {
    /// Keeps the first `len` patches, or appends zero tokens up to `len`.
    pub fn from_grid(grid: &PatchGrid, len: usize) -> Self {
        let keep = grid.len().min(len);
        Self {
            patches: grid.patches.slice(s![..keep, ..]).mapv(|v| T::lit(v as f64)),
            coords: grid.coords[..keep].to_vec(),
            fill: len - keep,
            sample_id: grid.sample_id.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len() + self.fill
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_coord(params_freq: usize, params_time: usize, (a, b): (usize, usize)) -> Result<()> {
    if a >= params_freq || b >= params_time {
        return Err(Error::Shape(format!(
            "patch coordinate ({a}, {b}) outside position tables {params_freq}×{params_time}"
        )));
    }
    Ok(())
}

/// Patch projection plus frequency and time position embeddings.
pub fn embed<T: Real>(grid: &PatchGrid, params: &ModelParams<T>) -> Result<TokenSequence<T>> {
    let c = &params.config;
    if grid.patch_size != c.patch_size {
        return Err(Error::Shape(format!(
            "patch size {} does not match model patch size {}",
            grid.patch_size, c.patch_size
        )));
    }
    for &coord in &grid.coords {
        check_coord(c.freq_max, c.time_max, coord)?;
    }
    let patches = grid.patches.mapv(|v| T::lit(v as f64));
    let mut tokens = linear(&patches.view(), &params.patch_w, &params.patch_b);
    for (mut tok, &(a, b)) in tokens.outer_iter_mut().zip(&grid.coords) {
        tok += &params.pos_freq.row(a);
        tok += &params.pos_time.row(b);
    }
    Ok(TokenSequence {
        tokens,
        coords: grid.coords.clone(),
        sample_id: grid.sample_id.clone(),
    })
}

fn embed_row<T: Real>(input: &RowInput<T>, params: &ModelParams<T>) -> Array2<T> {
    let mut x = input.patches.dot(&params.patch_w);
    for (mut tok, src) in x.outer_iter_mut().zip(&input.sources) {
        match *src {
            TokenSource::Patch { freq, time } => {
                tok += &params.patch_b;
                tok += &params.pos_freq.row(freq);
                tok += &params.pos_time.row(time);
            }
            TokenSource::Zero | TokenSource::Pad => tok.fill(T::zero()),
            TokenSource::Cls => tok.assign(&params.cls_token),
        }
    }
    x
}

fn encode_row<T: Real>(input: RowInput<T>, params: &ModelParams<T>, readout: Readout) -> RowTrace<T> {
    let heads = params.config.heads;
    let mut x = embed_row(&input, params);
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (h1, ln1) = layer_norm(&x, &lp.ln1_g, &lp.ln1_b);
        let q = linear(&h1.view(), &lp.wq, &lp.bq);
        let k = linear(&h1.view(), &lp.wk, &lp.bk);
        let v = linear(&h1.view(), &lp.wv, &lp.bv);
        let (o, attn) = span_attention(&q, &k, &v, &input.spans, heads);
        let mut a = linear(&o.view(), &lp.wo, &lp.bo);
        zero_rows(&mut a, &input.valid);
        x += &a;
        let (h2, ln2) = layer_norm(&x, &lp.ln2_g, &lp.ln2_b);
        let u = linear(&h2.view(), &lp.w1, &lp.b1);
        let g = u.mapv(gelu);
        let mut m = linear(&g.view(), &lp.w2, &lp.b2);
        zero_rows(&mut m, &input.valid);
        x += &m;
        layers.push(LayerCache {
            ln1,
            h1,
            q,
            k,
            v,
            attn,
            o,
            ln2,
            h2,
            u,
            g,
        });
    }
    let (hf, lnf) = layer_norm(&x, &params.norm_g, &params.norm_b);
    let d = params.config.dim;
    let (pool, outputs) = match readout {
        Readout::Pool => {
            let kp = linear(&hf.view(), &params.pool_wk, &params.pool_bk);
            let vp = linear(&hf.view(), &params.pool_wv, &params.pool_bv);
            let scale = T::one() / T::lit(d as f64).sqrt();
            let mut z = Array2::zeros((input.slots.len(), d));
            let mut probs = Vec::with_capacity(input.slots.len());
            for (slot, &(start, len)) in input.slots.iter().enumerate() {
                let mut w: Vec<T> = (start..start + len)
                    .map(|j| params.pool_query.dot(&kp.row(j)) * scale)
                    .collect();
                softmax_in_place(&mut w);
                let mut zs = z.row_mut(slot);
                for (j, &wj) in (start..start + len).zip(&w) {
                    zs.scaled_add(wj, &vp.row(j));
                }
                probs.push(w);
            }
            let out = linear(&z.view(), &params.pool_wo, &params.pool_bo);
            (Some(PoolCache { kp, vp, probs, z }), out)
        }
        Readout::Cls => (None, hf.slice(s![0..1, ..]).to_owned()),
    };
    RowTrace {
        input,
        layers,
        lnf,
        hf,
        pool,
        outputs,
    }
}

fn finish<T: Real>(
    rows: Vec<RowTrace<T>>,
    sample_slots: Vec<(usize, usize)>,
    readout: Readout,
    params: &ModelParams<T>,
) -> ForwardTrace<T> {
    let mut pooled = Array2::zeros((sample_slots.len(), params.config.dim));
    for (k, &(r, s)) in sample_slots.iter().enumerate() {
        pooled.row_mut(k).assign(&rows[r].outputs.row(s));
    }
    let logits = classify(&pooled, params);
    ForwardTrace {
        readout,
        rows,
        sample_slots,
        pooled,
        logits,
    }
}

/// Packed forward pass: embedding, masked encoder layers, masked attention
/// pooling, unpacking to input order, classifier.
///
/// `batch` carries raw patches (token width `p²`).
pub fn encoder_forward<T: Real>(batch: &PackedBatch<T>, params: &ModelParams<T>) -> Result<ForwardTrace<T>> {
    let c = &params.config;
    if batch.n_rows() > 0 && batch.width() != c.patch_dim() {
        return Err(Error::Shape(format!(
            "packed tokens have width {}, model expects {} patch values",
            batch.width(),
            c.patch_dim()
        )));
    }
    let mut rows = Vec::with_capacity(batch.n_rows());
    for r in 0..batch.n_rows() {
        let seg = &batch.segment_ids[r];
        let spans = segment_spans(seg)?;
        let slots = segment_runs(seg)?;
        let mut sources = Vec::with_capacity(seg.len());
        for (s, &coord) in seg.iter().zip(&batch.coords[r]) {
            if s.is_pad() {
                sources.push(TokenSource::Pad);
            } else {
                check_coord(c.freq_max, c.time_max, coord)?;
                sources.push(TokenSource::Patch {
                    freq: coord.0,
                    time: coord.1,
                });
            }
        }
        let input = RowInput {
            patches: batch.rows[r].clone(),
            valid: seg.iter().map(|s| !s.is_pad()).collect(),
            sources,
            spans,
            slots,
        };
        rows.push(encode_row(input, params, Readout::Pool));
    }
    let sample_slots = batch.placements().iter().map(|p| (p.row, p.slot)).collect();
    Ok(finish(rows, sample_slots, Readout::Pool, params))
}

/// Baseline forward pass: one sample per row behind a read-out token, full
/// attention over kept patches and zero filler tokens alike.
pub fn fixed_forward<T: Real>(samples: &[FixedSample<T>], params: &ModelParams<T>) -> Result<ForwardTrace<T>> {
    let c = &params.config;
    let mut rows = Vec::with_capacity(samples.len());
    for sample in samples {
        if sample.patches.ncols() != c.patch_dim() && !sample.coords.is_empty() {
            return Err(Error::Shape(format!(
                "sample {} has patch width {}, model expects {}",
                sample.sample_id,
                sample.patches.ncols(),
                c.patch_dim()
            )));
        }
        let n = 1 + sample.len();
        let mut patches = Array2::zeros((n, c.patch_dim()));
        let kept = sample.coords.len();
        patches.slice_mut(s![1..1 + kept, ..]).assign(&sample.patches);
        let mut sources = vec![TokenSource::Cls];
        for &coord in &sample.coords {
            check_coord(c.freq_max, c.time_max, coord)?;
            sources.push(TokenSource::Patch {
                freq: coord.0,
                time: coord.1,
            });
        }
        sources.resize(n, TokenSource::Zero);
        let input = RowInput {
            patches,
            sources,
            spans: vec![Some((0, n)); n],
            valid: vec![true; n],
            slots: vec![(0, n)],
        };
        rows.push(encode_row(input, params, Readout::Cls));
    }
    let sample_slots = (0..samples.len()).map(|k| (k, 0)).collect();
    Ok(finish(rows, sample_slots, Readout::Cls, params))
}

/// `pooled · W + b`.
pub fn classify<T: Real>(pooled: &Array2<T>, params: &ModelParams<T>) -> Array2<T> {
    linear(&pooled.view(), &params.head_w, &params.head_b)
}

/// Dense masked attention pooling over encoder outputs `rows × N' × D` with a
/// `rows × n × N'` membership mask. Empty slots yield zero vectors.
pub fn mask_attention_pool<T: Real>(
    x: &Array3<T>,
    pool_mask: &Array3<bool>,
    params: &ModelParams<T>,
) -> Result<Array3<T>> {
    let (rows, n_tok, d) = x.dim();
    let (mrows, n_slots, mtok) = pool_mask.dim();
    if rows != mrows || n_tok != mtok || d != params.config.dim {
        return Err(Error::Shape(format!(
            "pool mask {:?} does not match tokens {:?}",
            pool_mask.dim(),
            x.dim()
        )));
    }
    let scale = T::one() / T::lit(d as f64).sqrt();
    let mut out = Array3::zeros((rows, n_slots, d));
    let mut w = vec![T::zero(); n_tok];
    for r in 0..rows {
        let xr = x.index_axis(Axis(0), r);
        let kp = linear(&xr, &params.pool_wk, &params.pool_bk);
        let vp = linear(&xr, &params.pool_wv, &params.pool_bv);
        for slot in 0..n_slots {
            let m = pool_mask.slice(s![r, slot, ..]);
            if !m.iter().any(|&b| b) {
                continue;
            }
            for (j, wj) in w.iter_mut().enumerate() {
                *wj = if m[j] {
                    params.pool_query.dot(&kp.row(j)) * scale
                } else {
                    T::lit(MASKED_LOGIT)
                };
            }
            softmax_in_place(&mut w);
            let mut z = Array1::<T>::zeros(d);
            for (j, &wj) in w.iter().enumerate() {
                z.scaled_add(wj, &vp.row(j));
            }
            let y = z.dot(&params.pool_wo) + &params.pool_bo;
            out.slice_mut(s![r, slot, ..]).assign(&y);
        }
    }
    Ok(out)
}

/// Mean softmax cross-entropy over samples and its gradient w.r.t. the logits.
pub fn cross_entropy<T: Real>(logits: &Array2<T>, labels: &[usize]) -> Result<(f64, Array2<T>)> {
    let (b, k) = logits.dim();
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for {b} samples", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {k} classes")));
    }
    let mut grad = logits.clone();
    let mut loss = 0.0;
    let inv_b = T::one() / T::lit(b as f64);
    for (mut row, &label) in grad.outer_iter_mut().zip(labels) {
        let probs = row.as_slice_mut().unwrap();
        softmax_in_place(probs);
        loss -= probs[label].as_f64().max(f64::MIN_POSITIVE).ln();
        probs[label] -= T::one();
        probs.iter_mut().for_each(|p| *p *= inv_b);
    }
    Ok((loss / b as f64, grad))
}

/// Analytic gradient of the loss with respect to every parameter, given `dL/dlogits`.
pub fn backward<T: Real>(trace: &ForwardTrace<T>, params: &ModelParams<T>, dlogits: &Array2<T>) -> ModelParams<T> {
    let mut grads = params.zeros_like();
    let dpooled = linear_backward(
        &trace.pooled.view(),
        &params.head_w,
        dlogits,
        &mut grads.head_w,
        &mut grads.head_b,
    );
    let d = params.config.dim;
    let mut per_row: Vec<Array2<T>> = trace
        .rows
        .iter()
        .map(|r| Array2::zeros((r.outputs.nrows(), d)))
        .collect();
    for (k, &(r, s)) in trace.sample_slots.iter().enumerate() {
        let mut dst = per_row[r].row_mut(s);
        dst += &dpooled.row(k);
    }
    for (row, dout) in trace.rows.iter().zip(&per_row) {
        backward_row(row, dout, params, &mut grads);
    }
    grads
}

fn backward_row<T: Real>(row: &RowTrace<T>, dout: &Array2<T>, params: &ModelParams<T>, grads: &mut ModelParams<T>) {
    let n = row.hf.nrows();
    let d = params.config.dim;
    let mut dhf = Array2::<T>::zeros((n, d));
    match &row.pool {
        Some(cache) => {
            let dz = linear_backward(&cache.z.view(), &params.pool_wo, dout, &mut grads.pool_wo, &mut grads.pool_bo);
            let scale = T::one() / T::lit(d as f64).sqrt();
            let mut dkp = Array2::<T>::zeros((n, d));
            let mut dvp = Array2::<T>::zeros((n, d));
            for (slot, &(start, len)) in row.input.slots.iter().enumerate() {
                let w = &cache.probs[slot];
                let dzs = dz.row(slot);
                let dw: Vec<T> = (start..start + len).map(|j| dzs.dot(&cache.vp.row(j))).collect();
                let weighted: T = w.iter().zip(&dw).map(|(&a, &b)| a * b).sum();
                for (idx, j) in (start..start + len).enumerate() {
                    dvp.row_mut(j).scaled_add(w[idx], &dzs);
                    let ds = w[idx] * (dw[idx] - weighted) * scale;
                    grads.pool_query.scaled_add(ds, &cache.kp.row(j));
                    dkp.row_mut(j).scaled_add(ds, &params.pool_query);
                }
            }
            dhf += &linear_backward(&row.hf.view(), &params.pool_wk, &dkp, &mut grads.pool_wk, &mut grads.pool_bk);
            dhf += &linear_backward(&row.hf.view(), &params.pool_wv, &dvp, &mut grads.pool_wv, &mut grads.pool_bv);
        }
        None => {
            let mut first = dhf.row_mut(0);
            first += &dout.row(0);
        }
    }
    let mut dx = layer_norm_backward(&dhf, &row.lnf, &params.norm_g, &mut grads.norm_g, &mut grads.norm_b);
    let heads = params.config.heads;
    for ((lp, cache), lg) in params.layers.iter().zip(&row.layers).zip(grads.layers.iter_mut()).rev() {
        let mut dm = dx.clone();
        zero_rows(&mut dm, &row.input.valid);
        let mut du = linear_backward(&cache.g.view(), &lp.w2, &dm, &mut lg.w2, &mut lg.b2);
        du.zip_mut_with(&cache.u, |g, &u| *g *= gelu_grad(u));
        let dh2 = linear_backward(&cache.h2.view(), &lp.w1, &du, &mut lg.w1, &mut lg.b1);
        dx += &layer_norm_backward(&dh2, &cache.ln2, &lp.ln2_g, &mut lg.ln2_g, &mut lg.ln2_b);

        let mut da = dx.clone();
        zero_rows(&mut da, &row.input.valid);
        let d_o = linear_backward(&cache.o.view(), &lp.wo, &da, &mut lg.wo, &mut lg.bo);
        let (dq, dk, dv) = span_attention_backward(
            &d_o,
            &cache.q,
            &cache.k,
            &cache.v,
            &row.input.spans,
            heads,
            &cache.attn,
        );
        let h1 = cache.h1.view();
        let mut dh1 = linear_backward(&h1, &lp.wq, &dq, &mut lg.wq, &mut lg.bq);
        dh1 += &linear_backward(&h1, &lp.wk, &dk, &mut lg.wk, &mut lg.bk);
        dh1 += &linear_backward(&h1, &lp.wv, &dv, &mut lg.wv, &mut lg.bv);
        dx += &layer_norm_backward(&dh1, &cache.ln1, &lp.ln1_g, &mut lg.ln1_g, &mut lg.ln1_b);
    }
    // embedding
    let mut patch_rows = Vec::new();
    for (i, src) in row.input.sources.iter().enumerate() {
        match *src {
            TokenSource::Patch { freq, time } => {
                let g = dx.row(i);
                grads.patch_b += &g;
                let mut pf = grads.pos_freq.row_mut(freq);
                pf += &g;
                let mut pt = grads.pos_time.row_mut(time);
                pt += &g;
                patch_rows.push(i);
            }
            TokenSource::Cls => grads.cls_token += &dx.row(i),
            TokenSource::Zero | TokenSource::Pad => {}
        }
    }
    if !patch_rows.is_empty() {
        let p = row.input.patches.select(Axis(0), &patch_rows);
        let g = dx.select(Axis(0), &patch_rows);
        grads.patch_w += &p.t().dot(&g);
    }
}
