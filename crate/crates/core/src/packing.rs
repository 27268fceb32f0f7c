//! First-come-first-served sequence packing, segment masks and token accounting.

use ndarray::{Array2, Array3};
use serde::Serialize;

use crate::spectrogram::PatchGrid;
use crate::{Error, Real, Result};

/// Per-token owner within a packed row: a sample slot or padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentId(u32);

impl SegmentId {
    pub const PAD: SegmentId = SegmentId(u32::MAX);

    pub fn slot(slot: usize) -> Self {
        assert!(slot < u32::MAX as usize, "slot index out of range");
        SegmentId(slot as u32)
    }

    pub fn is_pad(self) -> bool {
        self == Self::PAD
    }

    /// Slot index, or `None` for padding.
    pub fn index(self) -> Option<usize> {
        (!self.is_pad()).then_some(self.0 as usize)
    }
}

/// Where one input sample landed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Placement {
    pub sample_id: String,
    pub row: usize,
    pub slot: usize,
    pub start: usize,
    pub len: usize,
}

/// Row assignment produced by the greedy packer, independent of token payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackLayout {
    pub budget: usize,
    /// Padded row length `N'`: the longest row.
    pub row_len: usize,
    /// Unpadded length of every row.
    pub row_fill: Vec<usize>,
    /// One entry per input sample, in input order.
    pub placements: Vec<Placement>,
}

impl PackLayout {
    /// Greedy fill in input order; a sample that would overflow the current row opens the next.
    pub fn plan<'a>(
        samples: impl IntoIterator<Item = (&'a str, usize)>,
        budget: usize,
    ) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidArgument("budget must be positive".into()));
        }
        let mut placements = Vec::new();
        let mut row_fill: Vec<usize> = Vec::new();
        let mut row_slots: Vec<usize> = Vec::new();
        for (id, len) in samples {
            if len > budget {
                return Err(Error::SampleTooLong {
                    sample_id: id.to_string(),
                    len,
                    budget,
                });
            }
            if len == 0 {
                return Err(Error::InvalidArgument(format!("sample {id} has no tokens")));
            }
            let needs_row = match row_fill.last() {
                None => true,
                Some(&fill) => fill + len > budget,
            };
            if needs_row {
                row_fill.push(0);
                row_slots.push(0);
            }
            let row = row_fill.len() - 1;
            placements.push(Placement {
                sample_id: id.to_string(),
                row,
                slot: row_slots[row],
                start: row_fill[row],
                len,
            });
            row_fill[row] += len;
            row_slots[row] += 1;
        }
        let row_len = row_fill.iter().copied().max().unwrap_or(0);
        Ok(Self {
            budget,
            row_len,
            row_fill,
            placements,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_fill.len()
    }

    /// Largest number of samples sharing a row (`n`).
    pub fn max_slots(&self) -> usize {
        let mut counts = vec![0usize; self.n_rows()];
        for p in &self.placements {
            counts[p.row] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }

    pub fn segment_ids(&self) -> Vec<Vec<SegmentId>> {
        let mut ids = vec![vec![SegmentId::PAD; self.row_len]; self.n_rows()];
        for p in &self.placements {
            ids[p.row][p.start..p.start + p.len].fill(SegmentId::slot(p.slot));
        }
        ids
    }

    /// Placements of one row, ordered by slot.
    pub fn row_placements(&self, row: usize) -> Vec<&Placement> {
        let mut v: Vec<_> = self.placements.iter().filter(|p| p.row == row).collect();
        v.sort_by_key(|p| p.slot);
        v
    }
}

/// Anything that can be packed: an ordered run of fixed-width tokens with coordinates.
pub trait PackItem {
    fn sample_id(&self) -> &str;
    fn token_count(&self) -> usize;
    fn token_width(&self) -> usize;
    fn coord(&self, i: usize) -> (usize, usize);
    fn write_token<T: Real>(&self, i: usize, out: &mut [T]);
}

impl PackItem for PatchGrid {
    fn sample_id(&self) -> &str {
        &self.sample_id
    }
    fn token_count(&self) -> usize {
        self.len()
    }
    fn token_width(&self) -> usize {
        self.patches.ncols()
    }
    fn coord(&self, i: usize) -> (usize, usize) {
        self.coords[i]
    }
    fn write_token<T: Real>(&self, i: usize, out: &mut [T]) {
        for (o, &v) in out.iter_mut().zip(self.patches.row(i)) {
            *o = T::lit(v as f64);
        }
    }
}

/// One sample's embedded tokens with their patch coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence<T> {
    pub tokens: Array2<T>,
    pub coords: Vec<(usize, usize)>,
    pub sample_id: String,
}

impl<T: Real> TokenSequence<T> {
    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }
}

impl<T: Real> PackItem for TokenSequence<T> {
    fn sample_id(&self) -> &str {
        &self.sample_id
    }
    fn token_count(&self) -> usize {
        self.len()
    }
    fn token_width(&self) -> usize {
        self.tokens.ncols()
    }
    fn coord(&self, i: usize) -> (usize, usize) {
        self.coords[i]
    }
    fn write_token<U: Real>(&self, i: usize, out: &mut [U]) {
        for (o, &v) in out.iter_mut().zip(self.tokens.row(i)) {
            *o = U::lit(v.as_f64());
        }
    }
}

/// Rows of concatenated sample tokens, zero at padding positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedBatch<T> {
    pub layout: PackLayout,
    /// `n_rows` matrices of shape `row_len × width`.
    pub rows: Vec<Array2<T>>,
    /// Patch coordinates per position; `(0, 0)` at padding.
    pub coords: Vec<Vec<(usize, usize)>>,
    pub segment_ids: Vec<Vec<SegmentId>>,
}

impl<T: Real> PackedBatch<T> {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row_len(&self) -> usize {
        self.layout.row_len
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.ncols())
    }

    pub fn placements(&self) -> &[Placement] {
        &self.layout.placements
    }

    pub fn n_samples(&self) -> usize {
        self.layout.placements.len()
    }

    /// Appends `extra` padding positions to every row.
    pub fn with_extra_padding(&self, extra: usize) -> Self {
        let row_len = self.row_len() + extra;
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut out = Array2::zeros((row_len, r.ncols()));
                out.slice_mut(ndarray::s![..r.nrows(), ..]).assign(r);
                out
            })
            .collect();
        fn pad<U: Clone>(v: &[U], row_len: usize, fill: U) -> Vec<U> {
            let mut v = v.to_vec();
            v.resize(row_len, fill);
            v
        }
        let mut layout = self.layout.clone();
        layout.row_len = row_len;
        Self {
            layout,
            rows,
            coords: self.coords.iter().map(|c| pad(c, row_len, (0, 0))).collect(),
            segment_ids: self.segment_ids.iter().map(|s| pad(s, row_len, SegmentId::PAD)).collect(),
        }
    }
}

/// Packs samples, in order, into rows of at most `budget` tokens.
pub fn pack<T: Real, S: PackItem>(samples: &[S], budget: usize) -> Result<PackedBatch<T>> {
    let width = samples.first().map_or(0, |s| s.token_width());
    if let Some(bad) = samples.iter().find(|s| s.token_width() != width) {
        return Err(Error::Shape(format!(
            "sample {} has token width {}, expected {width}",
            bad.sample_id(),
            bad.token_width()
        )));
    }
    let layout = PackLayout::plan(samples.iter().map(|s| (s.sample_id(), s.token_count())), budget)?;
    let mut rows = vec![Array2::<T>::zeros((layout.row_len, width)); layout.n_rows()];
    let mut coords = vec![vec![(0, 0); layout.row_len]; layout.n_rows()];
    for (sample, p) in samples.iter().zip(&layout.placements) {
        for i in 0..p.len {
            let pos = p.start + i;
            sample.write_token(i, rows[p.row].row_mut(pos).as_slice_mut().unwrap());
            coords[p.row][pos] = sample.coord(i);
        }
    }
    let segment_ids = layout.segment_ids();
    Ok(PackedBatch {
        layout,
        rows,
        coords,
        segment_ids,
    })
}

/// `M[i][j]` is true iff positions `i` and `j` belong to the same sample.
pub fn build_attention_mask(segment_ids: &[SegmentId]) -> Array2<bool> {
    let n = segment_ids.len();
    Array2::from_shape_fn((n, n), |(i, j)| {
        !segment_ids[i].is_pad() && segment_ids[i] == segment_ids[j]
    })
}

/// `M[i][j]` is true iff position `j` belongs to slot `i`; `n` slots per row.
pub fn build_pool_mask(segment_ids: &[SegmentId], n: usize) -> Array2<bool> {
    Array2::from_shape_fn((n, segment_ids.len()), |(i, j)| segment_ids[j].index() == Some(i))
}

/// Key range of every query position, or `None` at padding.
///
/// Fails unless every slot occupies one contiguous run and slots appear in order.
pub fn segment_spans(segment_ids: &[SegmentId]) -> Result<Vec<Option<(usize, usize)>>> {
    let runs = segment_runs(segment_ids)?;
    let mut spans = vec![None; segment_ids.len()];
    for &(start, len) in &runs {
        spans[start..start + len].fill(Some((start, start + len)));
    }
    Ok(spans)
}

/// `(start, len)` of each slot in slot order.
pub fn segment_runs(segment_ids: &[SegmentId]) -> Result<Vec<(usize, usize)>> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut prev = SegmentId::PAD;
    for (pos, &seg) in segment_ids.iter().enumerate() {
        let Some(slot) = seg.index() else {
            prev = seg;
            continue;
        };
        if seg == prev {
            runs.last_mut().unwrap().1 += 1;
        } else {
            if slot != runs.len() {
                return Err(Error::Segments(format!(
                    "slot {slot} at position {pos} breaks contiguous in-order slots"
                )));
            }
            runs.push((pos, 1));
        }
        prev = seg;
    }
    Ok(runs)
}

/// Gathers pooled slot vectors (`rows × n × D`) back into input sample order.
pub fn unpack<T: Real>(pooled: &Array3<T>, placements: &[Placement]) -> Result<Array2<T>> {
    let (n_rows, n_slots, dim) = pooled.dim();
    let mut out = Array2::zeros((placements.len(), dim));
    for (k, p) in placements.iter().enumerate() {
        if p.row >= n_rows || p.slot >= n_slots {
            return Err(Error::Shape(format!(
                "placement of {} at row {} slot {} outside pooled {n_rows}×{n_slots}",
                p.sample_id, p.row, p.slot
            )));
        }
        out.row_mut(k).assign(&pooled.slice(ndarray::s![p.row, p.slot, ..]));
    }
    Ok(out)
}

/// Token usage of one processing regime.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PackingStats {
    pub total_tokens: usize,
    pub pad_tokens: usize,
    pub cut_tokens: usize,
    pub native_tokens: usize,
    pub rows: usize,
}

impl PackingStats {
    pub fn pad_ratio(&self) -> f64 {
        if self.total_tokens == 0 {
            0.0
        } else {
            self.pad_tokens as f64 / self.total_tokens as f64
        }
    }

    pub fn cut_ratio(&self) -> f64 {
        if self.native_tokens == 0 {
            0.0
        } else {
            self.cut_tokens as f64 / self.native_tokens as f64
        }
    }

    /// Fraction of processed positions holding real sample content.
    pub fn informative_fraction(&self) -> f64 {
        if self.total_tokens == 0 {
            0.0
        } else {
            (self.total_tokens - self.pad_tokens) as f64 / self.total_tokens as f64
        }
    }

    pub fn merge(self, other: PackingStats) -> PackingStats {
        PackingStats {
            total_tokens: self.total_tokens + other.total_tokens,
            pad_tokens: self.pad_tokens + other.pad_tokens,
            cut_tokens: self.cut_tokens + other.cut_tokens,
            native_tokens: self.native_tokens + other.native_tokens,
            rows: self.rows + other.rows,
        }
    }
}

/// Trim-or-pad every sample to `fixed` tokens, one sample per row.
pub fn fixed_length_stats(lengths: &[usize], fixed: usize) -> PackingStats {
    let pad_tokens = lengths.iter().map(|&l| fixed.saturating_sub(l)).sum();
    let cut_tokens = lengths.iter().map(|&l| l.saturating_sub(fixed)).sum();
    PackingStats {
        total_tokens: lengths.len() * fixed,
        pad_tokens,
        cut_tokens,
        native_tokens: lengths.iter().sum(),
        rows: lengths.len(),
    }
}

pub fn packed_stats(layout: &PackLayout) -> PackingStats {
    let native: usize = layout.placements.iter().map(|p| p.len).sum();
    let total = layout.n_rows() * layout.row_len;
    PackingStats {
        total_tokens: total,
        pad_tokens: total - native,
        cut_tokens: 0,
        native_tokens: native,
        rows: layout.n_rows(),
    }
}

/// Packs consecutive groups of `group` lengths and sums their statistics.
pub fn grouped_packed_stats(lengths: &[usize], group: usize, budget: usize) -> Result<PackingStats> {
    if group == 0 {
        return Err(Error::InvalidArgument("packing batch size must be positive".into()));
    }
    let ids: Vec<String> = (0..lengths.len()).map(|i| i.to_string()).collect();
    let mut total = PackingStats::default();
    for (chunk_ids, chunk) in ids.chunks(group).zip(lengths.chunks(group)) {
        let layout = PackLayout::plan(chunk_ids.iter().map(String::as_str).zip(chunk.iter().copied()), budget)?;
        total = total.merge(packed_stats(&layout));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn seq(id: &str, len: usize, dim: usize) -> TokenSequence<f64> {
        TokenSequence {
            tokens: Array2::from_shape_fn((len, dim), |(i, j)| 1.0 + i as f64 + 0.01 * j as f64),
            coords: (0..len).map(|i| (0, i)).collect(),
            sample_id: id.into(),
        }
    }

    fn lengths_layout(lengths: &[usize], budget: usize) -> PackLayout {
        let ids: Vec<String> = (0..lengths.len()).map(|i| format!("s{i}")).collect();
        PackLayout::plan(ids.iter().map(String::as_str).zip(lengths.iter().copied()), budget).unwrap()
    }

    #[test]
    fn greedy_trace() {
        let layout = lengths_layout(&[512, 1024, 600, 200], 2048);
        assert_eq!(layout.row_fill, vec![1536, 800]);
        assert_eq!(layout.row_len, 1536);
        let where_: Vec<_> = layout.placements.iter().map(|p| (p.row, p.slot, p.start)).collect();
        assert_eq!(where_, vec![(0, 0, 0), (0, 1, 512), (1, 0, 0), (1, 1, 600)]);
        let stats = packed_stats(&layout);
        assert_eq!(stats.pad_tokens, 736);
        assert_eq!(stats.total_tokens, 3072);
        assert_eq!(stats.pad_ratio(), 736.0 / 3072.0);
        assert_eq!(stats.cut_ratio(), 0.0);
    }

    #[test]
    fn single_and_exact_fill() {
        let layout = lengths_layout(&[100], 2048);
        assert_eq!((layout.n_rows(), layout.row_len), (1, 100));
        assert_eq!(packed_stats(&layout).pad_tokens, 0);

        let layout = lengths_layout(&[2048, 2048], 2048);
        assert_eq!((layout.n_rows(), layout.row_len), (2, 2048));
        assert_eq!(packed_stats(&layout).pad_ratio(), 0.0);
    }

    #[test]
    fn one_sample_per_row_padding() {
        let layout = lengths_layout(&[30, 50, 20], 60);
        assert_eq!(layout.n_rows(), 3);
        assert_eq!(packed_stats(&layout).pad_tokens, (50 - 30) + (50 - 20));
    }

    #[test]
    fn oversized_sample_is_named() {
        let err = PackLayout::plan([("ok", 10), ("huge", 3000)], 2048).unwrap_err();
        match err {
            Error::SampleTooLong { sample_id, len, .. } => {
                assert_eq!(sample_id, "huge");
                assert_eq!(len, 3000);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn pack_places_tokens_and_zero_pads() {
        let samples = vec![seq("a", 3, 2), seq("b", 2, 2), seq("c", 4, 2)];
        let batch: PackedBatch<f64> = pack(&samples, 5).unwrap();
        assert_eq!(batch.n_rows(), 2);
        assert_eq!(batch.row_len(), 5);
        assert_eq!(batch.rows[0].row(3).to_vec(), vec![1.0, 1.01]);
        assert_eq!(batch.rows[1].row(4).to_vec(), vec![0.0, 0.0]);
        let s = SegmentId::slot;
        assert_eq!(batch.segment_ids[1], vec![s(0), s(0), s(0), s(0), SegmentId::PAD]);
    }

    #[test]
    fn attention_mask_examples() {
        let s = SegmentId::slot;
        let m = build_attention_mask(&[s(0), s(0), s(1), s(1)]);
        let expected = [
            [true, true, false, false],
            [true, true, false, false],
            [false, false, true, true],
            [false, false, true, true],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m[[i, j]], expected[i][j], "({i},{j})");
            }
        }
        assert!(build_attention_mask(&[s(0), s(0), s(0)]).iter().all(|&b| b));
        let m = build_attention_mask(&[s(0), SegmentId::PAD]);
        assert_eq!(m.iter().filter(|&&b| b).count(), 1);
        assert!(m[[0, 0]]);
    }

    #[test]
    fn pool_mask_examples() {
        let s = SegmentId::slot;
        let m = build_pool_mask(&[s(0), s(0), s(1)], 2);
        assert_eq!(m.row(0).to_vec(), vec![true, true, false]);
        assert_eq!(m.row(1).to_vec(), vec![false, false, true]);
        assert!(build_pool_mask(&[s(0); 4], 1).iter().all(|&b| b));
        let m = build_pool_mask(&[s(0), s(0)], 3);
        assert!(m.row(1).iter().chain(m.row(2).iter()).all(|&b| !b));
    }

    #[test]
    fn spans_reject_non_contiguous() {
        let s = SegmentId::slot;
        assert!(segment_spans(&[s(0), s(1), s(0)]).is_err());
        assert!(segment_spans(&[s(1), s(0)]).is_err());
        let spans = segment_spans(&[s(0), s(0), s(1), SegmentId::PAD]).unwrap();
        assert_eq!(spans, vec![Some((0, 2)), Some((0, 2)), Some((2, 3)), None]);
    }

    #[test]
    fn unpack_orders_by_input() {
        let layout = lengths_layout(&[512, 1024, 600, 200], 2048);
        let pooled = Array3::from_shape_fn((2, 2, 1), |(r, s, _)| (10 * r + s) as f64);
        let out = unpack(&pooled, &layout.placements).unwrap();
        assert_eq!(out.column(0).to_vec(), vec![0.0, 1.0, 10.0, 11.0]);

        let identity = lengths_layout(&[5, 5, 5], 5);
        let pooled = Array3::from_shape_fn((3, 1, 2), |(r, _, d)| (r * 2 + d) as f64);
        let out = unpack(&pooled, &identity.placements).unwrap();
        assert_eq!(out, pooled.index_axis(ndarray::Axis(1), 0));

        let mut bad = identity.placements.clone();
        bad[0].slot = 4;
        assert!(unpack(&pooled, &bad).is_err());
    }

    #[test]
    fn fixed_stats_examples() {
        let s = fixed_length_stats(&[10, 10], 10);
        assert_eq!((s.pad_ratio(), s.cut_ratio()), (0.0, 0.0));
        let s = fixed_length_stats(&[5, 15], 10);
        assert_eq!((s.pad_tokens, s.cut_tokens), (5, 5));
        assert_eq!((s.pad_ratio(), s.cut_ratio()), (0.25, 0.25));
    }

    proptest! {
        #[test]
        fn packing_invariants(lengths in prop::collection::vec(1usize..300, 1..40), budget in 300usize..700) {
            let layout = lengths_layout(&lengths, budget);
            prop_assert!(layout.row_len <= budget);
            prop_assert!(layout.row_fill.iter().all(|&f| f <= budget));
            let ids = layout.segment_ids();
            let non_pad: usize = ids.iter().flatten().filter(|s| !s.is_pad()).count();
            prop_assert_eq!(non_pad, lengths.iter().sum::<usize>());
            for (row, seg) in ids.iter().enumerate() {
                let runs = segment_runs(seg).unwrap();
                let placed = layout.row_placements(row);
                prop_assert_eq!(runs.len(), placed.len());
                for (&(start, len), p) in runs.iter().zip(placed) {
                    prop_assert_eq!((start, len), (p.start, p.len));
                }
                let mask = build_attention_mask(seg);
                prop_assert_eq!(&mask.t(), &mask.view());
                let pool = build_pool_mask(seg, layout.max_slots());
                for j in 0..seg.len() {
                    let covered = (0..layout.max_slots()).any(|i| pool[[i, j]]);
                    prop_assert_eq!(covered, !seg[j].is_pad());
                }
            }
            // determinism
            prop_assert_eq!(lengths_layout(&lengths, budget), layout);
        }
    }
}
