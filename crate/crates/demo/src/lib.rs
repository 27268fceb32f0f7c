//! Browser bindings for three views of the core crate: packing layout,
//! attention mask and compressed log-mel spectrograms.

use elastic_ast::packing::{build_attention_mask, PackLayout};
use elastic_ast::spectrogram::{compress_avgpool, compress_fshift, MelConfig, Waveform};
use wasm_bindgen::prelude::*;

/// Packing of a list of token counts into rows of `budget`.
#[wasm_bindgen]
pub struct Layout {
    inner: PackLayout,
}

#[wasm_bindgen]
impl Layout {
    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[wasm_bindgen(getter)]
    pub fn row_len(&self) -> usize {
        self.inner.row_len
    }

    #[wasm_bindgen(getter)]
    pub fn max_slots(&self) -> usize {
        self.inner.max_slots()
    }

    /// `[row, slot, start, len]` per sample, flattened, in input order.
    pub fn placements(&self) -> Vec<u32> {
        self.inner
            .placements
            .iter()
            .flat_map(|p| [p.row, p.slot, p.start, p.len].map(|v| v as u32))
            .collect()
    }

    pub fn pad_tokens(&self) -> usize {
        self.inner.row_fill.iter().map(|f| self.inner.row_len - f).sum()
    }

    /// Row-major `row_len × row_len` mask of one row, 1 where attention is allowed.
    pub fn attention_mask(&self, row: usize) -> Result<Vec<u8>, JsError> {
        mask_bytes(&self.inner, row).map_err(|e| JsError::new(&e))
    }
}

fn plan(lengths: &[u32], budget: usize) -> Result<PackLayout, String> {
    let ids: Vec<String> = (0..lengths.len()).map(|i| format!("s{i}")).collect();
    PackLayout::plan(ids.iter().map(String::as_str).zip(lengths.iter().map(|&l| l as usize)), budget)
        .map_err(|e| e.to_string())
}

fn mask_bytes(layout: &PackLayout, row: usize) -> Result<Vec<u8>, String> {
    let ids = layout.segment_ids();
    let ids = ids.get(row).ok_or_else(|| format!("row {row} out of range"))?;
    Ok(build_attention_mask(ids).iter().map(|&b| b as u8).collect())
}

#[wasm_bindgen]
pub fn pack_layout(lengths: &[u32], budget: usize) -> Result<Layout, JsError> {
    plan(lengths, budget).map(|inner| Layout { inner }).map_err(|e| JsError::new(&e))
}

/// Log-mel energies, frequency-major.
#[wasm_bindgen]
pub struct SpecView {
    n_mels: usize,
    n_frames: usize,
    frame_shift_ms: f64,
    values: Vec<f32>,
}

#[wasm_bindgen]
impl SpecView {
    #[wasm_bindgen(getter)]
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    #[wasm_bindgen(getter)]
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    #[wasm_bindgen(getter)]
    pub fn frame_shift_ms(&self) -> f64 {
        self.frame_shift_ms
    }

    pub fn values(&self) -> Vec<f32> {
        self.values.clone()
    }
}

fn featurize(samples: &[f32], sample_rate: u32, n_mels: usize, mode: &str, factor: f64) -> Result<SpecView, String> {
    let wave = Waveform::new(samples.to_vec(), sample_rate).map_err(|e| e.to_string())?;
    let base = MelConfig { n_mels, ..MelConfig::default() };
    let spec = match mode {
        "fshift" => compress_fshift(&wave, factor, &base),
        "avgpool" => {
            if factor.fract() != 0.0 {
                return Err(format!("average-pool factor must be an integer, got {factor}"));
            }
            compress_fshift(&wave, 1.0, &base).and_then(|s| compress_avgpool(&s, factor as usize))
        }
        other => return Err(format!("unknown compression {other}")),
    }
    .map_err(|e| e.to_string())?;
    Ok(SpecView {
        n_mels: spec.n_mels(),
        n_frames: spec.n_frames(),
        frame_shift_ms: spec.frame_shift_ms,
        values: spec.energies.iter().copied().collect(),
    })
}

/// `mode` is `"fshift"` (factor 1.0 to 4.0) or `"avgpool"` (factor 1 to 4).
#[wasm_bindgen]
pub fn spectrogram(samples: &[f32], sample_rate: u32, n_mels: usize, mode: &str, factor: f64) -> Result<SpecView, JsError> {
    featurize(samples, sample_rate, n_mels, mode, factor).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_mask() {
        let layout = plan(&[3, 2, 4], 5).unwrap();
        assert_eq!(layout.n_rows(), 2);
        let l = Layout { inner: layout };
        assert_eq!(l.placements(), vec![0, 0, 0, 3, 0, 1, 3, 2, 1, 0, 0, 4]);
        assert_eq!(l.pad_tokens(), 1);
        let m = mask_bytes(&l.inner, 1).unwrap();
        // row 1 holds four tokens of one sample and one PAD
        let expect: Vec<u8> = (0..25).map(|i| u8::from(i / 5 < 4 && i % 5 < 4)).collect();
        assert_eq!(m, expect);
        assert!(mask_bytes(&l.inner, 2).is_err());
        assert!(plan(&[9], 5).is_err());
    }

    #[test]
    fn compression_shrinks_time() {
        let samples: Vec<f32> = (0..16000).map(|i| (i as f32 * 0.2).sin() * 0.3).collect();
        let base = featurize(&samples, 16000, 32, "fshift", 1.0).unwrap();
        assert_eq!(base.n_frames, 98);
        assert_eq!(base.values.len(), 32 * 98);
        assert_eq!(featurize(&samples, 16000, 32, "fshift", 2.0).unwrap().n_frames, 49);
        let pooled = featurize(&samples, 16000, 32, "avgpool", 3.0).unwrap();
        assert_eq!((pooled.n_frames, pooled.frame_shift_ms), (32, 30.0));
        assert!(featurize(&samples, 16000, 32, "avgpool", 1.5).is_err());
        assert!(featurize(&samples, 16000, 32, "median", 1.0).is_err());
    }
}
