//! `SPEC1` spectrogram files: magic, `n_mels`, `n_frames`, frame shift in µs
//! (little-endian `u32`s), then `n_mels × n_frames` little-endian `f32`s,
//! frequency-major.

use std::path::Path;

use ndarray::Array2;

use super::Spectrogram;
use crate::{Error, Result};

pub const SPEC1_MAGIC: &[u8; 5] = b"SPEC1";
const HEADER_LEN: usize = 5 + 12;

pub fn encode_spec1(spec: &Spectrogram) -> Result<Vec<u8>> {
    let shift_us = (spec.frame_shift_ms * 1000.0).round();
    if !(1.0..=u32::MAX as f64).contains(&shift_us) {
        return Err(Error::Format(format!(
            "frame shift {} ms not representable in microseconds",
            spec.frame_shift_ms
        )));
    }
    let n_mels = u32::try_from(spec.n_mels())
        .map_err(|_| Error::Format("too many mel bins".into()))?;
    let n_frames = u32::try_from(spec.n_frames())
        .map_err(|_| Error::Format("too many frames".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * spec.energies.len());
    out.extend_from_slice(SPEC1_MAGIC);
    out.extend_from_slice(&n_mels.to_le_bytes());
    out.extend_from_slice(&n_frames.to_le_bytes());
    out.extend_from_slice(&(shift_us as u32).to_le_bytes());
    for &v in spec.energies.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_spec1(bytes: &[u8]) -> Result<Spectrogram> {
    if bytes.len() < HEADER_LEN || &bytes[..5] != SPEC1_MAGIC {
        return Err(Error::Format("missing SPEC1 header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap());
    let (n_mels, n_frames, shift_us) = (word(0) as usize, word(1) as usize, word(2));
    let expected = n_mels
        .checked_mul(n_frames)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("SPEC1 dimensions overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::Format(format!(
            "SPEC1 body is {} bytes, header declares {expected}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let energies = Array2::from_shape_vec((n_mels, n_frames), values)
        .map_err(|e| Error::Format(e.to_string()))?;
    Spectrogram::new(energies, shift_us as f64 / 1000.0)
}

pub fn write_spec1(path: impl AsRef<Path>, spec: &Spectrogram) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_spec1(spec)?).map_err(|e| Error::io(path, e))
}

pub fn read_spec1(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    decode_spec1(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
