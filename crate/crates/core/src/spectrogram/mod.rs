//! Waveforms, log-mel spectrograms, temporal compression and patchification.

mod io;
mod mel;

use std::path::Path;

use ndarray::{s, Array2};

pub use io::{decode_spec1, encode_spec1, read_spec1, write_spec1, SPEC1_MAGIC};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelConfig, MelExtractor, LOG_FLOOR};

use crate::{Error, Result};

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidArgument("waveform has no samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Log-mel energies laid out as `n_mels × n_frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub energies: Array2<f32>,
    pub frame_shift_ms: f64,
}

impl Spectrogram {
    pub fn new(energies: Array2<f32>, frame_shift_ms: f64) -> Result<Self> {
        if energies.ncols() == 0 || energies.nrows() == 0 {
            return Err(Error::Shape("spectrogram needs at least one bin and frame".into()));
        }
        if !(frame_shift_ms > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "frame shift must be positive, got {frame_shift_ms}"
            )));
        }
        Ok(Self {
            energies,
            frame_shift_ms,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.energies.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.energies.ncols()
    }

    /// Keeps at most the first `max_frames` frames.
    pub fn truncated(&self, max_frames: usize) -> Spectrogram {
        let keep = max_frames.clamp(1, self.n_frames());
        Spectrogram {
            energies: self.energies.slice(s![.., ..keep]).to_owned(),
            frame_shift_ms: self.frame_shift_ms,
        }
    }

    /// Appends zero-valued frames until the frame count is a multiple of `multiple`.
    pub fn pad_frames_to_multiple(&self, multiple: usize) -> Spectrogram {
        if multiple <= 1 || self.n_frames().is_multiple_of(multiple) {
            return self.clone();
        }
        let target = self.n_frames().div_ceil(multiple) * multiple;
        let mut energies = Array2::zeros((self.n_mels(), target));
        energies
            .slice_mut(s![.., ..self.n_frames()])
            .assign(&self.energies);
        Spectrogram {
            energies,
            frame_shift_ms: self.frame_shift_ms,
        }
    }
}

/// Reads a 16-bit PCM mono WAV file.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedAudio(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedAudio(format!(
            "{}: {:?} {}-bit samples, only 16-bit PCM is supported",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a waveform as 16-bit PCM mono, clipping to full scale.
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &wave.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

/// Log-mel spectrogram with the given framing.
pub fn mel_spectrogram(wave: &Waveform, config: &MelConfig) -> Result<Spectrogram> {
    MelExtractor::new(config, wave.sample_rate)?.compute(wave)
}

/// Frame-shift compression: re-featurize with the shift multiplied by `factor`.
pub fn compress_fshift(wave: &Waveform, factor: f64, base: &MelConfig) -> Result<Spectrogram> {
    if !(factor >= 1.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "frame-shift compression factor must be >= 1.0, got {factor}"
        )));
    }
    let config = MelConfig {
        shift_ms: base.shift_ms * factor,
        ..base.clone()
    };
    mel_spectrogram(wave, &config)
}

/// Average-pooling compression along time with kernel and stride `1 × factor`.
///
/// Trailing frames that do not fill a whole kernel are dropped.
pub fn compress_avgpool(spec: &Spectrogram, factor: usize) -> Result<Spectrogram> {
    if !(1..=4).contains(&factor) {
        return Err(Error::InvalidArgument(format!(
            "average-pool factor must be one of 1, 2, 3, 4; got {factor}"
        )));
    }
    if spec.n_frames() < factor {
        return Err(Error::Shape(format!(
            "{} frames cannot be pooled by {factor}",
            spec.n_frames()
        )));
    }
    if factor == 1 {
        return Ok(spec.clone());
    }
    let out_frames = spec.n_frames() / factor;
    let mut energies = Array2::<f32>::zeros((spec.n_mels(), out_frames));
    for (bin, row) in spec.energies.outer_iter().enumerate() {
        for t in 0..out_frames {
            let sum: f64 = (0..factor).map(|k| row[t * factor + k] as f64).sum();
            energies[[bin, t]] = (sum / factor as f64) as f32;
        }
    }
    Spectrogram::new(energies, spec.frame_shift_ms * factor as f64)
}

/// A spectrogram cut into non-overlapping `p×p` patches.
///
/// Patches are stored one per row, each flattened bin-major (all frames of the
/// patch's first bin, then the next bin). Patch order is time-major: every
/// frequency row of time column 0, then column 1, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub patches: Array2<f32>,
    /// `(freq_index, time_index)` per patch.
    pub coords: Vec<(usize, usize)>,
    pub patch_size: usize,
    pub freq_patches: usize,
    pub time_patches: usize,
    pub sample_id: String,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Keeps the first `time_patches` time columns.
    pub fn truncated_time(&self, time_patches: usize) -> PatchGrid {
        let keep_cols = time_patches.min(self.time_patches);
        let keep = keep_cols * self.freq_patches;
        PatchGrid {
            patches: self.patches.slice(s![..keep, ..]).to_owned(),
            coords: self.coords[..keep].to_vec(),
            patch_size: self.patch_size,
            freq_patches: self.freq_patches,
            time_patches: keep_cols,
            sample_id: self.sample_id.clone(),
        }
    }

    /// Rebuilds the (time-truncated) spectrogram grid from the patches.
    pub fn reassemble(&self) -> Array2<f32> {
        let p = self.patch_size;
        let mut grid = Array2::zeros((self.freq_patches * p, self.time_patches * p));
        for (patch, &(a, b)) in self.patches.outer_iter().zip(&self.coords) {
            for i in 0..p {
                for j in 0..p {
                    grid[[a * p + i, b * p + j]] = patch[i * p + j];
                }
            }
        }
        grid
    }
}

/// Cuts a spectrogram into `p×p` patches, truncating the time axis to a multiple of `p`.
pub fn patchify(spec: &Spectrogram, p: usize, sample_id: impl Into<String>) -> Result<PatchGrid> {
    if p == 0 {
        return Err(Error::InvalidArgument("patch size must be positive".into()));
    }
    if !spec.n_mels().is_multiple_of(p) {
        return Err(Error::Shape(format!(
            "{} mel bins are not divisible by patch size {p}",
            spec.n_mels()
        )));
    }
    let freq_patches = spec.n_mels() / p;
    let time_patches = spec.n_frames() / p;
    if time_patches == 0 {
        return Err(Error::Shape(format!(
            "{} frames are fewer than one patch of {p}",
            spec.n_frames()
        )));
    }
    let count = freq_patches * time_patches;
    let mut patches = Array2::<f32>::zeros((count, p * p));
    let mut coords = Vec::with_capacity(count);
    for b in 0..time_patches {
        for a in 0..freq_patches {
            let idx = coords.len();
            let block = spec.energies.slice(s![a * p..(a + 1) * p, b * p..(b + 1) * p]);
            for (dst, &src) in patches.row_mut(idx).iter_mut().zip(block.iter()) {
                *dst = src;
            }
            coords.push((a, b));
        }
    }
    Ok(PatchGrid {
        patches,
        coords,
        patch_size: p,
        freq_patches,
        time_patches,
        sample_id: sample_id.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn ramp(n_mels: usize, n_frames: usize) -> Spectrogram {
        let energies = Array2::from_shape_fn((n_mels, n_frames), |(_, j)| j as f32);
        Spectrogram::new(energies, 10.0).unwrap()
    }

    #[test]
    fn avgpool_identity() {
        let s = ramp(8, 13);
        assert_eq!(compress_avgpool(&s, 1).unwrap(), s);
    }

    #[test]
    fn avgpool_pairwise_means() {
        let s = ramp(128, 10);
        let out = compress_avgpool(&s, 2).unwrap();
        assert_eq!(out.energies.dim(), (128, 5));
        for row in out.energies.outer_iter() {
            assert_eq!(row.to_vec(), vec![0.5, 2.5, 4.5, 6.5, 8.5]);
        }
        assert_eq!(out.frame_shift_ms, 20.0);
    }

    #[test]
    fn avgpool_constant_stays_constant() {
        let s = Spectrogram::new(Array2::from_elem((16, 23), -3.25f32), 10.0).unwrap();
        for c in 1..=4 {
            let out = compress_avgpool(&s, c).unwrap();
            assert_eq!(out.n_frames(), 23 / c);
            assert!(out.energies.iter().all(|&v| v == -3.25));
        }
    }

    #[test]
    fn avgpool_rejects_bad_factor() {
        let s = ramp(4, 10);
        assert!(compress_avgpool(&s, 0).is_err());
        assert!(compress_avgpool(&s, 5).is_err());
        assert!(compress_avgpool(&ramp(4, 2), 3).is_err());
    }

    #[test]
    fn patchify_geometry() {
        let g = patchify(&ramp(128, 1024), 16, "a").unwrap();
        assert_eq!(g.len(), 512);
        assert_eq!((g.freq_patches, g.time_patches), (8, 64));

        let g = patchify(&ramp(128, 1030), 16, "b").unwrap();
        assert_eq!(g.len(), 512);
        assert_eq!(g.time_patches, 64);

        let g = patchify(&ramp(128, 16), 16, "c").unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.coords, (0..8).map(|a| (a, 0)).collect::<Vec<_>>());
    }

    #[test]
    fn patchify_is_time_major() {
        let g = patchify(&ramp(32, 48), 16, "x").unwrap();
        assert_eq!(g.coords, vec![(0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (1, 2)]);
        // ramp value equals the frame index, so patch (a, b) starts at 16 b
        assert_eq!(g.patches[[2, 0]], 16.0);
        assert_eq!(g.patches[[3, 17]], 17.0);
    }

    #[test]
    fn patchify_errors() {
        assert!(patchify(&ramp(100, 64), 16, "x").is_err());
        assert!(patchify(&ramp(32, 15), 16, "x").is_err());
    }

    #[test]
    fn pad_to_multiple() {
        let s = ramp(4, 998);
        assert_eq!(s.pad_frames_to_multiple(16).n_frames(), 1008);
        assert_eq!(s.pad_frames_to_multiple(256).n_frames(), 1024);
        assert_eq!(ramp(4, 1024).pad_frames_to_multiple(256).n_frames(), 1024);
        let padded = s.pad_frames_to_multiple(256);
        assert_eq!(padded.energies[[1, 997]], 997.0);
        assert_eq!(padded.energies[[1, 998]], 0.0);
    }
}
