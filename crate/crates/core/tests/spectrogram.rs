use std::f64::consts::PI;

use elastic_ast::spectrogram::{
    compress_avgpool, compress_fshift, load_wav, mel_filterbank, mel_spectrogram, patchify, read_spec1,
    write_spec1, write_wav, MelConfig, Spectrogram, Waveform, LOG_FLOOR,
};
use ndarray::Array2;

fn sine(freq: f64, secs: f64, sr: u32) -> Waveform {
    let n = (secs * sr as f64) as usize;
    Waveform::new(
        (0..n).map(|i| (0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin()) as f32).collect(),
        sr,
    )
    .unwrap()
}

/// Power spectrum of one windowed frame by the O(n²) DFT definition.
fn dft_power(frame: &[f64], n_fft: usize) -> Vec<f64> {
    (0..=n_fft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &x) in frame.iter().enumerate() {
                let a = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            re * re + im * im
        })
        .collect()
}

fn htk_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

#[test]
fn sine_peak_lands_in_nearest_mel_band() {
    let wave = sine(1000.0, 1.0, 16000);
    let spec = mel_spectrogram(&wave, &MelConfig::default()).unwrap();
    // centers of 128 bands evenly spaced on the mel axis between 0 Hz and Nyquist
    let top = htk_mel(8000.0);
    let center_hz = |m: usize| 700.0 * (10f64.powf(top * (m + 1) as f64 / 129.0 / 2595.0) - 1.0);
    let nearest = (0..128)
        .min_by(|&a, &b| (center_hz(a) - 1000.0).abs().total_cmp(&(center_hz(b) - 1000.0).abs()))
        .unwrap();

    let frame = 40;
    let col = spec.energies.column(frame);
    let argmax = (0..128).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
    assert_eq!(argmax, nearest);

    // direct DFT of the same frame through the filterbank
    let (win, hop, n_fft) = (400, 160, 512);
    let frame_samples: Vec<f64> = (0..win)
        .map(|n| {
            let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos();
            wave.samples[frame * hop + n] as f64 * w
        })
        .collect();
    let power = dft_power(&frame_samples, n_fft);
    let (bank, _) = mel_filterbank(128, n_fft, 16000);
    let oracle: Vec<f64> = bank
        .outer_iter()
        .map(|f| (f.iter().zip(&power).map(|(a, b)| a * b).sum::<f64>() + LOG_FLOOR).ln())
        .collect();
    let oracle_max = (0..128).max_by(|&a, &b| oracle[a].total_cmp(&oracle[b])).unwrap();
    assert_eq!(oracle_max, nearest);
    for m in 0..128 {
        assert!((oracle[m] - col[m] as f64).abs() < 1e-3 * oracle[m].abs().max(1.0), "band {m}");
    }
}

#[test]
fn filterbank_matches_htk_centers() {
    let (_, centers) = mel_filterbank(128, 512, 16000);
    let top = htk_mel(8000.0);
    for (m, c) in centers.iter().enumerate() {
        let want = 700.0 * (10f64.powf(top * (m + 1) as f64 / 129.0 / 2595.0) - 1.0);
        assert!((c - want).abs() < 1e-6, "{m}: {c} vs {want}");
    }
}

#[test]
fn silence_is_the_log_floor() {
    let wave = Waveform::new(vec![0.0; 16000], 16000).unwrap();
    let spec = mel_spectrogram(&wave, &MelConfig::default()).unwrap();
    let floor = LOG_FLOOR.ln() as f32;
    assert!(spec.energies.iter().all(|&v| v == floor));
}

#[test]
fn ten_seconds_geometry() {
    let wave = sine(440.0, 10.0, 16000);
    assert_eq!(wave.samples.len(), 160_000);
    let spec = mel_spectrogram(&wave, &MelConfig::default()).unwrap();
    assert_eq!((spec.n_mels(), spec.n_frames()), (128, 998));
    let padded = spec.pad_frames_to_multiple(256);
    assert_eq!(padded.n_frames(), 1024);
    let grid = patchify(&padded, 16, "x").unwrap();
    assert_eq!(grid.len(), 512);
}

#[test]
fn fshift_frame_counts() {
    let wave = sine(440.0, 10.0, 16000);
    let base = MelConfig::default();
    let one = compress_fshift(&wave, 1.0, &base).unwrap();
    assert_eq!(one, mel_spectrogram(&wave, &base).unwrap());
    let two = compress_fshift(&wave, 2.0, &base).unwrap();
    assert_eq!(two.frame_shift_ms, 20.0);
    let four = compress_fshift(&wave, 4.0, &base).unwrap();
    // windows of 400 samples stepped by 640 inside 160000 samples
    let mut count = 0;
    while count * 640 + 400 <= 160_000 {
        count += 1;
    }
    assert_eq!(four.n_frames(), count);
    assert!(compress_fshift(&wave, 0.5, &base).is_err());
}

#[test]
fn avgpool_of_constant_is_constant() {
    let spec = Spectrogram::new(Array2::from_elem((8, 21), 1.25), 10.0).unwrap();
    for c in 1..=4 {
        let out = compress_avgpool(&spec, c).unwrap();
        assert_eq!(out.n_frames(), 21 / c);
        assert!(out.energies.iter().all(|&v| v == 1.25));
        assert_eq!(out.frame_shift_ms, 10.0 * c as f64);
    }
}

#[test]
fn wav_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("silence.wav");
    write_wav(&path, &Waveform::new(vec![0.0; 16000], 16000).unwrap()).unwrap();
    let w = load_wav(&path).unwrap();
    assert_eq!((w.samples.len(), w.sample_rate), (16000, 16000));
    assert!(w.samples.iter().all(|&s| s == 0.0));

    let path = dir.path().join("square.wav");
    let mut writer = hound::WavWriter::create(
        &path,
        hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        },
    )
    .unwrap();
    for i in 0..1000 {
        writer.write_sample(if (i / 8) % 2 == 0 { i16::MAX } else { i16::MIN }).unwrap();
    }
    writer.finalize().unwrap();
    let w = load_wav(&path).unwrap();
    for (i, s) in w.samples.iter().enumerate() {
        let want = if (i / 8) % 2 == 0 { 1.0 } else { -1.0 };
        assert!((s - want).abs() <= 1.0 / 32768.0);
    }

    let path = dir.path().join("stereo.wav");
    let mut writer = hound::WavWriter::create(
        &path,
        hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        },
    )
    .unwrap();
    writer.write_sample(0i16).unwrap();
    writer.write_sample(0i16).unwrap();
    writer.finalize().unwrap();
    assert!(load_wav(&path).is_err());
    assert!(load_wav(dir.path().join("missing.wav")).is_err());
}

#[test]
fn spec1_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = mel_spectrogram(&sine(700.0, 0.5, 16000), &MelConfig::default()).unwrap();
    let path = dir.path().join("a.spec");
    write_spec1(&path, &spec).unwrap();
    assert_eq!(read_spec1(&path).unwrap(), spec);
}
