use std::path::{Path, PathBuf};

use elastic_ast::spectrogram::{
    compress_avgpool, compress_fshift, load_wav, write_spec1, MelConfig, Spectrogram,
};

use crate::args::FeaturizeArgs;
use crate::output::{csv_writer, finish};
use crate::{CliError, CliResult};

pub fn run(a: &FeaturizeArgs) -> CliResult<()> {
    if a.patch == 0 {
        return Err(CliError::Usage("--patch must be positive".into()));
    }
    let config = MelConfig {
        window_ms: a.window_ms,
        shift_ms: a.shift_ms,
        n_mels: a.n_mels,
    };
    let jobs: Vec<(PathBuf, PathBuf)> = if a.input.is_dir() {
        std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
        let mut wavs: Vec<PathBuf> = std::fs::read_dir(&a.input)
            .map_err(|e| CliError::io(&a.input, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        wavs.sort();
        wavs.into_iter()
            .map(|w| {
                let out = a.out.join(w.file_stem().unwrap_or_default()).with_extension("spec");
                (w, out)
            })
            .collect()
    } else {
        vec![(a.input.clone(), a.out.clone())]
    };

    let mut w = csv_writer(None)?;
    w.write_record(["sample_id", "n_mels", "n_frames", "frame_shift_ms", "patches"])?;
    for (wav, out) in jobs {
        let spec = featurize_file(&wav, &config, a)?;
        write_spec1(&out, &spec)?;
        let patches = (spec.n_mels() / a.patch) * (spec.n_frames() / a.patch);
        w.write_record([
            stem(&wav),
            spec.n_mels().to_string(),
            spec.n_frames().to_string(),
            spec.frame_shift_ms.to_string(),
            patches.to_string(),
        ])?;
    }
    finish(w)
}

fn featurize_file(path: &Path, config: &MelConfig, a: &FeaturizeArgs) -> CliResult<Spectrogram> {
    let wave = load_wav(path)?;
    let mut spec = compress_fshift(&wave, a.compress_fshift.unwrap_or(1.0), config)?;
    if let Some(c) = a.compress_avgpool {
        spec = compress_avgpool(&spec, c)?;
    }
    if a.pad_to_multiple > 0 {
        spec = spec.pad_frames_to_multiple(a.pad_to_multiple * a.patch);
    }
    Ok(spec)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
