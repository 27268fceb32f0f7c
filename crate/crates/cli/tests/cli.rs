use std::path::Path;
use std::process::{Command, Output};

use elastic_ast::checkpoint;
use elastic_ast::encoder::encoder_forward;
use elastic_ast::packing::pack;
use elastic_ast::spectrogram::{load_wav, mel_spectrogram, patchify, write_wav, MelConfig, Waveform};

const BIN: &str = env!("CARGO_BIN_EXE_elastic-ast");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("ELASTIC_SEED").output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn chirp(path: &Path, secs: f64, f0: f64) {
    let n = (secs * 16000.0) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / 16000.0;
            (0.4 * (2.0 * std::f64::consts::PI * (f0 + 300.0 * t) * t).sin()) as f32
        })
        .collect();
    write_wav(path, &Waveform::new(samples, 16000).unwrap()).unwrap();
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_rejected() {
    let out = run(&["pack-stats", "--synthetic", "10", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_errors_are_one_line() {
    let out = run(&["pack-stats", "--lengths", "/nonexistent/lengths.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: kind=io msg="), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn oversized_sample_names_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    std::fs::write(&m, "10\n5000\n").unwrap();
    let out = run(&["pack-stats", "--lengths", m.to_str().unwrap(), "--budget", "2048"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=sample_too_long"));
}

#[test]
fn pack_stats_manifest_row() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    std::fs::write(&m, "sample_id,token_count\na,512\nb,1024\nc,600\nd,200\n").unwrap();
    let csv = stdout(&run(&["pack-stats", "--lengths", m.to_str().unwrap(), "--budget", "2048", "--fixed-T", "1024"]));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "regime,batch,pad_ratio,cut_ratio,rows,total_tokens,pad_tokens,cut_tokens,native_tokens");
    assert!(lines[1].starts_with("fixed,,"));
    assert_eq!(lines[2], "packed,4,0.23958333333333334,0,2,3072,736,0,2336");
}

#[test]
fn seed_comes_from_environment_unless_given() {
    let args = ["pack-stats", "--synthetic", "50", "--batch-sizes", "12"];
    let base = stdout(&run(&args));
    let env = |seed: &str| {
        stdout(&Command::new(BIN).args(args).env("ELASTIC_SEED", seed).output().unwrap())
    };
    assert_eq!(env("0"), base);
    assert_ne!(env("5"), base);
    let mut explicit = args.to_vec();
    explicit.extend(["--seed", "0"]);
    let out = Command::new(BIN).args(&explicit).env("ELASTIC_SEED", "5").output().unwrap();
    assert_eq!(stdout(&out), base);
}

#[test]
fn grad_check_seed_seven_passes() {
    let out = run(&["grad-check", "--seed", "7"]);
    let csv = stdout(&out);
    assert_eq!(csv.lines().count(), 1 + 5 + 2 * 16 + 11);
    let err = String::from_utf8(out.stderr).unwrap();
    let value: f64 = err
        .trim()
        .strip_prefix("max_rel_err=")
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(value <= 1e-4);
}

#[test]
fn featurize_pads_to_patch_columns() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("clip.wav");
    chirp(&wav, 1.0, 500.0);
    let spec = dir.path().join("clip.spec");
    let csv = stdout(&run(&["featurize", "--in", wav.to_str().unwrap(), "--out", spec.to_str().unwrap()]));
    // 98 frames padded to 256, 8 × 16 patches
    assert_eq!(csv.lines().nth(1).unwrap(), "clip,128,256,10,128");
    let csv = stdout(&run(&[
        "featurize",
        "--in",
        wav.to_str().unwrap(),
        "--out",
        spec.to_str().unwrap(),
        "--pad-to-multiple",
        "0",
        "--compress-avgpool",
        "2",
    ]));
    assert_eq!(csv.lines().nth(1).unwrap(), "clip,128,49,20,24");
    let out = run(&[
        "featurize",
        "--in",
        wav.to_str().unwrap(),
        "--out",
        spec.to_str().unwrap(),
        "--compress-fshift",
        "2",
        "--compress-avgpool",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn featurize_then_forward_matches_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    let wavs = dir.path().join("wavs");
    std::fs::create_dir(&wavs).unwrap();
    chirp(&wavs.join("a.wav"), 1.3, 400.0);
    chirp(&wavs.join("b.wav"), 2.1, 900.0);
    let specs = dir.path().join("specs");
    let model = dir.path().join("model");
    stdout(&run(&[
        "featurize",
        "--in",
        wavs.to_str().unwrap(),
        "--out",
        specs.to_str().unwrap(),
        "--n-mels",
        "32",
        "--pad-to-multiple",
        "0",
    ]));
    stdout(&run(&[
        "train-toy",
        "--n-train",
        "12",
        "--n-eval",
        "4",
        "--epochs",
        "1",
        "--dims",
        "16,2,1",
        "--out",
        model.to_str().unwrap(),
    ]));
    for precision in ["f32", "f64"] {
        let csv = stdout(&run(&[
            "--precision",
            precision,
            "forward",
            "--model",
            model.to_str().unwrap(),
            "--specs",
            specs.to_str().unwrap(),
        ]));
        let expected = |name: &str| -> Vec<String> {
            let wave = load_wav(wavs.join(format!("{name}.wav"))).unwrap();
            let spec = mel_spectrogram(&wave, &MelConfig { n_mels: 32, ..MelConfig::default() }).unwrap();
            let grid = patchify(&spec, 16, name).unwrap();
            if precision == "f32" {
                let (params, _) = checkpoint::load::<f32>(&model).unwrap();
                let t = encoder_forward(&pack::<f32, _>(&[grid], 2048).unwrap(), &params).unwrap();
                t.logits.iter().map(|v| v.to_string()).collect()
            } else {
                let (params, _) = checkpoint::load::<f64>(&model).unwrap();
                let t = encoder_forward(&pack::<f64, _>(&[grid], 2048).unwrap(), &params).unwrap();
                t.logits.iter().map(|v| v.to_string()).collect()
            }
        };
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "sample_id,logit_0,logit_1,logit_2,logit_3");
        for (line, name) in lines[1..].iter().zip(["a", "b"]) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0], name);
            assert_eq!(fields[1..].to_vec(), expected(name), "{precision} {name}");
        }
    }
}

#[test]
fn train_log_and_evaluate_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m");
    let log = dir.path().join("log.csv");
    stdout(&run(&[
        "train-toy",
        "--task",
        "resolution",
        "--classes",
        "8",
        "--n-train",
        "16",
        "--n-eval",
        "8",
        "--epochs",
        "1",
        "--packing-batch",
        "8",
        "--dims",
        "16,2,1",
        "--compress",
        "fshift",
        "--factors",
        "1,2,4",
        "--out",
        model.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ]));
    let log = std::fs::read_to_string(log).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "step,loss,lr,pad_ratio,cut_ratio");
    assert_eq!(lines.len(), 3);
    let csv = stdout(&run(&["evaluate", "--model", model.to_str().unwrap(), "--compress", "fshift", "--factors", "1,4"]));
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "sweep,setting,accuracy,samples");
    assert!(rows[1].starts_with("fshift,1,") && rows[2].starts_with("fshift,4,"));
    let out = run(&["train-toy", "--compress", "fshift", "--factors", "1.1", "--out", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_reports_both_regimes() {
    let csv = stdout(&run(&["bench", "--samples", "16", "--dims", "16,2,1", "--budget", "256", "--max-tokens", "256"]));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("packed,256,"));
    assert!(lines[2].starts_with("fixed,"));
}
