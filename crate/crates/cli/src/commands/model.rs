use std::path::PathBuf;

use elastic_ast::checkpoint::{self, CheckpointMeta};
use elastic_ast::encoder::{encoder_forward, ModelConfig, ModelParams};
use elastic_ast::gradcheck::{grad_check as run_grad_check, GradCheckConfig};
use elastic_ast::packing::pack;
use elastic_ast::spectrogram::{patchify, read_spec1, PatchGrid};
use elastic_ast::trainer::{
    evaluate_factors, evaluate_lengths, fshift_factors, mean_loss, Compression, Factor, Split, TaskKind, TaskSpec,
    TrainConfig, TrainMode, Trainer, AVGPOOL_FACTORS,
};
use elastic_ast::Real;

use super::dims;
use super::featurize::stem;
use crate::args::{CompressArg, EvaluateArgs, ForwardArgs, GradCheckArgs, ModeArg, TaskArg, TrainArgs};
use crate::output::{csv_writer, finish};
use crate::{CliError, CliResult};

pub fn forward<T: Real>(a: &ForwardArgs) -> CliResult<()> {
    let (params, _) = checkpoint::load::<T>(&a.model)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&a.specs)
        .map_err(|e| CliError::io(&a.specs, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "spec"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no .spec files in {}", a.specs.display())));
    }
    let grids = files
        .iter()
        .map(|f| Ok(patchify(&read_spec1(f)?, params.config.patch_size, stem(f))?))
        .collect::<CliResult<Vec<PatchGrid>>>()?;
    let trace = encoder_forward(&pack::<T, _>(&grids, a.budget)?, &params)?;
    let mut w = csv_writer(a.out.as_deref())?;
    let mut header = vec!["sample_id".to_string()];
    header.extend((0..params.config.n_classes).map(|k| format!("logit_{k}")));
    w.write_record(&header)?;
    for (grid, row) in grids.iter().zip(trace.logits.outer_iter()) {
        let mut record = vec![grid.sample_id.clone()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    finish(w)
}

pub fn grad_check(a: &GradCheckArgs, seed: u64) -> CliResult<()> {
    let (dim, heads, layers) = dims(&a.dims)?;
    let report = run_grad_check(&GradCheckConfig {
        seed,
        dim,
        heads,
        layers,
        eps: a.eps,
        max_per_tensor: a.max_per_tensor,
    })?;
    let mut w = csv_writer(a.out.as_deref())?;
    w.write_record(["tensor", "checked", "max_rel_err", "max_abs_err"])?;
    for t in &report.tensors {
        w.write_record([
            t.name.clone(),
            t.checked.to_string(),
            format!("{:e}", t.max_rel_err),
            format!("{:e}", t.max_abs_err),
        ])?;
    }
    finish(w)?;
    let worst = report.max_rel_err();
    eprintln!("max_rel_err={worst:e} tolerance={:e}", a.tolerance);
    if worst > a.tolerance {
        return Err(CliError::CheckFailed(format!(
            "max relative error {worst:e} exceeds {:e}",
            a.tolerance
        )));
    }
    Ok(())
}

fn task_spec(a: &TrainArgs, seed: u64) -> TaskSpec {
    let t = &a.task;
    let mut spec = match t.task {
        TaskArg::LateSignal => TaskSpec::late_signal(t.classes, t.median_frames, t.sigma, seed),
        TaskArg::Resolution => TaskSpec {
            n_classes: t.classes,
            ..TaskSpec::resolution(seed)
        },
    };
    if let Some(n) = t.n_train {
        spec.n_train = n;
    }
    if let Some(n) = t.n_eval {
        spec.n_eval = n;
    }
    spec
}

fn compression(kind: CompressArg, factors: &[f64]) -> CliResult<Compression> {
    Ok(match kind {
        CompressArg::None => Compression::None,
        CompressArg::Fshift if factors.is_empty() => Compression::Fshift(fshift_factors()),
        CompressArg::Fshift => Compression::Fshift(factors.to_vec()),
        CompressArg::Avgpool if factors.is_empty() => Compression::Avgpool(AVGPOOL_FACTORS.to_vec()),
        CompressArg::Avgpool => Compression::Avgpool(integer_factors(factors)?),
    })
}

fn integer_factors(factors: &[f64]) -> CliResult<Vec<usize>> {
    factors
        .iter()
        .map(|&f| {
            if f.fract() == 0.0 && f >= 1.0 {
                Ok(f as usize)
            } else {
                Err(CliError::Usage(format!("average-pool factor {f} is not a positive integer")))
            }
        })
        .collect()
}

/// Model sized for a task: frequency table covers its mel bins, time table its longest sample.
pub fn model_config(task: &TaskSpec, dim: usize, heads: usize, layers: usize) -> ModelConfig {
    let mut config = ModelConfig::with_dims(dim, heads, layers, task.n_classes);
    config.freq_max = (task.n_mels / config.patch_size).max(1);
    config.time_max = config.time_max.max(task.max_frames().div_ceil(config.patch_size));
    config
}

pub fn train<T: Real>(a: &TrainArgs, seed: u64) -> CliResult<()> {
    let task = task_spec(a, seed);
    let (dim, heads, layers) = dims(&a.dims)?;
    let config = model_config(&task, dim, heads, layers);
    let mode = match a.mode {
        ModeArg::Elastic => TrainMode::Elastic,
        ModeArg::Fixed => TrainMode::Fixed {
            frames: a.fixed_t.unwrap_or(match task.kind {
                TaskKind::LateSignal { .. } => 1024,
                TaskKind::Resolution { .. } => task.max_frames(),
            }),
        },
    };
    let cfg = TrainConfig {
        lr: a.lr,
        epochs: a.epochs,
        packing_batch: a.packing_batch,
        budget: a.budget,
        compression: compression(a.compress, &a.factors)?,
        mode,
        seed,
        ..TrainConfig::default()
    };
    let params = ModelParams::<T>::init(&config, seed)?;
    let data = task.generate(Split::Train)?;
    let mut trainer = Trainer::new(params, cfg.clone(), task.clone())?;
    let mut log = match &a.log {
        Some(path) => {
            let mut w = csv_writer(Some(path))?;
            w.write_record(["step", "loss", "lr", "pad_ratio", "cut_ratio"])?;
            Some(w)
        }
        None => None,
    };
    for epoch in 0..cfg.epochs {
        let steps = trainer.train_epoch(&data)?;
        if let Some(w) = log.as_mut() {
            for s in &steps {
                w.write_record([
                    s.step.to_string(),
                    s.loss.to_string(),
                    s.lr.to_string(),
                    s.pad_ratio.to_string(),
                    s.cut_ratio.to_string(),
                ])?;
            }
        }
        eprintln!("epoch {epoch}: mean loss {:.4}", mean_loss(&steps));
    }
    if let Some(w) = log {
        finish(w)?;
    }
    let meta = CheckpointMeta {
        seed,
        mode,
        compression: cfg.compression.clone(),
        task: Some(task),
        steps: trainer.steps_taken(),
    };
    checkpoint::save(&a.out, &trainer.params, &meta)?;
    Ok(())
}

pub fn evaluate<T: Real>(a: &EvaluateArgs) -> CliResult<()> {
    let (params, manifest) = checkpoint::load::<T>(&a.model)?;
    let task = manifest
        .task
        .ok_or_else(|| CliError::Usage("checkpoint records no task to evaluate on".into()))?;
    let data = task.generate(Split::Eval)?;
    let (kind, points) = match a.compress {
        None | Some(CompressArg::None) => {
            let lengths = if a.lengths.is_empty() {
                (1..=12).map(|i| i * 256).collect()
            } else {
                a.lengths.clone()
            };
            let pts = evaluate_lengths(&params, manifest.mode, &task, &data, &lengths, a.budget)?;
            ("length", pts)
        }
        Some(CompressArg::Fshift) => {
            let set = if a.factors.is_empty() { fshift_factors() } else { a.factors.clone() };
            let factors: Vec<Factor> = set.into_iter().map(Factor::Fshift).collect();
            ("fshift", evaluate_factors(&params, manifest.mode, &task, &data, &factors, a.budget)?)
        }
        Some(CompressArg::Avgpool) => {
            let set = if a.factors.is_empty() {
                AVGPOOL_FACTORS.to_vec()
            } else {
                integer_factors(&a.factors)?
            };
            let factors: Vec<Factor> = set.into_iter().map(Factor::Avgpool).collect();
            ("avgpool", evaluate_factors(&params, manifest.mode, &task, &data, &factors, a.budget)?)
        }
    };
    let mut w = csv_writer(a.out.as_deref())?;
    w.write_record(["sweep", "setting", "accuracy", "samples"])?;
    for p in points {
        w.write_record([
            kind.to_string(),
            p.setting.to_string(),
            p.accuracy.to_string(),
            p.samples.to_string(),
        ])?;
    }
    finish(w)
}
