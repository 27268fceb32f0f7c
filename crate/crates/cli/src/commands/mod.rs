mod featurize;
mod model;
mod stats;

use crate::args::{Cli, Command, Precision};
use crate::{CliError, CliResult};

pub fn run(cli: Cli) -> CliResult<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Featurize(a) => featurize::run(&a),
        Command::PackStats(a) => stats::pack_stats(&a, seed),
        Command::Bench(a) => match cli.precision {
            Precision::F32 => stats::bench::<f32>(&a, seed),
            Precision::F64 => stats::bench::<f64>(&a, seed),
        },
        Command::Forward(a) => match cli.precision {
            Precision::F32 => model::forward::<f32>(&a),
            Precision::F64 => model::forward::<f64>(&a),
        },
        Command::GradCheck(a) => model::grad_check(&a, seed),
        Command::TrainToy(a) => match cli.precision {
            Precision::F32 => model::train::<f32>(&a, seed),
            Precision::F64 => model::train::<f64>(&a, seed),
        },
        Command::Evaluate(a) => match cli.precision {
            Precision::F32 => model::evaluate::<f32>(&a),
            Precision::F64 => model::evaluate::<f64>(&a),
        },
    }
}

/// Parses `D,H,layers`.
fn dims(values: &[usize]) -> CliResult<(usize, usize, usize)> {
    match values {
        [d, h, l] => Ok((*d, *h, *l)),
        _ => Err(CliError::Usage(format!(
            "--dims takes three values D,H,layers; got {values:?}"
        ))),
    }
}
