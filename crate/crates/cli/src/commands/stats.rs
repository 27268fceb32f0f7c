use std::path::Path;

use elastic_ast::bench::{bench as run_bench, BenchConfig};
use elastic_ast::packing::{fixed_length_stats, grouped_packed_stats, PackingStats};
use elastic_ast::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use super::dims;
use crate::args::{BenchArgs, PackStatsArgs};
use crate::output::{csv_writer, finish};
use crate::{CliError, CliResult};

/// Reads token counts: `sample_id,token_count` manifest lines or one bare count per line.
pub fn read_lengths(path: &Path) -> CliResult<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_lengths(&text).map_err(|line| {
        CliError::Usage(format!("{}: cannot read token counts from line {line}", path.display()))
    })
}

fn parse_lengths(text: &str) -> Result<Vec<usize>, usize> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let count = match fields.as_slice() {
            [count] | [_, count] => count.parse::<usize>(),
            _ => return Err(i + 1),
        };
        match count {
            Ok(n) => out.push(n),
            Err(_) if out.is_empty() && fields.len() == 2 => {} // header
            Err(_) => return Err(i + 1),
        }
    }
    Ok(out)
}

fn synthetic_lengths(n: usize, median: f64, sigma: f64, budget: usize, seed: u64) -> CliResult<Vec<usize>> {
    let dist = LogNormal::new(median.ln(), sigma)
        .map_err(|e| CliError::Usage(format!("bad length distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| (dist.sample(&mut rng).round() as usize).clamp(1, budget))
        .collect())
}

pub fn pack_stats(a: &PackStatsArgs, seed: u64) -> CliResult<()> {
    let lengths = match (&a.lengths, a.synthetic) {
        (Some(path), _) => read_lengths(path)?,
        (None, Some(n)) => synthetic_lengths(n, a.median, a.sigma, a.budget, seed)?,
        (None, None) => return Err(CliError::Usage("give --lengths or --synthetic".into())),
    };
    if lengths.is_empty() {
        return Err(CliError::Usage("no token counts given".into()));
    }
    let mut rows: Vec<(&str, String, PackingStats)> = Vec::new();
    if let Some(t) = a.fixed_t {
        if t == 0 {
            return Err(CliError::Usage("--fixed-T must be positive".into()));
        }
        rows.push(("fixed", String::new(), fixed_length_stats(&lengths, t)));
    }
    let batches = if a.batch_sizes.is_empty() {
        vec![lengths.len()]
    } else {
        a.batch_sizes.clone()
    };
    for b in batches {
        rows.push(("packed", b.to_string(), grouped_packed_stats(&lengths, b, a.budget)?));
    }
    let mut w = csv_writer(a.out.as_deref())?;
    w.write_record([
        "regime",
        "batch",
        "pad_ratio",
        "cut_ratio",
        "rows",
        "total_tokens",
        "pad_tokens",
        "cut_tokens",
        "native_tokens",
    ])?;
    for (regime, batch, s) in rows {
        w.write_record([
            regime.to_string(),
            batch,
            s.pad_ratio().to_string(),
            s.cut_ratio().to_string(),
            s.rows.to_string(),
            s.total_tokens.to_string(),
            s.pad_tokens.to_string(),
            s.cut_tokens.to_string(),
            s.native_tokens.to_string(),
        ])?;
    }
    finish(w)
}

pub fn bench<T: Real>(a: &BenchArgs, seed: u64) -> CliResult<()> {
    let (dim, heads, layers) = dims(&a.dims)?;
    let cfg = BenchConfig {
        samples: a.samples,
        median_tokens: a.median,
        sigma: a.sigma,
        min_tokens: a.min_tokens,
        max_tokens: a.max_tokens,
        fixed_tokens: a.fixed_t,
        budget: a.budget,
        packing_batch: a.packing_batch,
        dim,
        heads,
        layers,
        seed,
    };
    let report = run_bench::<T>(&cfg)?;
    let mut w = csv_writer(a.out.as_deref())?;
    w.write_record([
        "regime",
        "tokens_per_row",
        "rows",
        "total_tokens",
        "pad_tokens",
        "cut_tokens",
        "informative_fraction",
    ])?;
    for (name, per_row, r) in [
        ("packed", a.budget, &report.packed),
        ("fixed", report.fixed_tokens, &report.fixed),
    ] {
        let s = r.stats;
        w.write_record([
            name.to_string(),
            per_row.to_string(),
            s.rows.to_string(),
            s.total_tokens.to_string(),
            s.pad_tokens.to_string(),
            s.cut_tokens.to_string(),
            s.informative_fraction().to_string(),
        ])?;
    }
    finish(w)?;
    for (name, r) in [("packed", &report.packed), ("fixed", &report.fixed)] {
        eprintln!(
            "{name}: {:.3} s, {:.0} tokens/s, {:.0} informative tokens/s",
            r.seconds, r.tokens_per_sec, r.informative_per_sec
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_formats() {
        assert_eq!(parse_lengths("a,512\nb,1024\n").unwrap(), vec![512, 1024]);
        assert_eq!(parse_lengths("sample_id,token_count\na,5\n").unwrap(), vec![5]);
        assert_eq!(parse_lengths("1,15\n").unwrap(), vec![15]);
        assert_eq!(parse_lengths("7\n\n8\n").unwrap(), vec![7, 8]);
        assert_eq!(parse_lengths("a,1\nb,x\n"), Err(2));
        assert_eq!(parse_lengths("1,2,3\n"), Err(1));
    }
}
