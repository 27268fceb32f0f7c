use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::{CliError, CliResult};

/// CSV writer to a file, or to stdout when no path is given.
pub fn csv_writer(path: Option<&Path>) -> CliResult<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?))
        }
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

pub fn finish(mut w: csv::Writer<Box<dyn Write>>) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io("<csv output>", e))
}
