use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use banach_fbs::fbs::{rate_fit, RateFit, SolveHistory};

use crate::error::{CliError, CliResult};
use crate::table::write_table;

#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub fit: RateFit,
    pub rate_table: PathBuf,
}

/// Fits `rₙ = objectiveₙ - reference` from a history file and writes
/// `(n, rₙ)` rows to `rate.table` next to it (or to `out`).
pub fn cmd_diagnose(
    history: &Path,
    reference: f64,
    p: f64,
    burn_in: usize,
    out: Option<&Path>,
) -> CliResult<Diagnosis> {
    if !(p > 1.0) {
        return Err(CliError::Config(format!("p must be > 1, got {p}")));
    }
    let file = File::open(history)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", history.display())))?;
    let hist = SolveHistory::read_csv(BufReader::new(file)).map_err(CliError::config)?;
    let fit = rate_fit(&hist, reference, burn_in, p).map_err(CliError::config)?;
    let rows: Vec<_> = hist.records.iter().filter(|r| r.n >= 1 && r.n > burn_in).collect();
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let rn: Vec<f64> = rows.iter().map(|r| r.objective - reference).collect();
    let rate_table = match out {
        Some(path) => path.to_path_buf(),
        None => history.with_file_name("rate.table"),
    };
    write_table(&rate_table, &ns, &rn)?;
    Ok(Diagnosis { fit, rate_table })
}
