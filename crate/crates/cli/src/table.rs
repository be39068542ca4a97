use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Two whitespace-separated columns, no header, shortest round-trip
/// formatting of each value.
pub fn format_table(xs: &[f64], ys: &[f64]) -> String {
    let mut out = String::with_capacity(40 * xs.len());
    for (x, y) in xs.iter().zip(ys) {
        writeln!(out, "{x} {y}").expect("writing to a String cannot fail");
    }
    out
}

pub fn write_table(path: &Path, xs: &[f64], ys: &[f64]) -> CliResult<()> {
    std::fs::write(path, format_table(xs, ys)).map_err(CliError::io(path))
}

/// Abscissae `t_i = (i+1)/N` of the right cell edges on `[0, 1]`.
pub fn abscissae(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

pub fn read_table(path: &Path) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut cols = line.split_whitespace().map(str::parse::<f64>);
        match (cols.next(), cols.next(), cols.next()) {
            (Some(Ok(x)), Some(Ok(y)), None) => {
                xs.push(x);
                ys.push(y);
            }
            _ => {
                return Err(CliError::Config(format!(
                    "{}: line {} is not two numbers",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok((xs, ys))
}
