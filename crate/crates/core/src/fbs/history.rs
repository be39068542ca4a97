use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{domain, Error, Result};

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopStatus {
    /// `D(uⁿ)` dropped below the tolerance.
    ConvergedD,
    /// The iteration budget ran out.
    MaxIters,
    /// The backward step returned its input unchanged.
    FixedPoint,
    /// The relative objective decrease dropped below the configured tolerance.
    ObjectiveStalled,
}

impl fmt::Display for StopStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopStatus::ConvergedD => "converged_D",
            StopStatus::MaxIters => "max_iters",
            StopStatus::FixedPoint => "fixed_point",
            StopStatus::ObjectiveStalled => "objective_stalled",
        })
    }
}

/// Diagnostics of one iteration `uⁿ → uⁿ⁺¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    /// `(F+Φ)(uⁿ)`
    pub objective: f64,
    /// `D(uⁿ)`
    pub descent: f64,
    pub tau: f64,
    /// `‖uⁿ⁺¹ - uⁿ‖` in the primal norm.
    pub step_norm: f64,
    /// Wall time since the start of the run.
    pub seconds: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveHistory {
    pub records: Vec<IterationRecord>,
    pub status: StopStatus,
    /// `(F+Φ)` at the returned iterate.
    pub final_objective: f64,
}

pub const CSV_HEADER: &str = "n,objective,D,tau,step_norm,seconds";

impl SolveHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Objective values `(n, (F+Φ)(uⁿ))` including the final iterate.
    pub fn objectives(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self.records.iter().map(|r| (r.n, r.objective)).collect();
        let next = self.records.last().map_or(0, |r| r.n + 1);
        out.push((next, self.final_objective));
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n, r.objective, r.descent, r.tau, r.step_norm, r.seconds
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ASCII")
    }

    /// Reads records written by [`SolveHistory::write_csv`]. Columns are
    /// located by header name, so extra columns and reordering are fine.
    ///
    /// The status is not part of the file and comes back as
    /// [`StopStatus::MaxIters`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("history file is empty".into()))??;
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        let column = |name: &str| {
            names
                .iter()
                .position(|c| *c == name)
                .ok_or_else(|| Error::Parse(format!("history is missing column '{name}'")))
        };
        let cols = [
            column("n")?,
            column("objective")?,
            column("D")?,
            column("tau")?,
            column("step_norm")?,
            column("seconds")?,
        ];
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |i: usize| -> Result<&str> {
                fields.get(cols[i]).copied().ok_or_else(|| {
                    Error::Parse(format!("history line {} has too few fields", lineno + 2))
                })
            };
            records.push(IterationRecord {
                n: parse_field(get(0)?, "n", lineno)?,
                objective: parse_field(get(1)?, "objective", lineno)?,
                descent: parse_field(get(2)?, "D", lineno)?,
                tau: parse_field(get(3)?, "tau", lineno)?,
                step_norm: parse_field(get(4)?, "step_norm", lineno)?,
                seconds: parse_field(get(5)?, "seconds", lineno)?,
                backtracks: 0,
            });
        }
        let final_objective = records.last().map_or(f64::NAN, |r| r.objective);
        Ok(SolveHistory {
            records,
            status: StopStatus::MaxIters,
            final_objective,
        })
    }
}

fn parse_field<T: FromStr>(s: &str, name: &str, lineno: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("bad value '{s}' in column '{name}' on line {}", lineno + 2)))
}

/// Least-squares fit of `log rₙ` against `log n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// `max rₙ · n^{p-1}` over the fitted range.
    pub envelope: f64,
    pub slope: f64,
    pub points: usize,
}

/// Fits the decay of `rₙ = objectiveₙ - reference` over `n > burn_in`
/// (and `n >= 1`). `p` enters only the envelope constant.
pub fn rate_fit(history: &SolveHistory, reference: f64, burn_in: usize, p: f64) -> Result<RateFit> {
    let pts: Vec<(usize, f64)> = history
        .records
        .iter()
        .filter(|r| r.n > burn_in && r.n >= 1)
        .map(|r| (r.n, r.objective - reference))
        .collect();
    rate_fit_points(&pts, p)
}

/// [`rate_fit`] on explicit `(n, rₙ)` pairs.
pub fn rate_fit_points(points: &[(usize, f64)], p: f64) -> Result<RateFit> {
    if points.len() < 2 {
        return domain(format!("rate fit needs at least 2 points, got {}", points.len()));
    }
    if let Some(&(n, r)) = points.iter().find(|(_, r)| !(*r > 0.0)) {
        return Err(Error::NonPositiveDistance { n, value: r });
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, r)| r.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return domain("rate fit needs at least two distinct n");
    }
    let envelope = points
        .iter()
        .map(|(n, r)| r * (*n as f64).powf(p - 1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(RateFit {
        envelope,
        slope: sxy / sxx,
        points: points.len(),
    })
}
