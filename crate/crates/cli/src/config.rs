//! Flat `key = value` configuration files with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "BANACH_FBS_SEED";

#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), (value.trim().to_string(), i + 1)).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                CliError::Config(format!("line {line}: cannot parse '{v}' for '{key}'"))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Whitespace- or comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse().map_err(|_| {
                        CliError::Config(format!("line {line}: cannot parse '{t}' in '{key}'"))
                    })
                })
                .collect::<CliResult<Vec<T>>>()
                .map(Some),
        }
    }

    /// Fails on keys outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> CliResult<()> {
        match self.entries.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            Some((k, (_, line))) => Err(CliError::Config(format!("line {line}: unknown key '{k}'"))),
            None => Ok(()),
        }
    }

    /// The `seed` key, overridden by the environment variable.
    pub fn seed(&self) -> CliResult<u64> {
        match std::env::var(SEED_ENV) {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}='{s}' is not an unsigned integer"))),
            Err(_) => self.get_or("seed", 0),
        }
    }

    pub fn output_dir(&self, default: &str) -> PathBuf {
        PathBuf::from(self.raw("output").unwrap_or(default))
    }
}

/// How the regularization weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaChoice {
    Fixed(f64),
    /// Bisection on `log α` until the discrepancy matches `target`.
    Bisect { target: f64, steps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseConfig {
    pub n: usize,
    pub p: Vec<f64>,
    pub s: f64,
    pub delta: f64,
    pub alpha: AlphaChoice,
    pub noise: f64,
    pub seed: u64,
    pub spikes: usize,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    pub max_iters: usize,
    pub d_tol: Option<f64>,
    pub objective_tol: f64,
    pub output: PathBuf,
}

const SPARSE_KEYS: &[&str] = &[
    "kind",
    "n",
    "p",
    "s",
    "delta",
    "alpha",
    "target_discrepancy",
    "bisection_steps",
    "noise",
    "seed",
    "spikes",
    "amplitude_min",
    "amplitude_max",
    "max_iters",
    "d_tol",
    "objective_tol",
    "output",
];

impl SparseConfig {
    pub fn from_raw(raw: &RawConfig) -> CliResult<Self> {
        raw.check_keys(SPARSE_KEYS)?;
        if let Some(kind) = raw.raw("kind") {
            if kind != "sparse-integration" {
                return Err(CliError::Config(format!(
                    "sparse-demo needs kind = sparse-integration, got '{kind}'"
                )));
            }
        }
        let alpha = match raw.raw("alpha") {
            None | Some("auto") => AlphaChoice::Bisect {
                target: raw.get_or("target_discrepancy", 0.0047)?,
                steps: raw.get_or("bisection_steps", 24)?,
            },
            Some(_) => AlphaChoice::Fixed(raw.get::<f64>("alpha")?.unwrap_or_default()),
        };
        let cfg = SparseConfig {
            n: raw.get_or("n", 500)?,
            p: raw.get_list("p")?.unwrap_or_else(|| vec![1.5, 2.0]),
            s: raw.get_or("s", 1.0)?,
            delta: raw.get_or("delta", 0.1)?,
            alpha,
            noise: raw.get_or("noise", 0.005)?,
            seed: raw.seed()?,
            spikes: raw.get_or("spikes", 9)?,
            amplitude_min: raw.get_or("amplitude_min", -10.0)?,
            amplitude_max: raw.get_or("amplitude_max", 25.0)?,
            max_iters: raw.get_or("max_iters", 20000)?,
            d_tol: raw.get("d_tol")?,
            objective_tol: raw.get_or("objective_tol", 0.0)?,
            output: raw.output_dir("sparse-out"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if self.p.is_empty() {
            return bad("p needs at least one value".into());
        }
        if let Some(p) = self.p.iter().find(|p| !(**p > 1.0 && **p <= 2.0)) {
            return bad(format!("p must lie in (1, 2], got {p}"));
        }
        if let Some(p) = self.p.iter().find(|p| !(self.s >= 1.0 && self.s <= **p)) {
            return bad(format!("s must lie in [1, p = {p}], got {}", self.s));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        match self.alpha {
            AlphaChoice::Fixed(a) if !(a.is_finite() && a >= 0.0) => {
                return bad(format!("alpha must be >= 0, got {a}"))
            }
            AlphaChoice::Bisect { target, steps } if !(target > 0.0) || steps == 0 => {
                return bad("bisection needs target_discrepancy > 0 and bisection_steps >= 1".into())
            }
            _ => {}
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        if self.spikes == 0 || self.spikes > self.n {
            return bad(format!("spikes must lie in [1, n], got {}", self.spikes));
        }
        if !(self.amplitude_min < self.amplitude_max) {
            return bad("amplitude_min must be below amplitude_max".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    None,
    Gaussian { size: usize, sigma: f64 },
    Uniform { size: usize },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvConfig {
    pub deblur: bool,
    pub dims: Vec<usize>,
    pub p: f64,
    pub delta: f64,
    pub alpha: f64,
    pub noise: f64,
    pub seed: u64,
    pub kernel: KernelChoice,
    pub max_iters: usize,
    pub predual_max_iters: usize,
    pub d_tol: Option<f64>,
    pub objective_tol: f64,
    pub output: PathBuf,
}

const TV_KEYS: &[&str] = &[
    "kind",
    "dims",
    "p",
    "delta",
    "alpha",
    "noise",
    "seed",
    "kernel",
    "kernel_size",
    "kernel_sigma",
    "max_iters",
    "predual_max_iters",
    "d_tol",
    "objective_tol",
    "output",
];

impl TvConfig {
    pub fn from_raw(raw: &RawConfig, base_dir: &Path) -> CliResult<Self> {
        raw.check_keys(TV_KEYS)?;
        let deblur = match raw.raw("kind").unwrap_or("tv-denoise") {
            "tv-denoise" => false,
            "tv-deblur" => true,
            other => {
                return Err(CliError::Config(format!(
                    "tv needs kind = tv-denoise or tv-deblur, got '{other}'"
                )))
            }
        };
        let size = raw.get_or("kernel_size", 5)?;
        let kernel = match raw.raw("kernel").unwrap_or(if deblur { "gaussian" } else { "none" }) {
            "none" | "identity" => KernelChoice::None,
            "gaussian" => KernelChoice::Gaussian {
                size,
                sigma: raw.get_or("kernel_sigma", 1.0)?,
            },
            "uniform" => KernelChoice::Uniform { size },
            path => KernelChoice::File(base_dir.join(path)),
        };
        let dims = raw.get_list("dims")?.unwrap_or_else(|| vec![64, 64]);
        let cfg = TvConfig {
            deblur,
            p: raw.get_or("p", if dims.len() == 3 { 1.5 } else { 2.0 })?,
            dims,
            delta: raw.get_or("delta", 0.1)?,
            alpha: raw.get_or("alpha", 0.02)?,
            noise: raw.get_or("noise", 0.02)?,
            seed: raw.seed()?,
            kernel,
            max_iters: raw.get_or("max_iters", 100)?,
            predual_max_iters: raw.get_or("predual_max_iters", 200)?,
            d_tol: raw.get("d_tol")?,
            objective_tol: raw.get_or("objective_tol", 0.0)?,
            output: raw.output_dir("tv-out"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(2..=3).contains(&self.dims.len()) || self.dims.iter().any(|d| *d < 2) {
            return bad(format!("dims must list 2 or 3 extents >= 2, got {:?}", self.dims));
        }
        if !(self.p > 1.0 && self.p <= 2.0) {
            return bad(format!("p must lie in (1, 2], got {}", self.p));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        if self.predual_max_iters == 0 {
            return bad("predual_max_iters must be >= 1".into());
        }
        Ok(())
    }
}
