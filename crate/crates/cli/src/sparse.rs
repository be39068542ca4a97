//! Sparse recovery of spikes from integrated data on `[0, 1]`.

use std::path::Path;
use std::sync::Arc;

use banach_fbs::fbs::{fbs_run, gradient_f, Penalty, ProblemSpec, SolveHistory, StepPolicy, StopRule};
use banach_fbs::operators::{integration_operator, LinearOperator};
use banach_fbs::{Exponents, Signal};

use crate::config::{AlphaChoice, SparseConfig};
use crate::data::{scaled_noise, spike_signal};
use crate::error::{CliError, CliResult};
use crate::table::{abscissae, write_table};

/// Entries with `|v_k|` at or below this count as zero.
pub const NNZ_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SparseInstance {
    pub u_true: Vec<f64>,
    pub f_exact: Vec<f64>,
}

pub fn make_instance(cfg: &SparseConfig) -> CliResult<SparseInstance> {
    let op = integration_operator(cfg.n).map_err(CliError::config)?;
    let u_true = spike_signal(cfg.n, cfg.spikes, cfg.amplitude_min, cfg.amplitude_max, cfg.seed);
    let f_exact = op.apply(&u_true);
    Ok(SparseInstance { u_true, f_exact })
}

/// Noisy data for exponent `p`: the same noise direction for every `p`,
/// rescaled to `‖f - f_δ‖_p = noise`.
pub fn noisy_data(cfg: &SparseConfig, inst: &SparseInstance, p: f64) -> Vec<f64> {
    let h = 1.0 / cfg.n as f64;
    let e = scaled_noise(cfg.n, cfg.noise, p, h, cfg.seed);
    inst.f_exact.iter().zip(e).map(|(f, e)| f + e).collect()
}

pub fn build_problem(n: usize, f_delta: &[f64], p: f64, s: f64, delta: f64, alpha: f64) -> CliResult<ProblemSpec> {
    let op = integration_operator(n).map_err(CliError::config)?;
    let f = Signal::uniform(f_delta.to_vec(), p, op.cell_width()).map_err(CliError::config)?;
    let exps = Exponents::new(p, p, s, delta).map_err(CliError::config)?;
    ProblemSpec::new(
        Arc::new(op),
        f,
        exps,
        Penalty::WeightedPower { alpha: vec![alpha; n] },
    )
    .map_err(CliError::config)
}

#[derive(Debug, Clone)]
pub struct SparseRun {
    pub p: f64,
    pub alpha: f64,
    pub u: Vec<f64>,
    pub ku: Vec<f64>,
    pub f_delta: Vec<f64>,
    pub history: SolveHistory,
    pub discrepancy: f64,
    pub nnz: usize,
    pub data_error: f64,
    /// `(α, discrepancy)` of every bisection probe.
    pub probes: Vec<(f64, f64)>,
}

/// Solves for one `α`, starting from `warm` when that beats the zero start.
fn solve(
    cfg: &SparseConfig,
    f_delta: &[f64],
    p: f64,
    alpha: f64,
    warm: Option<&Signal>,
) -> CliResult<(ProblemSpec, Signal, SolveHistory)> {
    let prob = build_problem(cfg.n, f_delta, p, cfg.s, cfg.delta, alpha)?;
    let zero = prob.zero();
    let u0 = match warm {
        Some(u) if prob.objective(u) < prob.objective(&zero) => u.clone(),
        _ => zero,
    };
    let policy = StepPolicy::for_problem(&prob, &u0).map_err(CliError::Solver)?;
    let stop = StopRule {
        max_iters: cfg.max_iters,
        d_tol: cfg.d_tol,
        objective_tol: cfg.objective_tol,
    };
    let (u, hist) = fbs_run(&prob, &policy, &stop, Some(u0)).map_err(CliError::Solver)?;
    Ok((prob, u, hist))
}

/// Smallest `α` for which `u = 0` solves the `s = 1` problem:
/// `max_k |F'(0)_k| / h_k`.
pub fn alpha_ceiling(cfg: &SparseConfig, f_delta: &[f64], p: f64) -> CliResult<f64> {
    let prob = build_problem(cfg.n, f_delta, p, cfg.s, cfg.delta, 0.0)?;
    let zero = prob.zero();
    let w = gradient_f(&zero, &prob).map_err(CliError::Solver)?;
    let h = 1.0 / cfg.n as f64;
    Ok(w.values().iter().fold(0.0f64, |m, x| m.max(x.abs())) / h)
}

pub fn run_p(cfg: &SparseConfig, inst: &SparseInstance, p: f64) -> CliResult<SparseRun> {
    let f_delta = noisy_data(cfg, inst, p);
    let mut probes = Vec::new();
    let (alpha, prob, u, history) = match cfg.alpha {
        AlphaChoice::Fixed(a) => {
            let (prob, u, hist) = solve(cfg, &f_delta, p, a, None)?;
            (a, prob, u, hist)
        }
        AlphaChoice::Bisect { target, steps } => {
            let mut hi = alpha_ceiling(cfg, &f_delta, p)?.max(f64::MIN_POSITIVE);
            let mut lo = hi * 1e-9;
            let mut best: Option<(f64, f64, ProblemSpec, Signal, SolveHistory)> = None;
            let mut warm: Option<Signal> = None;
            for _ in 0..steps {
                let mid = (lo * hi).sqrt();
                let (prob, u, hist) = solve(cfg, &f_delta, p, mid, warm.as_ref())?;
                warm = Some(u.clone());
                let disc = prob.discrepancy(&u);
                probes.push((mid, disc));
                if disc > target {
                    hi = mid;
                } else {
                    lo = mid;
                }
                let gap = (disc - target).abs();
                if best.as_ref().is_none_or(|b| gap < b.0) {
                    best = Some((gap, mid, prob, u, hist));
                }
            }
            let (_, a, prob, u, hist) = best.expect("at least one bisection step");
            (a, prob, u, hist)
        }
    };
    let h = 1.0 / cfg.n as f64;
    let e: Vec<f64> = inst.f_exact.iter().zip(&f_delta).map(|(a, b)| a - b).collect();
    let data_error = banach_fbs::banach::weighted_norm(&e, &vec![h; cfg.n], p);
    let ku = prob.op().apply(u.values());
    Ok(SparseRun {
        p,
        alpha,
        discrepancy: prob.discrepancy(&u),
        nnz: u.values().iter().filter(|x| x.abs() > NNZ_THRESHOLD).count(),
        u: u.into_values(),
        ku,
        f_delta,
        history,
        data_error,
        probes,
    })
}

/// Runs every configured `p`, spreading them over `jobs` threads.
pub fn run_all(cfg: &SparseConfig, inst: &SparseInstance, jobs: usize) -> CliResult<Vec<SparseRun>> {
    let jobs = jobs.clamp(1, cfg.p.len());
    if jobs == 1 {
        return cfg.p.iter().map(|&p| run_p(cfg, inst, p)).collect();
    }
    let mut slots: Vec<Option<CliResult<SparseRun>>> = (0..cfg.p.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                scope.spawn(move || {
                    (j..cfg.p.len())
                        .step_by(jobs)
                        .map(|i| (i, run_p(cfg, inst, cfg.p[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("solver thread panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every p is assigned")).collect()
}

/// Label used in file names, e.g. `1.5` or `2`.
pub fn p_label(p: f64) -> String {
    format!("{p}")
}

pub const SUMMARY_HEADER: &str = "p,discrepancy,nnz,data_error,alpha";

pub fn summary_csv(runs: &[SparseRun]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in runs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.p, r.discrepancy, r.nnz, r.data_error, r.alpha
        ));
    }
    out
}

fn write(path: &Path, text: String) -> CliResult<()> {
    std::fs::write(path, text).map_err(CliError::io(path))
}

/// Writes all artifacts of a sparse demo into `cfg.output`.
pub fn write_outputs(cfg: &SparseConfig, inst: &SparseInstance, runs: &[SparseRun]) -> CliResult<()> {
    let out = &cfg.output;
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let t = abscissae(cfg.n);
    write_table(&out.join("u_true.table"), &t, &inst.u_true)?;
    write_table(&out.join("f.table"), &t, &inst.f_exact)?;
    for r in runs {
        let label = p_label(r.p);
        write_table(&out.join(format!("u_p{label}.table")), &t, &r.u)?;
        write_table(&out.join(format!("Ku_p{label}.table")), &t, &r.ku)?;
        let job = out.join(format!("p{label}"));
        std::fs::create_dir_all(&job).map_err(CliError::io(&job))?;
        write_table(&job.join("fdelta.table"), &t, &r.f_delta)?;
        write(&job.join("history.csv"), r.history.to_csv())?;
        if !r.probes.is_empty() {
            let (a, d): (Vec<f64>, Vec<f64>) = r.probes.iter().cloned().unzip();
            write_table(&job.join("bisection.table"), &a, &d)?;
        }
    }
    if let [only] = runs {
        write(&out.join("history.csv"), only.history.to_csv())?;
    }
    write(&out.join("summary.csv"), summary_csv(runs))
}

pub fn cmd_sparse_demo(cfg: &SparseConfig, jobs: usize) -> CliResult<Vec<SparseRun>> {
    let inst = make_instance(cfg)?;
    let runs = run_all(cfg, &inst, jobs)?;
    write_outputs(cfg, &inst, &runs)?;
    Ok(runs)
}
