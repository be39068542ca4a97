//! Total-variation denoising and deblurring of synthetic phantoms.

use std::path::Path;
use std::sync::Arc;

use banach_fbs::banach::weighted_norm;
use banach_fbs::fbs::{FbsSolver, Penalty, ProblemSpec, SolveHistory, StepPolicy, StopRule};
use banach_fbs::operators::{convolution_operator, IdentityOperator, Kernel3D, LinearOperator};
use banach_fbs::tv::io::GridField;
use banach_fbs::tv::{tv_seminorm, GridShape};
use banach_fbs::{Exponents, Signal};

use crate::config::{KernelChoice, TvConfig};
use crate::data::{phantom, scaled_noise};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct TvRun {
    pub shape: GridShape,
    pub u_true: Vec<f64>,
    pub f_delta: Vec<f64>,
    pub u: Vec<f64>,
    pub history: SolveHistory,
    pub tv_true: f64,
    pub tv_data: f64,
    pub tv_output: f64,
    pub discrepancy: f64,
    pub data_error: f64,
    /// Largest dual-constraint violation over all backward steps.
    pub max_dual_violation: f64,
    /// Backward steps that returned their input unchanged.
    pub fallbacks: usize,
}

pub fn build_operator(cfg: &TvConfig, shape: &GridShape) -> CliResult<Arc<dyn LinearOperator>> {
    let d = shape.ndim();
    let mu = shape.cell_measure();
    let kernel = match &cfg.kernel {
        KernelChoice::None => return Ok(Arc::new(IdentityOperator::new(shape.cells(), mu))),
        KernelChoice::Gaussian { size, sigma } => Kernel3D::gaussian(d, *size, *sigma),
        KernelChoice::Uniform { size } => Kernel3D::uniform(vec![*size; d]),
        KernelChoice::File(path) => Kernel3D::load(path),
    }
    .map_err(CliError::config)?;
    let op = convolution_operator(&kernel, shape.dims()).map_err(CliError::config)?;
    Ok(Arc::new(op.with_cell_measure(mu)))
}

pub fn run_tv(cfg: &TvConfig) -> CliResult<TvRun> {
    let shape = GridShape::unit(cfg.dims.clone()).map_err(CliError::config)?;
    let mu = shape.cell_measure();
    let n = shape.cells();
    let op = build_operator(cfg, &shape)?;
    let u_true = phantom(&cfg.dims);
    let noise = scaled_noise(n, cfg.noise, cfg.p, mu, cfg.seed);
    let f_delta: Vec<f64> = op.apply(&u_true).iter().zip(&noise).map(|(a, b)| a + b).collect();
    let f = Signal::uniform(f_delta.clone(), cfg.p, mu).map_err(CliError::config)?;
    let exps = Exponents::new(cfg.p, cfg.p, 1.0, cfg.delta).map_err(CliError::config)?;
    let prob = ProblemSpec::new(
        op,
        f,
        exps,
        Penalty::TotalVariation {
            alpha: cfg.alpha,
            grid: shape.clone(),
        },
    )
    .map_err(CliError::config)?;
    let u0 = prob.zero();
    let policy = StepPolicy::for_problem(&prob, &u0).map_err(CliError::Solver)?;
    let mut solver = FbsSolver::new(&prob, policy).map_err(CliError::Solver)?;
    solver.predual.max_iters = cfg.predual_max_iters;
    let stop = StopRule {
        max_iters: cfg.max_iters,
        d_tol: cfg.d_tol,
        objective_tol: cfg.objective_tol,
    };
    let mut max_dual_violation = 0.0f64;
    let mut fallbacks = 0;
    let (u, history) = solver
        .run_observed(u0, &stop, |_, _, diag| {
            max_dual_violation = max_dual_violation.max(diag.dual_violation.unwrap_or(0.0));
            fallbacks += diag.fell_back as usize;
        })
        .map_err(CliError::Solver)?;
    let e: Vec<f64> = noise;
    Ok(TvRun {
        tv_true: tv_seminorm(&u_true, &shape),
        tv_data: tv_seminorm(&f_delta, &shape),
        tv_output: tv_seminorm(u.values(), &shape),
        discrepancy: prob.discrepancy(&u),
        data_error: weighted_norm(&e, &vec![mu; n], cfg.p),
        shape,
        u_true,
        f_delta,
        u: u.into_values(),
        history,
        max_dual_violation,
        fallbacks,
    })
}

pub const SUMMARY_HEADER: &str = "p,alpha,discrepancy,tv,tv_data,data_error";

fn save_field(dir: &Path, name: &str, values: &[f64], cfg: &TvConfig, shape: &GridShape) -> CliResult<()> {
    let field = GridField::new(values.to_vec(), shape.clone(), cfg.p).map_err(CliError::config)?;
    let stem = dir.join(name);
    field.save(&stem).map_err(CliError::Solver)?;
    let slice = if shape.ndim() == 3 { shape.dims()[0] / 2 } else { 0 };
    field
        .write_pgm_slice(slice, dir.join(format!("{name}.pgm")))
        .map_err(CliError::Solver)
}

pub fn write_tv_outputs(cfg: &TvConfig, run: &TvRun) -> CliResult<()> {
    let out = &cfg.output;
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    save_field(out, "u_true", &run.u_true, cfg, &run.shape)?;
    save_field(out, "f", &run.f_delta, cfg, &run.shape)?;
    save_field(out, "u", &run.u, cfg, &run.shape)?;
    let hist = out.join("history.csv");
    std::fs::write(&hist, run.history.to_csv()).map_err(CliError::io(&hist))?;
    let summary = out.join("summary.csv");
    let text = format!(
        "{SUMMARY_HEADER}\n{},{},{},{},{},{}\n",
        cfg.p, cfg.alpha, run.discrepancy, run.tv_output, run.tv_data, run.data_error
    );
    std::fs::write(&summary, text).map_err(CliError::io(&summary))
}

pub fn cmd_tv(cfg: &TvConfig) -> CliResult<TvRun> {
    let run = run_tv(cfg)?;
    write_tv_outputs(cfg, &run)?;
    Ok(run)
}
