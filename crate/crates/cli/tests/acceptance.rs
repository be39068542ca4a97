//! End-to-end acceptance checks. Each criterion prints one `[PASS]` or
//! `[FAIL]` line with its measurements and wall-clock time, followed by a
//! tally. Failures only turn into a nonzero exit status when
//! `ACCEPTANCE_STRICT=1` is set.

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use banach_fbs::fbs::{
    distances_rt, fbs_run, fbs_step, gradient_f, rate_fit_points, reference_objective, FbsSolver,
    Penalty, ProblemSpec, StepPolicy, StopRule,
};
use banach_fbs::operators::{
    adjoint_test, convolution_operator, integration_operator, DenseMatrix, Kernel3D, LinearOperator,
};
use banach_fbs::threshold::{psi_value, threshold_scalar, ScalarProxParams};
use banach_fbs::tv::{div, grad, GridShape};
use banach_fbs::{Exponents, Signal};
use banach_fbs_cli::config::{RawConfig, SparseConfig, TvConfig};
use banach_fbs_cli::sparse::{build_problem, make_instance, noisy_data, run_all};
use banach_fbs_cli::tv_cmd::run_tv;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn grid_golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const CELLS: usize = 4000;
    let h = (hi - lo) / CELLS as f64;
    let best = (0..=CELLS)
        .map(|i| lo + i as f64 * h)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        if b - a < 1e-15 * (1.0 + a.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

fn resolvent_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (rs, ss) = ([1.3, 1.5, 2.0], [1.0, 1.3, 2.0]);
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 200 {
        let (r, s) = (rs[rng.random_range(0..3)], ss[rng.random_range(0..3)]);
        if s > r {
            continue;
        }
        let params = ScalarProxParams::new(rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0), r, s)
            .map_err(|e| e.to_string())?;
        let x = rng.random_range(-4.0..4.0);
        let got = threshold_scalar(x, &params).map_err(|e| e.to_string())?;
        let free = params.y + x.signum() * x.abs().powf(1.0 / (r - 1.0));
        let reach = free.abs().max(params.y.abs()) + 1.0;
        let want = grid_golden_min(|v| psi_value(v, &params, -x), -reach, reach);
        worst = worst.max((got - want).abs());
        count += 1;
    }
    check(worst <= 1e-6, format!("{count} instances, max |Δ| = {worst:.2e}"))
}

fn soft_threshold() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (y, t, x) = (rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0), rng.random_range(-8.0..8.0));
        let params = ScalarProxParams::new(y, t, 2.0, 1.0).map_err(|e| e.to_string())?;
        let got = threshold_scalar(x, &params).map_err(|e| e.to_string())?;
        worst = worst.max((got - (x + y).signum() * ((x + y).abs() - t).max(0.0)).abs());
    }
    check(worst <= 1e-12, format!("1000 triples, max |Δ| = {worst:.2e}"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let r = if i % 2 == 0 { 1.5 } else { 2.0 };
        let (n, m) = (rng.random_range(2..=20), rng.random_range(2..=20));
        let entries: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let op = DenseMatrix::new(m, n, entries).map_err(|e| e.to_string())?.with_weights(0.5, 0.7);
        let f: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let prob = ProblemSpec::new(
            Arc::new(op),
            Signal::uniform(f, r, 0.7).map_err(|e| e.to_string())?,
            Exponents::new(r, r, 1.0, 0.1).map_err(|e| e.to_string())?,
            Penalty::WeightedPower { alpha: vec![0.1; n] },
        )
        .map_err(|e| e.to_string())?;
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = gradient_f(&prob.signal(u.clone()).map_err(|e| e.to_string())?, &prob).map_err(|e| e.to_string())?;
        let fit = |x: &[f64]| prob.fit_value(&prob.signal(x.to_vec()).unwrap());
        let mut err2 = 0.0;
        for k in 0..n {
            let (mut up, mut um) = (u.clone(), u.clone());
            up[k] += 1e-6;
            um[k] -= 1e-6;
            err2 += ((fit(&up) - fit(&um)) / 2e-6 - g.values()[k]).powi(2);
        }
        let scale = g.values().iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(err2.sqrt() / scale);
    }
    check(worst <= 1e-5, format!("20 instances, max relative error = {worst:.2e}"))
}

fn adjoint_identities() -> Outcome {
    let mut worst_op = 0.0f64;
    let mut ops: Vec<Box<dyn LinearOperator>> = vec![
        Box::new(integration_operator(100).map_err(|e| e.to_string())?),
        Box::new(integration_operator(500).map_err(|e| e.to_string())?),
    ];
    let k2 = Kernel3D::gaussian(2, 5, 1.0).map_err(|e| e.to_string())?;
    let k3 = Kernel3D::gaussian(3, 5, 1.0).map_err(|e| e.to_string())?;
    ops.push(Box::new(convolution_operator(&k2, &[64, 64]).map_err(|e| e.to_string())?));
    ops.push(Box::new(convolution_operator(&k3, &[16, 16, 16]).map_err(|e| e.to_string())?));
    for (i, op) in ops.iter().enumerate() {
        let rep = adjoint_test(op.as_ref(), 10, 1e-12, i as u64).map_err(|e| e.to_string())?;
        worst_op = worst_op.max(rep.max_relative_error);
    }
    let shape = GridShape::unit(vec![16, 16, 16]).map_err(|e| e.to_string())?;
    let n = shape.cells();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst_grad = 0.0f64;
    for _ in 0..10 {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gu = grad(&u, &shape);
        let lhs: f64 = gu.iter().zip(&z).map(|(a, b)| a * b).sum();
        let rhs: f64 = -u.iter().zip(div(&z, &shape)).map(|(a, b)| a * b).sum::<f64>();
        let l2 = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst_grad = worst_grad.max((lhs - rhs).abs() / (l2(&gu) * l2(&z)));
    }
    check(
        worst_op <= 1e-12 && worst_grad <= 1e-13,
        format!("operators {worst_op:.2e}, grad/div on 16³ {worst_grad:.2e}"),
    )
}

/// The shared N = 100 integration instance: the demo's spikes and noise
/// model at a smaller size.
fn small_problem(p: f64) -> Result<ProblemSpec, String> {
    let raw = RawConfig::parse("n = 100\nalpha = 0.001\nseed = 2024\n").map_err(|e| e.to_string())?;
    let cfg = SparseConfig::from_raw(&raw).map_err(|e| e.to_string())?;
    let inst = make_instance(&cfg).map_err(|e| e.to_string())?;
    let f = noisy_data(&cfg, &inst, p);
    build_problem(cfg.n, &f, p, 1.0, 0.1, 1e-3).map_err(|e| e.to_string())
}

fn descent_and_d_bound() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for p in [1.5, 2.0] {
        let prob = small_problem(p)?;
        let policy = StepPolicy::for_problem(&prob, &prob.zero()).map_err(|e| e.to_string())?;
        let mut solver = FbsSolver::new(&prob, policy).map_err(|e| e.to_string())?;
        let stop = StopRule { max_iters: 10_000, d_tol: Some(0.0), objective_tol: 0.0 };
        let (mut rises, mut breaches, mut steps) = (0, 0, 0);
        solver
            .run_observed(prob.zero(), &stop, |_, _, d| {
                steps += 1;
                if d.objective_after > d.objective_before + 1e-12 * (1.0 + d.objective_before.abs()) {
                    rises += 1;
                }
                if d.step_norm.powf(p) / d.tau > d.descent + 1e-9 {
                    breaches += 1;
                }
            })
            .map_err(|e| e.to_string())?;
        ok &= steps == 10_000 && rises == 0 && breaches == 0;
        notes.push(format!("p={p}: {steps} steps, {rises} increases, {breaches} D-bound breaches"));
    }
    check(ok, notes.join("; "))
}

fn rate_envelope() -> Outcome {
    const ITERS: usize = 10_000;
    let mut notes = Vec::new();
    let (mut envelope_ok, mut slope_ok) = (true, true);
    for p in [1.5, 2.0] {
        let prob = small_problem(p)?;
        let policy = StepPolicy::for_problem(&prob, &prob.zero()).map_err(|e| e.to_string())?;
        let (reference, _) = reference_objective(&prob, &policy, 10 * ITERS, None).map_err(|e| e.to_string())?;
        let stop = StopRule { max_iters: ITERS + 1, d_tol: Some(0.0), objective_tol: 0.0 };
        let (_, hist) = fbs_run(&prob, &policy, &stop, None).map_err(|e| e.to_string())?;
        let gaps: Vec<(usize, f64)> = hist.records.iter().map(|r| (r.n, r.objective - reference)).collect();
        let scaled = |&(n, r): &(usize, f64)| r * (n as f64).powf(p - 1.0);
        let c = gaps[10..=20].iter().map(scaled).fold(0.0f64, f64::max);
        let worst = gaps[20..=ITERS].iter().map(scaled).fold(0.0f64, f64::max);
        let fit = rate_fit_points(&gaps[10..=ITERS], p).map_err(|e| e.to_string())?;
        envelope_ok &= worst <= c;
        slope_ok &= fit.slope <= -(p - 1.0) + 0.1;
        notes.push(format!(
            "p={p}: C={c:.3e}, max rₙn^(p-1)/C={:.2}, slope={:.3} (need <= {:.1})",
            worst / c,
            fit.slope,
            -(p - 1.0) + 0.1
        ));
    }
    check(
        envelope_ok && slope_ok,
        format!("envelope {}, slope {}; {}", verdict(envelope_ok), verdict(slope_ok), notes.join("; ")),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "holds"
    } else {
        "violated"
    }
}

fn bregman_taylor_split() -> Outcome {
    let mut worst = 0.0f64;
    let mut points = 0;
    for p in [1.5, 2.0] {
        let prob = small_problem(p)?;
        let policy = StepPolicy::for_problem(&prob, &prob.zero()).map_err(|e| e.to_string())?;
        let (_, u_star) = reference_objective(&prob, &policy, 20_000, None).map_err(|e| e.to_string())?;
        let f_star = prob.objective(&u_star);
        let mut solver = FbsSolver::new(&prob, policy).map_err(|e| e.to_string())?;
        let mut trajectory = Vec::new();
        solver
            .run_observed(prob.zero(), &StopRule::iterations(2000), |u, rec, _| {
                if rec.n % 20 == 0 {
                    trajectory.push(u.clone());
                }
            })
            .map_err(|e| e.to_string())?;
        for u in &trajectory {
            let (r, t) = distances_rt(u, &u_star, &prob).map_err(|e| e.to_string())?;
            let gap = prob.objective(u) - f_star;
            worst = worst.max((r + t - gap).abs() / (1.0 + gap.abs()));
            points += 1;
        }
    }
    check(worst <= 1e-10, format!("{points} iterates, max |R+T-rₙ|/(1+rₙ) = {worst:.2e}"))
}

fn fixed_point() -> Outcome {
    let prob = small_problem(2.0)?;
    let policy = StepPolicy::for_problem(&prob, &prob.zero()).map_err(|e| e.to_string())?;
    let stop = StopRule { max_iters: 1_000_000, d_tol: Some(0.0), objective_tol: 0.0 };
    let (u, hist) = fbs_run(&prob, &policy, &stop, None).map_err(|e| e.to_string())?;
    let out = fbs_step(&u, &prob, &policy).map_err(|e| e.to_string())?;
    let moved = out.u_next.sub(&u).map_err(|e| e.to_string())?.norm();
    check(
        moved <= 1e-8,
        format!("p=2: {} iterations ({}), extra step moves {moved:.2e}", hist.len(), hist.status),
    )
}

fn sparse_table() -> Outcome {
    let raw = RawConfig::load(&configs_dir().join("sparse-demo.conf")).map_err(|e| e.to_string())?;
    let cfg = SparseConfig::from_raw(&raw).map_err(|e| e.to_string())?;
    let inst = make_instance(&cfg).map_err(|e| e.to_string())?;
    let runs = run_all(&cfg, &inst, 2).map_err(|e| e.to_string())?;
    let nnz_of = |p: f64| runs.iter().find(|r| r.p == p).map(|r| r.nnz);
    let (Some(n15), Some(n2)) = (nnz_of(1.5), nnz_of(2.0)) else {
        return Err("config must list p = 1.5 and p = 2".into());
    };
    let within = |n: usize, published: f64| (n as f64 - published).abs() <= 0.5 * published;
    let ok = n15 < n2 && within(n15, 40.0) && within(n2, 61.0);
    let rows: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "p={}: α={:.3e}, discrepancy={:.5}, nnz={} ({})",
                r.p,
                r.alpha,
                r.discrepancy,
                r.nnz,
                r.history.status
            )
        })
        .collect();
    check(ok, format!("{}; bands 40±20 and 61±30.5", rows.join("; ")))
}

fn tv_suite() -> Outcome {
    let monotone = |objs: &[f64]| objs.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
    let load = |name: &str| -> Result<TvConfig, String> {
        let raw = RawConfig::load(&configs_dir().join(name)).map_err(|e| e.to_string())?;
        TvConfig::from_raw(&raw, configs_dir()).map_err(|e| e.to_string())
    };
    let denoise = run_tv(&load("tv-denoise.conf")?).map_err(|e| e.to_string())?;
    let objs: Vec<f64> = denoise.history.records.iter().map(|r| r.objective).collect();
    let d_ok = denoise.max_dual_violation <= 1e-12 && monotone(&objs) && denoise.tv_output < denoise.tv_data;
    let deblur = run_tv(&load("tv-deblur.conf")?).map_err(|e| e.to_string())?;
    let objs: Vec<f64> = deblur.history.records.iter().map(|r| r.objective).collect();
    let b_ok = monotone(&objs) && !objs.is_empty();
    check(
        d_ok && b_ok,
        format!(
            "64² denoise: dual violation {:.1e}, TV {:.4} < {:.4} ({} iterations); 32³ deblur: {} iterations, monotone {}",
            denoise.max_dual_violation,
            denoise.tv_output,
            denoise.tv_data,
            denoise.history.len(),
            deblur.history.len(),
            b_ok
        ),
    )
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "resolvent matches oracle", budget: Duration::from_secs(10), run: resolvent_oracle },
        Criterion { id: 2, name: "soft-threshold closed form", budget: Duration::from_secs(1), run: soft_threshold },
        Criterion { id: 3, name: "gradient check", budget: Duration::from_secs(5), run: gradient_check },
        Criterion { id: 4, name: "adjoint identities", budget: Duration::from_secs(5), run: adjoint_identities },
        Criterion { id: 5, name: "monotone descent and D bound", budget: Duration::from_secs(30), run: descent_and_d_bound },
        Criterion { id: 6, name: "rate envelope", budget: Duration::from_secs(120), run: rate_envelope },
        Criterion { id: 7, name: "Bregman/Taylor split", budget: Duration::from_secs(10), run: bregman_taylor_split },
        Criterion { id: 8, name: "fixed point", budget: Duration::from_secs(5), run: fixed_point },
        Criterion { id: 9, name: "sparse table reproduction", budget: Duration::from_secs(300), run: sparse_table },
        Criterion { id: 10, name: "TV suite", budget: Duration::from_secs(300), run: tv_suite },
    ];
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (mut failed, mut total) = (0, 0);
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        total += 1;
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.budget;
        let (ok, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        let time_note = if in_time { String::new() } else { format!(" over budget {:?}", c.budget) };
        println!(
            "[{}] criterion {}: {}: {} [{:.2}s{}]",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            time_note
        );
        failed += usize::from(!ok);
    }
    println!("{failed} of {total} criteria failed");
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
