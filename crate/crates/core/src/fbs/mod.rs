//! The generalized forward-backward splitting iteration
//!
//! ```text
//! wⁿ   = F'(uⁿ) = K* j_r(K uⁿ - f)
//! uⁿ⁺¹ = argmin_v ‖v - uⁿ‖^p / p + τₙ (⟨wⁿ, v⟩ + Φ(v))
//! ```
//!
//! together with its descent diagnostics. The step size obeys
//! `τₙ <= p(1-δ)/L` where `L` bounds the `(p-1)`-Hölder constant of `F'` on
//! a sublevel set of the objective. Accepted steps satisfy
//!
//! ```text
//! (F+Φ)(uⁿ⁺¹) <= (F+Φ)(uⁿ) - δ D(uⁿ),   D(uⁿ) = Φ(uⁿ) - Φ(uⁿ⁺¹) + ⟨wⁿ, uⁿ - uⁿ⁺¹⟩,
//! ```
//!
//! which a-priori step sizes guarantee and optional backtracking enforces.

mod history;

use std::sync::Arc;
use std::time::Instant;

pub use history::{
    rate_fit, rate_fit_points, IterationRecord, RateFit, SolveHistory, StopStatus, CSV_HEADER,
};

use crate::banach::{dot, duality_map_unchecked, holder_bound_jr, weighted_norm, DualVector, Exponents, Signal};
use crate::error::{check_len, domain, Error, Result};
use crate::operators::{norm_bound_estimate, LinearOperator};
use crate::threshold::{power_penalty, solve_aux_sparse, AuxSolverConfig};
use crate::tv::{tv_backward_step, tv_seminorm, GridShape, PredualConfig};

/// The non-smooth part `Φ` of the objective.
#[derive(Debug, Clone)]
pub enum Penalty {
    /// `Φ(u) = Σ_k h_k α_k |u_k|^s / s`
    WeightedPower { alpha: Vec<f64> },
    /// `Φ(u) = α TV(u)` on the given grid.
    TotalVariation { alpha: f64, grid: GridShape },
}

/// `min_u ‖Ku - f‖^r / r + Φ(u)`.
///
/// Iterates live in the weighted `ℓ^r` space over the operator's domain
/// cells; the data `f` carries the exponent of the data space.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    op: Arc<dyn LinearOperator>,
    f: Signal,
    exps: Exponents,
    penalty: Penalty,
}

impl ProblemSpec {
    pub fn new(
        op: Arc<dyn LinearOperator>,
        f: Signal,
        exps: Exponents,
        penalty: Penalty,
    ) -> Result<Self> {
        check_len(op.range_len(), f.len())?;
        let rw = op.range_weight();
        if f.weights().iter().any(|w| (w - rw).abs() > 1e-12 * rw) {
            return domain("data weights differ from the operator's range cell measure");
        }
        let smooth = f.exponent().min(2.0);
        if exps.p > smooth + 1e-12 {
            return domain(format!(
                "p = {} exceeds the smoothness {smooth} of the data space l^{}",
                exps.p,
                f.exponent()
            ));
        }
        // validates the (data exponent, r) pair
        holder_bound_jr(f.exponent(), exps.r, 1.0)?;
        match &penalty {
            Penalty::WeightedPower { alpha } => {
                check_len(op.domain_len(), alpha.len())?;
                if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
                    return domain(format!("penalty weights must be finite and >= 0, found {a}"));
                }
            }
            Penalty::TotalVariation { alpha, grid } => {
                check_len(op.domain_len(), grid.cells())?;
                if !(alpha.is_finite() && *alpha >= 0.0) {
                    return domain(format!("TV weight must be finite and >= 0, got {alpha}"));
                }
                if (exps.r - exps.p).abs() > 1e-12 || (f.exponent() - exps.p).abs() > 1e-12 {
                    return domain("the TV backward step needs r = p = data exponent");
                }
                let mu = grid.cell_measure();
                if (op.domain_weight() - mu).abs() > 1e-12 * mu {
                    return domain("operator cell measure differs from h^d of the TV grid");
                }
            }
        }
        Ok(ProblemSpec { op, f, exps, penalty })
    }

    pub fn op(&self) -> &dyn LinearOperator {
        self.op.as_ref()
    }

    pub fn data(&self) -> &Signal {
        &self.f
    }

    pub fn exps(&self) -> &Exponents {
        &self.exps
    }

    pub fn penalty(&self) -> &Penalty {
        &self.penalty
    }

    pub fn len(&self) -> usize {
        self.op.domain_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A primal iterate with the given values.
    pub fn signal(&self, values: Vec<f64>) -> Result<Signal> {
        check_len(self.len(), values.len())?;
        Signal::uniform(values, self.exps.r, self.op.domain_weight())
    }

    pub fn zero(&self) -> Signal {
        self.signal(vec![0.0; self.len()])
            .expect("zero iterate is always valid")
    }

    fn check_iterate(&self, u: &Signal) -> Result<()> {
        check_len(self.len(), u.len())?;
        if (u.exponent() - self.exps.r).abs() > 1e-12 {
            return domain(format!(
                "iterate lives in l^{} but the problem is posed in l^{}",
                u.exponent(),
                self.exps.r
            ));
        }
        Ok(())
    }

    /// `Ku - f`
    pub fn residual(&self, u: &Signal) -> Vec<f64> {
        let mut res = self.op.apply(u.values());
        for (r, f) in res.iter_mut().zip(self.f.values()) {
            *r -= f;
        }
        res
    }

    /// `F(u) = ‖Ku - f‖^r / r`
    pub fn fit_value(&self, u: &Signal) -> f64 {
        let res = self.residual(u);
        weighted_norm(&res, self.f.weights(), self.f.exponent()).powf(self.exps.r) / self.exps.r
    }

    /// `‖Ku - f‖` in the data space.
    pub fn discrepancy(&self, u: &Signal) -> f64 {
        weighted_norm(&self.residual(u), self.f.weights(), self.f.exponent())
    }

    /// `Φ(u)`
    pub fn penalty_value(&self, u: &Signal) -> f64 {
        match &self.penalty {
            Penalty::WeightedPower { alpha } => power_penalty(u, alpha, self.exps.s),
            Penalty::TotalVariation { alpha, grid } => alpha * tv_seminorm(u.values(), grid),
        }
    }

    /// `(F + Φ)(u)`
    pub fn objective(&self, u: &Signal) -> f64 {
        self.fit_value(u) + self.penalty_value(u)
    }
}

/// `F'(u) = K* j_r(Ku - f)` with `j_r` the duality map of the data space.
pub fn gradient_f(u: &Signal, prob: &ProblemSpec) -> Result<DualVector> {
    prob.check_iterate(u)?;
    let res = prob.residual(u);
    let j = duality_map_unchecked(&res, prob.f.weights(), prob.f.exponent(), prob.exps.r);
    let g = prob.op.adjoint(j.values());
    Ok(DualVector::from_parts_unchecked(g, u.weights().to_vec()))
}

/// Radii of the sublevel set `{F + Φ <= level}` and the resulting Hölder
/// bound of `F'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallEstimate {
    pub level: f64,
    /// Bound on `‖u‖` in the primal space; infinite when `Φ` is not coercive.
    pub radius: f64,
    /// Bound on `‖Ku - f‖` in the data space.
    pub residual_radius: f64,
    /// Bound on the `(p-1)`-Hölder constant of `F'` over the sublevel set.
    pub holder_constant: f64,
}

/// Estimates the sublevel-set radius through `u0` and the Hölder constant
/// `L = ‖j_r‖_{pY-1} ‖K‖^{pY}`, `pY = min(2, data exponent)`, converted to
/// exponent `p - 1` when `p < pY`.
///
/// For the power penalty `Σ h_k α_k |u_k|^s/s <= level` gives
/// `Σ h_k |u_k|^s <= s·level/α_min`, and for `s <= r`
/// `‖u‖_r <= (s·level/α_min)^{1/s} · h_min^{1/r - 1/s}`.
pub fn initial_ball_and_constant(prob: &ProblemSpec, u0: &Signal) -> Result<BallEstimate> {
    prob.check_iterate(u0)?;
    let level = prob.objective(u0);
    if !level.is_finite() {
        return domain("the objective is not finite at the start point");
    }
    let exps = &prob.exps;
    let radius = match &prob.penalty {
        Penalty::WeightedPower { alpha } => {
            let amin = alpha.iter().cloned().fold(f64::INFINITY, f64::min);
            if amin > 0.0 {
                let wmin = u0.weights().iter().cloned().fold(f64::INFINITY, f64::min);
                let mass = exps.s * level / amin;
                mass.powf(1.0 / exps.s) * wmin.powf(1.0 / exps.r - 1.0 / exps.s)
            } else {
                f64::INFINITY
            }
        }
        Penalty::TotalVariation { .. } => f64::INFINITY,
    };
    let ey = prob.f.exponent();
    let knorm = norm_bound_estimate(prob.op.as_ref(), exps.r, ey)?;
    let fnorm = prob.f.norm();
    let residual_radius = (exps.r * level)
        .powf(1.0 / exps.r)
        .min(knorm * radius + fnorm);
    let py = ey.min(2.0);
    let mut holder = holder_bound_jr(ey, exps.r, residual_radius)? * knorm.powf(py);
    if exps.p < py {
        if !radius.is_finite() {
            return Err(Error::InfeasiblePolicy(format!(
                "p = {} < {py} needs a bounded sublevel set to convert the Hölder exponent",
                exps.p
            )));
        }
        holder *= (2.0 * radius).powf(py - exps.p);
    }
    Ok(BallEstimate {
        level,
        radius,
        residual_radius,
        holder_constant: holder.max(f64::MIN_POSITIVE),
    })
}

/// Step-size rule `τ̲ <= τ <= p(1-δ)/L` with optional backtracking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    pub holder_constant: f64,
    pub delta: f64,
    pub tau_floor: f64,
    pub backtracking: bool,
    pub shrink_factor: f64,
    pub max_shrinks: usize,
    /// Recompute the Hölder bound from the current objective level every
    /// this many iterations; 0 disables.
    pub readjust_every: usize,
}

impl StepPolicy {
    pub fn from_constant(holder_constant: f64, exps: &Exponents) -> Self {
        let cap = exps.p * (1.0 - exps.delta) / holder_constant;
        StepPolicy {
            holder_constant,
            delta: exps.delta,
            tau_floor: 1e-6 * cap,
            backtracking: true,
            shrink_factor: 0.5,
            max_shrinks: 30,
            readjust_every: 100,
        }
    }

    pub fn for_problem(prob: &ProblemSpec, u0: &Signal) -> Result<Self> {
        let ball = initial_ball_and_constant(prob, u0)?;
        Ok(Self::from_constant(ball.holder_constant, &prob.exps))
    }

    /// `p(1-δ)/L`
    pub fn cap(&self, exps: &Exponents) -> f64 {
        exps.p * (1.0 - self.delta) / self.holder_constant
    }
}

/// The largest admissible step `p(1-δ)/L`.
pub fn propose_tau(policy: &StepPolicy, exps: &Exponents) -> Result<f64> {
    if !(policy.holder_constant > 0.0 && policy.holder_constant.is_finite()) {
        return Err(Error::InfeasiblePolicy(format!(
            "Hölder constant must be positive and finite, got {}",
            policy.holder_constant
        )));
    }
    if !(policy.delta > 0.0 && policy.delta < 1.0) {
        return Err(Error::InfeasiblePolicy(format!(
            "delta must lie in (0, 1), got {}",
            policy.delta
        )));
    }
    if !(policy.shrink_factor > 0.0 && policy.shrink_factor < 1.0) {
        return Err(Error::InfeasiblePolicy(format!(
            "shrink factor must lie in (0, 1), got {}",
            policy.shrink_factor
        )));
    }
    let cap = policy.cap(exps);
    if !(policy.tau_floor > 0.0 && policy.tau_floor <= cap) {
        return Err(Error::InfeasiblePolicy(format!(
            "tau floor {} is not in (0, {cap}]",
            policy.tau_floor
        )));
    }
    Ok(cap)
}

/// `D = Φ(u) - Φ(u_next) + ⟨w, u - u_next⟩`
pub fn descent_measure_d(u: &Signal, u_next: &Signal, w: &DualVector, prob: &ProblemSpec) -> f64 {
    let lin: f64 = w
        .values()
        .iter()
        .zip(u.values().iter().zip(u_next.values()))
        .map(|(wk, (a, b))| wk * (a - b))
        .sum();
    prob.penalty_value(u) - prob.penalty_value(u_next) + lin
}

/// Splits the objective gap at `v` into the Bregman-like part
/// `R = Φ(v) - Φ(u*) + ⟨F'(u*), v - u*⟩` and the Taylor remainder
/// `T = F(v) - F(u*) - ⟨F'(u*), v - u*⟩`.
pub fn distances_rt(v: &Signal, u_star: &Signal, prob: &ProblemSpec) -> Result<(f64, f64)> {
    prob.check_iterate(v)?;
    let g = gradient_f(u_star, prob)?;
    let diff: Vec<f64> = v.values().iter().zip(u_star.values()).map(|(a, b)| a - b).collect();
    let lin = dot(g.values(), &diff);
    let r = prob.penalty_value(v) - prob.penalty_value(u_star) + lin;
    let t = prob.fit_value(v) - prob.fit_value(u_star) - lin;
    Ok((r, t))
}

/// Everything measured during one accepted step.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub w: DualVector,
    pub tau: f64,
    pub descent: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub step_norm: f64,
    pub backtracks: usize,
    /// Coupling factor of the power-penalty backward step.
    pub coupling: Option<f64>,
    /// Largest dual-constraint violation of the TV predual solution.
    pub dual_violation: Option<f64>,
    pub inner_iterations: usize,
    /// The TV backward step fell back to its input.
    pub fell_back: bool,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub u_next: Signal,
    pub diag: StepDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iters: usize,
    /// Stop once `D(uⁿ) <= d_tol`; defaults to `1e-12 (1 + |(F+Φ)(u⁰)|)`.
    pub d_tol: Option<f64>,
    /// Stop once the objective decrease is below this fraction of
    /// `1 + |objective|`; 0 disables.
    pub objective_tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            max_iters: 1000,
            d_tol: None,
            objective_tol: 0.0,
        }
    }
}

impl StopRule {
    pub fn iterations(max_iters: usize) -> Self {
        StopRule {
            max_iters,
            ..Default::default()
        }
    }
}

struct BackwardResult {
    v: Signal,
    coupling: Option<f64>,
    dual_violation: Option<f64>,
    inner_iterations: usize,
    fell_back: bool,
    warm: Warm,
}

enum Warm {
    None,
    Coupling(f64),
    Dual(Vec<f64>),
}

/// Iteration state: current step size and warm starts of the inner solvers.
#[derive(Debug, Clone)]
pub struct FbsSolver<'a> {
    prob: &'a ProblemSpec,
    policy: StepPolicy,
    tau: f64,
    pub aux: AuxSolverConfig,
    pub predual: PredualConfig,
    warm_coupling: Option<f64>,
    warm_dual: Option<Vec<f64>>,
    last_descent: Option<f64>,
}

impl<'a> FbsSolver<'a> {
    pub fn new(prob: &'a ProblemSpec, policy: StepPolicy) -> Result<Self> {
        let tau = propose_tau(&policy, &prob.exps)?;
        Ok(FbsSolver {
            prob,
            policy,
            tau,
            aux: AuxSolverConfig::default(),
            predual: PredualConfig::default(),
            warm_coupling: None,
            warm_dual: None,
            last_descent: None,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn policy(&self) -> &StepPolicy {
        &self.policy
    }

    /// The TV dual field of the latest backward step.
    pub fn dual_field(&self) -> Option<&[f64]> {
        self.warm_dual.as_deref()
    }

    fn backward(&self, u: &Signal, w: &DualVector, tau: f64) -> Result<BackwardResult> {
        match &self.prob.penalty {
            Penalty::WeightedPower { alpha } => {
                let cfg = AuxSolverConfig {
                    z_init: self.aux.z_init.or(self.warm_coupling),
                    ..self.aux
                };
                let rep = solve_aux_sparse(u, w, tau, alpha, &self.prob.exps, &cfg)?;
                Ok(BackwardResult {
                    v: rep.v,
                    coupling: Some(rep.z),
                    dual_violation: None,
                    inner_iterations: rep.z_iterations,
                    fell_back: false,
                    warm: if rep.z > 0.0 { Warm::Coupling(rep.z) } else { Warm::None },
                })
            }
            Penalty::TotalVariation { alpha, grid } => {
                let tol = match self.last_descent {
                    Some(d) => (1e-3 * d).max(1e-10),
                    None => self.predual.tol,
                };
                let cfg = PredualConfig { tol, ..self.predual };
                let rep = tv_backward_step(
                    u.values(),
                    w.values(),
                    tau,
                    *alpha,
                    self.prob.exps.p,
                    grid,
                    &cfg,
                    self.warm_dual.as_deref(),
                )?;
                Ok(BackwardResult {
                    v: u.with_values(rep.v)?,
                    coupling: None,
                    dual_violation: Some(rep.dual_violation),
                    inner_iterations: rep.predual.iterations,
                    fell_back: rep.fell_back,
                    warm: Warm::Dual(rep.predual.z),
                })
            }
        }
    }

    /// One forward-backward step from `u`.
    pub fn step(&mut self, u: &Signal) -> Result<StepOutcome> {
        self.prob.check_iterate(u)?;
        let prob = self.prob;
        let obj_u = prob.objective(u);
        let w = gradient_f(u, prob)?;
        let slack = 1e-12 * (1.0 + obj_u.abs());
        let mut tau = self.tau;
        let mut backtracks = 0;
        loop {
            let res = self.backward(u, &w, tau)?;
            let obj_v = prob.objective(&res.v);
            let descent = descent_measure_d(u, &res.v, &w, prob);
            let accepted =
                !self.policy.backtracking || obj_v <= obj_u - self.policy.delta * descent.max(0.0) + slack;
            if accepted {
                self.tau = tau;
                match res.warm {
                    Warm::Coupling(z) => self.warm_coupling = Some(z),
                    Warm::Dual(z) => self.warm_dual = Some(z),
                    Warm::None => {}
                }
                self.last_descent = Some(descent.max(0.0));
                let diff: Vec<f64> = res.v.values().iter().zip(u.values()).map(|(a, b)| a - b).collect();
                let step_norm = weighted_norm(&diff, u.weights(), u.exponent());
                return Ok(StepOutcome {
                    u_next: res.v,
                    diag: StepDiagnostics {
                        w,
                        tau,
                        descent,
                        objective_before: obj_u,
                        objective_after: obj_v,
                        step_norm,
                        backtracks,
                        coupling: res.coupling,
                        dual_violation: res.dual_violation,
                        inner_iterations: res.inner_iterations,
                        fell_back: res.fell_back,
                    },
                });
            }
            let next = tau * self.policy.shrink_factor;
            if backtracks >= self.policy.max_shrinks || next < self.policy.tau_floor {
                return Err(Error::BacktrackingExhausted {
                    shrinks: backtracks,
                    tau,
                });
            }
            tau = next;
            backtracks += 1;
        }
    }

    /// Recomputes the Hölder bound on the sublevel set through `u` and
    /// loosens `τ` proportionally if the bound improved.
    pub fn readjust(&mut self, u: &Signal) -> Result<()> {
        let ball = initial_ball_and_constant(self.prob, u)?;
        if ball.holder_constant < self.policy.holder_constant {
            let ratio = self.tau / self.policy.cap(&self.prob.exps);
            self.policy.holder_constant = ball.holder_constant;
            self.tau = ratio * self.policy.cap(&self.prob.exps);
        }
        Ok(())
    }

    pub fn run(&mut self, u0: Signal, stop: &StopRule) -> Result<(Signal, SolveHistory)> {
        self.run_observed(u0, stop, |_, _, _| {})
    }

    /// Runs the iteration, calling `observer(uⁿ, record, diagnostics)` after
    /// every accepted step.
    pub fn run_observed(
        &mut self,
        u0: Signal,
        stop: &StopRule,
        mut observer: impl FnMut(&Signal, &IterationRecord, &StepDiagnostics),
    ) -> Result<(Signal, SolveHistory)> {
        self.prob.check_iterate(&u0)?;
        let start = Instant::now();
        let obj0 = self.prob.objective(&u0);
        let d_tol = stop.d_tol.unwrap_or(1e-12 * (1.0 + obj0.abs()));
        let mut u = u0;
        let mut records = Vec::new();
        let mut status = StopStatus::MaxIters;
        for n in 0..stop.max_iters {
            let every = self.policy.readjust_every;
            if every > 0 && n > 0 && n % every == 0 {
                self.readjust(&u)?;
            }
            let out = self.step(&u)?;
            let d = &out.diag;
            let record = IterationRecord {
                n,
                objective: d.objective_before,
                descent: d.descent,
                tau: d.tau,
                step_norm: d.step_norm,
                seconds: start.elapsed().as_secs_f64(),
                backtracks: d.backtracks,
            };
            observer(&u, &record, d);
            records.push(record);
            if out.u_next.values() == u.values() {
                status = StopStatus::FixedPoint;
                break;
            }
            let stalled = stop.objective_tol > 0.0
                && d.objective_before - d.objective_after
                    <= stop.objective_tol * (1.0 + d.objective_before.abs());
            let converged = d.descent <= d_tol;
            u = out.u_next;
            if converged {
                status = StopStatus::ConvergedD;
                break;
            }
            if stalled {
                status = StopStatus::ObjectiveStalled;
                break;
            }
        }
        let final_objective = self.prob.objective(&u);
        Ok((
            u,
            SolveHistory {
                records,
                status,
                final_objective,
            },
        ))
    }
}

/// One step with a fresh solver state.
pub fn fbs_step(u: &Signal, prob: &ProblemSpec, policy: &StepPolicy) -> Result<StepOutcome> {
    FbsSolver::new(prob, *policy)?.step(u)
}

/// Runs from `u0` (zero if `None`).
pub fn fbs_run(
    prob: &ProblemSpec,
    policy: &StepPolicy,
    stop: &StopRule,
    u0: Option<Signal>,
) -> Result<(Signal, SolveHistory)> {
    let u0 = u0.unwrap_or_else(|| prob.zero());
    FbsSolver::new(prob, *policy)?.run(u0, stop)
}

/// Proxy for `min (F+Φ)`: the best objective of a run with `iterations`
/// steps from `u0`, lowered by `1e-15` so that gaps stay positive.
pub fn reference_objective(
    prob: &ProblemSpec,
    policy: &StepPolicy,
    iterations: usize,
    u0: Option<Signal>,
) -> Result<(f64, Signal)> {
    let stop = StopRule {
        max_iters: iterations,
        d_tol: Some(0.0),
        objective_tol: 0.0,
    };
    let (u, hist) = fbs_run(prob, policy, &stop, u0)?;
    let best = hist
        .records
        .iter()
        .map(|r| r.objective)
        .fold(hist.final_objective, f64::min);
    Ok((best - 1e-15, u))
}
