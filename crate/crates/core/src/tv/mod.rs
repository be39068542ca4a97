//! Total-variation backward step on regular grids.
//!
//! The resolvent
//!
//! ```text
//! min_v ‖v - u‖_p^p / p + s (⟨w, v⟩ + α TV(v))
//! ```
//!
//! is computed through its Fenchel predual
//!
//! ```text
//! min_{|z| <= sα, z·ν = 0}  Σ μ (|div z - s ŵ|^{p'} / p' + u · div z)
//! ```
//!
//! with `ŵ = w / μ` the density of the dual vector `w` and `μ = h^d` the cell
//! measure. The predual is solved by projected gradient descent with Armijo
//! backtracking, after which `v = u + j_{p'}(div z - s ŵ)`.
//!
//! Fields are flat row-major arrays (last axis fastest). Vector fields store
//! their `d` components one after another, each congruent with the grid.

pub mod io;

use crate::banach::{apow, dual_exponent, spow};
use crate::error::{check_len, domain, Result};
use crate::operators::pad3;

/// Extents and cell width of a regular grid with `1 <= d <= 3` axes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridShape {
    dims: Vec<usize>,
    spacing: f64,
}

impl GridShape {
    pub fn new(dims: Vec<usize>, spacing: f64) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
            return domain(format!("grid needs 1 to 3 positive extents, got {dims:?}"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return domain(format!("grid spacing must be > 0, got {spacing}"));
        }
        Ok(GridShape { dims, spacing })
    }

    /// Grid on `[0, 1]^d` along the first axis: `h = 1 / n_1`.
    pub fn unit(dims: Vec<usize>) -> Result<Self> {
        let h = 1.0 / *dims.first().unwrap_or(&1) as f64;
        Self::new(dims, h)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cells(&self) -> usize {
        self.dims.iter().product()
    }

    /// `h^d`
    pub fn cell_measure(&self) -> f64 {
        self.spacing.powi(self.dims.len() as i32)
    }

    /// Padded extent and stride of each real axis.
    fn axes(&self) -> Vec<(usize, usize)> {
        let d = self.ndim();
        (0..d)
            .map(|a| (self.dims[a], self.dims[a + 1..].iter().product()))
            .collect()
    }
}

/// Coordinates of every cell along every axis, visited in storage order.
fn for_each_cell(shape: &GridShape, mut f: impl FnMut(usize, [usize; 3])) {
    let [n0, n1, n2] = pad3(shape.dims());
    let off = 3 - shape.ndim();
    let mut idx = 0;
    for i0 in 0..n0 {
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let full = [i0, i1, i2];
                let mut c = [0; 3];
                c[..shape.ndim()].copy_from_slice(&full[off..]);
                f(idx, c);
                idx += 1;
            }
        }
    }
}

/// Forward differences divided by `h`, zero across the far boundary.
pub fn grad(u: &[f64], shape: &GridShape) -> Vec<f64> {
    let mut out = vec![0.0; shape.ndim() * shape.cells()];
    grad_into(u, shape, &mut out);
    out
}

pub fn grad_into(u: &[f64], shape: &GridShape, out: &mut [f64]) {
    let n = shape.cells();
    let inv_h = 1.0 / shape.spacing;
    let axes = shape.axes();
    for_each_cell(shape, |idx, c| {
        for (a, &(len, stride)) in axes.iter().enumerate() {
            out[a * n + idx] = if c[a] + 1 < len {
                (u[idx + stride] - u[idx]) * inv_h
            } else {
                0.0
            };
        }
    });
}

/// Backward differences with `div = -gradᵀ`.
pub fn div(z: &[f64], shape: &GridShape) -> Vec<f64> {
    let mut out = vec![0.0; shape.cells()];
    div_into(z, shape, &mut out);
    out
}

pub fn div_into(z: &[f64], shape: &GridShape, out: &mut [f64]) {
    let n = shape.cells();
    let inv_h = 1.0 / shape.spacing;
    let axes = shape.axes();
    for_each_cell(shape, |idx, c| {
        let mut acc = 0.0;
        for (a, &(len, stride)) in axes.iter().enumerate() {
            let comp = &z[a * n..(a + 1) * n];
            if c[a] + 1 < len {
                acc += comp[idx];
            }
            if c[a] > 0 {
                acc -= comp[idx - stride];
            }
        }
        out[idx] = acc * inv_h;
    });
}

/// Isotropic total variation `Σ h^d |∇u|₂`.
pub fn tv_seminorm(u: &[f64], shape: &GridShape) -> f64 {
    let g = grad(u, shape);
    let n = shape.cells();
    let d = shape.ndim();
    let sum: f64 = (0..n)
        .map(|i| (0..d).map(|a| g[a * n + i].powi(2)).sum::<f64>().sqrt())
        .sum();
    shape.cell_measure() * sum
}

/// Radial projection onto `|z_cell|₂ <= bound` followed by zeroing the
/// normal components on the far boundary.
pub fn project_dual(z: &mut [f64], shape: &GridShape, bound: f64) {
    let n = shape.cells();
    let d = shape.ndim();
    let axes = shape.axes();
    for_each_cell(shape, |idx, c| {
        for (a, &(len, _)) in axes.iter().enumerate() {
            if c[a] + 1 == len {
                z[a * n + idx] = 0.0;
            }
        }
        let mag = (0..d).map(|a| z[a * n + idx].powi(2)).sum::<f64>().sqrt();
        if mag > bound {
            let scale = if mag > 0.0 { bound / mag } else { 0.0 };
            for a in 0..d {
                z[a * n + idx] *= scale;
            }
        }
    });
}

/// Largest violation of the dual constraints: magnitude excess over `bound`
/// or a nonzero far-boundary normal component.
pub fn dual_violation(z: &[f64], shape: &GridShape, bound: f64) -> f64 {
    let n = shape.cells();
    let d = shape.ndim();
    let axes = shape.axes();
    let mut worst = 0.0f64;
    for_each_cell(shape, |idx, c| {
        for (a, &(len, _)) in axes.iter().enumerate() {
            if c[a] + 1 == len {
                worst = worst.max(z[a * n + idx].abs());
            }
        }
        let mag = (0..d).map(|a| z[a * n + idx].powi(2)).sum::<f64>().sqrt();
        worst = worst.max(mag - bound);
    });
    worst
}

#[derive(Debug, Clone, Copy)]
pub struct PredualConfig {
    /// Stop once the projected-gradient norm falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Initial step relative to `h²`; `1/8` is the inverse Lipschitz constant
    /// of `∇ div` on two-dimensional grids.
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
}

impl Default for PredualConfig {
    fn default() -> Self {
        PredualConfig {
            tol: 1e-8,
            max_iters: 500,
            initial_step: 0.125,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PredualReport {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub pg_norm: f64,
    pub objective: f64,
    /// `false` when the iteration budget ran out or Armijo stalled before
    /// reaching the tolerance.
    pub converged: bool,
}

/// Data shared by the predual objective and its gradient.
struct Predual<'a> {
    u: &'a [f64],
    /// `s ŵ`
    sw: Vec<f64>,
    shape: &'a GridShape,
    p_dual: f64,
    mu: f64,
}

impl Predual<'_> {
    /// Fills `g = div z - s ŵ` and returns `E(z)`.
    fn eval(&self, z: &[f64], g: &mut [f64]) -> f64 {
        div_into(z, self.shape, g);
        let mut e = 0.0;
        for ((gi, sw), u) in g.iter_mut().zip(&self.sw).zip(self.u) {
            *gi -= sw;
            e += apow(*gi, self.p_dual) / self.p_dual + u * *gi;
        }
        self.mu * e
    }

    /// `E(z + Δz) - E(z)` given `g` at `z` and `d = div Δz`; fills
    /// `g_new = g + d`. Summing the per-cell changes keeps the result
    /// accurate when it is far below the size of `E` itself.
    fn change(&self, g: &[f64], d: &[f64], g_new: &mut [f64]) -> f64 {
        let q = self.p_dual;
        let mut acc = 0.0;
        for (((gn, gi), di), u) in g_new.iter_mut().zip(g).zip(d).zip(self.u) {
            *gn = gi + di;
            acc += power_change(*gi, *di, q) / q + u * di;
        }
        self.mu * acc
    }

    /// `μ`-weighted gradient `-∇(j_{p'}(g) + u)` into `out`.
    fn gradient(&self, g: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        for ((s, gi), u) in scratch.iter_mut().zip(g).zip(self.u) {
            *s = spow(*gi, self.p_dual - 1.0) + u;
        }
        grad_into(scratch, self.shape, out);
        out.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Predual objective `E(z) = Σ μ (|div z - sŵ|^{p'}/p' + u · (div z - sŵ))`.
pub fn predual_objective(
    z: &[f64],
    u: &[f64],
    w: &[f64],
    s: f64,
    p_dual: f64,
    shape: &GridShape,
) -> f64 {
    let mu = shape.cell_measure();
    let pd = Predual {
        u,
        sw: w.iter().map(|x| s * x / mu).collect(),
        shape,
        p_dual,
        mu,
    };
    let mut g = vec![0.0; shape.cells()];
    pd.eval(z, &mut g)
}

/// Projected gradient with Armijo backtracking on the TV predual, started
/// from `z0` (or zero) after projecting it onto the feasible set.
#[allow(clippy::too_many_arguments)]
pub fn solve_predual(
    u: &[f64],
    w: &[f64],
    s: f64,
    alpha: f64,
    p_dual: f64,
    shape: &GridShape,
    cfg: &PredualConfig,
    z0: Option<&[f64]>,
) -> Result<PredualReport> {
    let n = shape.cells();
    let d = shape.ndim();
    check_len(n, u.len())?;
    check_len(n, w.len())?;
    if !(s >= 0.0 && alpha >= 0.0) {
        return domain(format!("step and weight must be >= 0, got s = {s}, alpha = {alpha}"));
    }
    if !(p_dual >= 2.0) {
        return domain(format!("predual exponent must be >= 2, got {p_dual}"));
    }
    let bound = s * alpha;
    let mut z = match z0 {
        Some(z0) => {
            check_len(d * n, z0.len())?;
            z0.to_vec()
        }
        None => vec![0.0; d * n],
    };
    project_dual(&mut z, shape, bound);

    let mu = shape.cell_measure();
    let pd = Predual {
        u,
        sw: w.iter().map(|x| s * x / mu).collect(),
        shape,
        p_dual,
        mu,
    };
    let h2 = shape.spacing * shape.spacing;
    let reference_step = cfg.initial_step * h2;
    let mut gamma = reference_step;
    let mut g = vec![0.0; n];
    let mut g_try = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut grad_e = vec![0.0; d * n];
    let mut z_try = vec![0.0; d * n];
    let mut dz = vec![0.0; d * n];
    let mut d_div = vec![0.0; n];
    let mut accepted_steps = 0usize;
    let mut energy = pd.eval(&z, &mut g);
    let mut pg_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        pd.gradient(&g, &mut scratch, &mut grad_e);
        pg_norm = projected_gradient_norm(&z, &grad_e, reference_step, shape, bound, &mut z_try);
        if pg_norm <= cfg.tol {
            converged = true;
            break;
        }
        let mut accepted = false;
        let mut first_try = true;
        for _ in 0..60 {
            for ((t, zi), gi) in z_try.iter_mut().zip(&z).zip(&grad_e) {
                *t = zi - gamma * gi;
            }
            project_dual(&mut z_try, shape, bound);
            for ((dzi, t), zi) in dz.iter_mut().zip(&z_try).zip(&z) {
                *dzi = t - zi;
            }
            let moved: f64 = mu * dz.iter().map(|x| x * x).sum::<f64>();
            div_into(&dz, shape, &mut d_div);
            let delta = pd.change(&g, &d_div, &mut g_try);
            if delta <= -cfg.sufficient_decrease / gamma * moved {
                accepted = moved > 0.0 && delta < 0.0;
                if accepted {
                    std::mem::swap(&mut z, &mut z_try);
                    std::mem::swap(&mut g, &mut g_try);
                    energy += delta;
                    accepted_steps += 1;
                    if accepted_steps.is_multiple_of(64) {
                        energy = pd.eval(&z, &mut g);
                    }
                }
                break;
            }
            gamma *= cfg.shrink;
            first_try = false;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        if first_try {
            gamma /= cfg.shrink;
        }
    }
    if !converged && iterations >= cfg.max_iters {
        pd.gradient(&g, &mut scratch, &mut grad_e);
        pg_norm = projected_gradient_norm(&z, &grad_e, reference_step, shape, bound, &mut z_try);
        converged = pg_norm <= cfg.tol;
    }
    Ok(PredualReport {
        z,
        iterations,
        pg_norm,
        objective: energy,
        converged,
    })
}

/// `|a + d|^q - |a|^q`, accurate also when `|d| << |a|`.
fn power_change(a: f64, d: f64, q: f64) -> f64 {
    let b = a + d;
    if q == 2.0 {
        return d * (a + b);
    }
    if a == 0.0 || a.signum() != b.signum() {
        return apow(b, q) - apow(a, q);
    }
    let rel = d * a.signum() / a.abs();
    apow(a, q) * (q * rel.ln_1p()).exp_m1()
}

/// `‖z - P(z - γ G)‖_μ / γ`
fn projected_gradient_norm(
    z: &[f64],
    grad_e: &[f64],
    gamma: f64,
    shape: &GridShape,
    bound: f64,
    scratch: &mut [f64],
) -> f64 {
    for ((t, zi), gi) in scratch.iter_mut().zip(z).zip(grad_e) {
        *t = zi - gamma * gi;
    }
    project_dual(scratch, shape, bound);
    let sq: f64 = scratch.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum();
    (shape.cell_measure() * sq).sqrt() / gamma
}

/// `v = u + j_{p'}(div z - s ŵ)`
pub fn recover_primal(
    u: &[f64],
    w: &[f64],
    s: f64,
    z: &[f64],
    p_dual: f64,
    shape: &GridShape,
) -> Vec<f64> {
    let mu = shape.cell_measure();
    let dz = div(z, shape);
    dz.iter()
        .zip(w)
        .zip(u)
        .map(|((dzi, wi), ui)| ui + spow(dzi - s * wi / mu, p_dual - 1.0))
        .collect()
}

/// `‖v - u‖_p^p / p + τ(⟨w, v⟩ + α TV(v))` with the `μ`-weighted norm.
#[allow(clippy::too_many_arguments)]
pub fn tv_aux_objective(
    v: &[f64],
    u: &[f64],
    w: &[f64],
    tau: f64,
    alpha: f64,
    p: f64,
    shape: &GridShape,
) -> f64 {
    let mu = shape.cell_measure();
    let prox: f64 = v.iter().zip(u).map(|(a, b)| apow(a - b, p)).sum::<f64>() * mu / p;
    let lin: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
    prox + tau * (lin + alpha * tv_seminorm(v, shape))
}

#[derive(Debug, Clone)]
pub struct TvStepReport {
    pub v: Vec<f64>,
    pub predual: PredualReport,
    /// Aux objective at `v` and at the input `u`.
    pub aux_objective: f64,
    pub aux_at_input: f64,
    /// Largest dual-constraint violation of the returned `z`.
    pub dual_violation: f64,
    /// The inexact solve did not improve on `u` and `u` was returned.
    pub fell_back: bool,
}

/// The TV resolvent `argmin_v ‖v-u‖_p^p/p + τ(⟨w,v⟩ + α TV(v))`.
///
/// If the inexact predual solve yields a primal point whose aux objective
/// exceeds the value at `u`, one tighter solve is tried before returning
/// the better of the two candidates.
#[allow(clippy::too_many_arguments)]
pub fn tv_backward_step(
    u: &[f64],
    w: &[f64],
    tau: f64,
    alpha: f64,
    p: f64,
    shape: &GridShape,
    cfg: &PredualConfig,
    warm: Option<&[f64]>,
) -> Result<TvStepReport> {
    if !(p > 1.0 && p <= 2.0) {
        return domain(format!("TV backward step needs p in (1, 2], got {p}"));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return domain(format!("tau must be >= 0, got {tau}"));
    }
    let p_dual = dual_exponent(p);
    let aux_at_input = tv_aux_objective(u, u, w, tau, alpha, p, shape);
    let mut predual = solve_predual(u, w, tau, alpha, p_dual, shape, cfg, warm)?;
    let mut v = recover_primal(u, w, tau, &predual.z, p_dual, shape);
    let mut aux = tv_aux_objective(&v, u, w, tau, alpha, p, shape);
    let slack = 1e-14 * (1.0 + aux_at_input.abs());
    if aux > aux_at_input + slack {
        let tighter = PredualConfig {
            tol: cfg.tol * 1e-2,
            max_iters: cfg.max_iters * 4,
            ..*cfg
        };
        let retry = solve_predual(u, w, tau, alpha, p_dual, shape, &tighter, Some(&predual.z))?;
        let v2 = recover_primal(u, w, tau, &retry.z, p_dual, shape);
        let aux2 = tv_aux_objective(&v2, u, w, tau, alpha, p, shape);
        if aux2 < aux {
            predual = retry;
            v = v2;
            aux = aux2;
        }
    }
    let fell_back = aux > aux_at_input + slack;
    if fell_back {
        v = u.to_vec();
        aux = aux_at_input;
    }
    let dual_violation = dual_violation(&predual.z, shape, tau * alpha);
    Ok(TvStepReport {
        v,
        predual,
        aux_objective: aux,
        aux_at_input,
        dual_violation,
        fell_back,
    })
}
