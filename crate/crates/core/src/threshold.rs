//! Thresholding-like scalar resolvents and the backward step for weighted
//! power penalties `Φ(v) = Σ_k h_k α_k |v_k|^s / s`.
//!
//! The scalar building block is the minimizer of
//! `Ψ_{y,σ,t}(x) = |x-y|^r/r + σx + t|x|^s/s`, written as
//! `S_{y,t}(-σ) = (∂Ψ_{y,t})^{-1}(-σ)`. For `s = 1` it is a closed-form
//! thresholding function with dead zone `|x + sign(y)|y|^{r-1}| <= t`; for
//! `s > 1` it is the root of a strictly increasing scalar equation.
//!
//! The backward step
//! `min_v ‖v-u‖_r^p/p + τ(⟨w,v⟩ + Φ(v))`
//! decouples into scalar problems once the factor `z = ‖v-u‖_r^{r-p}` is
//! known; `z` is then found from a one-dimensional fixed-point equation.

use crate::banach::{apow, dot, spow, weighted_norm, Exponents, DualVector, Signal};
use crate::error::{check_len, domain, Error, Result};

/// Parameters of one scalar resolvent `S_{y,t}` for the pair `(r, s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProxParams {
    pub y: f64,
    pub t: f64,
    pub r: f64,
    pub s: f64,
}

impl ScalarProxParams {
    pub fn new(y: f64, t: f64, r: f64, s: f64) -> Result<Self> {
        if !y.is_finite() {
            return domain(format!("y must be finite, got {y}"));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return domain(format!("t must be finite and >= 0, got {t}"));
        }
        if !(r > 1.0) || !r.is_finite() {
            return domain(format!("r must be > 1, got {r}"));
        }
        if !(s >= 1.0 && s <= r) {
            return domain(format!("s must lie in [1, r], got {s}"));
        }
        Ok(ScalarProxParams { y, t, r, s })
    }
}

/// `Ψ_{y,σ,t}(x) = |x-y|^r/r + σx + t|x|^s/s`.
pub fn psi_value(x: f64, params: &ScalarProxParams, sigma: f64) -> f64 {
    let ScalarProxParams { y, t, r, s } = *params;
    apow(x - y, r) / r + sigma * x + t * apow(x, s) / s
}

const ROOT_TOL: f64 = 1e-13;
const ROOT_MAX_ITERS: usize = 400;

/// `S_{y,t}(x)`: the minimizer of `Ψ_{y,σ,t}` with `σ = -x`.
pub fn threshold_scalar(x: f64, params: &ScalarProxParams) -> Result<f64> {
    if !x.is_finite() {
        return domain(format!("threshold argument must be finite, got {x}"));
    }
    scalar_resolvent(x, params)
}

fn scalar_resolvent(x: f64, params: &ScalarProxParams) -> Result<f64> {
    let ScalarProxParams { y, t, r, s } = *params;
    let inv = 1.0 / (r - 1.0);
    if t == 0.0 {
        return Ok(y + spow(x, inv));
    }
    if s == 1.0 {
        let center = -spow(y, r - 1.0);
        // The branches have fixed sign; clamping removes rounding noise at
        // the edges of the dead zone.
        return Ok(if x > center + t {
            (y + spow(x - t, inv)).max(0.0)
        } else if x < center - t {
            (y + spow(x + t, inv)).min(0.0)
        } else {
            0.0
        });
    }
    solve_monotone(x, y, t, r, s)
}

/// Root of `sign(v-y)|v-y|^{r-1} + t sign(v)|v|^{s-1} = x`.
fn solve_monotone(x: f64, y: f64, t: f64, r: f64, s: f64) -> Result<f64> {
    let g = |v: f64| spow(v - y, r - 1.0) + t * spow(v, s - 1.0) - x;
    let dg = |v: f64| {
        (r - 1.0) * (v - y).abs().powf(r - 2.0) + t * (s - 1.0) * v.abs().powf(s - 2.0)
    };

    // Each summand is increasing and hits `x` at one of these points, so the
    // root lies between their extremes (also including 0 and y).
    let va = y + spow(x, 1.0 / (r - 1.0));
    let vb = spow(x / t, 1.0 / (s - 1.0));
    let mut lo = va.min(vb).min(0.0).min(y);
    let mut hi = va.max(vb).max(0.0).max(y);
    let glo = g(lo);
    let ghi = g(hi);
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    if !(glo < 0.0 && ghi > 0.0) {
        return Err(Error::RootBracket(format!(
            "no sign change on [{lo}, {hi}] for x={x}, y={y}, t={t}, r={r}, s={s}"
        )));
    }

    let mut v = 0.5 * (lo + hi);
    for _ in 0..ROOT_MAX_ITERS {
        let gv = g(v);
        if gv == 0.0 {
            return Ok(v);
        }
        if gv < 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        let tol = ROOT_TOL * v.abs().max(1.0);
        if hi - lo <= tol {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        let mut next = mid;
        if hi - lo < 1.0 {
            let d = dg(v);
            if d.is_finite() && d > 0.0 {
                let newton = v - gv / d;
                if newton > lo && newton < hi {
                    next = newton;
                }
            }
        }
        if (next - v).abs() <= tol && next != mid {
            return Ok(next);
        }
        if next == lo || next == hi {
            // bracket at floating-point resolution
            return Ok(v);
        }
        v = next;
    }
    Err(Error::RootBracket(format!(
        "root finder did not converge for x={x}, y={y}, t={t}, r={r}, s={s}"
    )))
}

/// Result of [`solve_aux_sparse`].
#[derive(Debug, Clone)]
pub struct AuxSolveReport {
    pub v: Signal,
    /// Coupling factor `‖v-u‖_r^{r-p}`; exactly 1 when `r = p`, 0 when `v = u`.
    pub z: f64,
    pub z_iterations: usize,
    /// Relative residual `|‖v-u‖^{r-p} - z| / z` of the coupling equation.
    pub residual: f64,
}

/// Settings for the `z` coupling solve.
#[derive(Debug, Clone, Copy)]
pub struct AuxSolverConfig {
    pub tol: f64,
    pub max_outer: usize,
    pub damping: f64,
    /// Fixed-point iterations tried before switching to bracketed root finding.
    pub fixed_point_iters: usize,
    /// Starting value for `z` (e.g. the previous outer step's value).
    pub z_init: Option<f64>,
}

impl Default for AuxSolverConfig {
    fn default() -> Self {
        AuxSolverConfig {
            tol: 1e-11,
            max_outer: 200,
            damping: 0.5,
            fixed_point_iters: 30,
            z_init: None,
        }
    }
}

/// `Σ_k h_k α_k |v_k|^s / s`.
pub fn power_penalty(v: &Signal, alpha: &[f64], s: f64) -> f64 {
    v.values()
        .iter()
        .zip(v.weights())
        .zip(alpha)
        .map(|((x, h), a)| h * a * apow(*x, s))
        .sum::<f64>()
        / s
}

/// Objective of the backward step: `‖v-u‖_r^p/p + τ(⟨w,v⟩ + Φ(v))`.
pub fn aux_objective(
    v: &Signal,
    u: &Signal,
    w: &DualVector,
    tau: f64,
    alpha: &[f64],
    exps: &Exponents,
) -> f64 {
    let d: Vec<f64> = v.values().iter().zip(u.values()).map(|(a, b)| a - b).collect();
    let nd = weighted_norm(&d, u.weights(), u.exponent());
    nd.powf(exps.p) / exps.p + tau * (dot(w.values(), v.values()) + power_penalty(v, alpha, exps.s))
}

struct Decoupled<'a> {
    u: &'a Signal,
    w: &'a DualVector,
    tau: f64,
    alpha: &'a [f64],
    r: f64,
    s: f64,
}

impl Decoupled<'_> {
    /// `V(z)_k = S_{u_k, zτα_k}(-zτ w_k / h_k)`.
    fn resolve(&self, z: f64, out: &mut [f64]) -> Result<()> {
        let u = self.u.values();
        let h = self.u.weights();
        let w = self.w.values();
        for k in 0..u.len() {
            let params = ScalarProxParams {
                y: u[k],
                t: z * self.tau * self.alpha[k],
                r: self.r,
                s: self.s,
            };
            out[k] = scalar_resolvent(-z * self.tau * w[k] / h[k], &params)?;
        }
        Ok(())
    }

    fn distance(&self, v: &[f64], scratch: &mut [f64]) -> f64 {
        for ((d, a), b) in scratch.iter_mut().zip(v).zip(self.u.values()) {
            *d = a - b;
        }
        weighted_norm(scratch, self.u.weights(), self.r)
    }
}

/// Coupling map `m(z) = ‖V(z) - u‖_r^{r-p}`.
struct CouplingMap<'a, 'b> {
    problem: &'a Decoupled<'b>,
    gamma: f64,
    scratch: Vec<f64>,
    iterations: usize,
}

impl CouplingMap<'_, '_> {
    fn eval(&mut self, z: f64, v: &mut [f64]) -> Result<f64> {
        self.iterations += 1;
        self.problem.resolve(z, v)?;
        Ok(self.problem.distance(v, &mut self.scratch).powf(self.gamma))
    }
}

fn relative_gap(z: f64, m: f64) -> f64 {
    (m - z).abs() / z
}

/// Sign bracket for `m(z) - z`: positive below the root, negative above.
struct Bracket {
    lo: Option<(f64, f64)>,
    hi: Option<(f64, f64)>,
    best: (f64, f64),
}

impl Default for Bracket {
    fn default() -> Self {
        Bracket {
            lo: None,
            hi: None,
            best: (f64::INFINITY, 1.0),
        }
    }
}

impl Bracket {
    fn record(&mut self, z: f64, m: f64) -> f64 {
        let res = relative_gap(z, m);
        if res < self.best.0 {
            self.best = (res, z);
        }
        let g = (m / z).ln();
        if g > 0.0 {
            if self.lo.is_none_or(|(zl, _)| z > zl) {
                self.lo = Some((z, g));
            }
        } else if g < 0.0 && self.hi.is_none_or(|(zh, _)| z < zh) {
            self.hi = Some((z, g));
        }
        res
    }
}

/// Solves `min_v ‖v-u‖_r^p/p + τ(⟨w,v⟩ + Σ_k h_k α_k|v_k|^s/s)` where `r` is
/// the exponent of `u`'s space.
///
/// The problem is strictly convex, so its minimizer is unique and is also
/// the minimal-distance solution; no selection among solutions is needed.
pub fn solve_aux_sparse(
    u: &Signal,
    w: &DualVector,
    tau: f64,
    alpha: &[f64],
    exps: &Exponents,
    cfg: &AuxSolverConfig,
) -> Result<AuxSolveReport> {
    check_len(u.len(), w.len())?;
    check_len(u.len(), alpha.len())?;
    if !(tau > 0.0) || !tau.is_finite() {
        return domain(format!("tau must be > 0, got {tau}"));
    }
    if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return domain(format!("penalty weights must be finite and >= 0, found {a}"));
    }
    let r = u.exponent();
    if (r - exps.r).abs() > 1e-12 {
        return domain(format!(
            "iterate lives in l^{r} but the exponents prescribe r = {}",
            exps.r
        ));
    }
    let problem = Decoupled {
        u,
        w,
        tau,
        alpha,
        r,
        s: exps.s,
    };
    let n = u.len();
    let mut v = vec![0.0; n];

    if (r - exps.p).abs() < 1e-15 {
        problem.resolve(1.0, &mut v)?;
        return Ok(AuxSolveReport {
            v: u.with_values_unchecked(v),
            z: 1.0,
            z_iterations: 0,
            residual: 0.0,
        });
    }

    let mut coupling = CouplingMap {
        problem: &problem,
        gamma: r - exps.p,
        scratch: vec![0.0; n],
        iterations: 0,
    };

    // V(z) = u for one z > 0 iff for all z > 0: the step is trivial.
    let m1 = coupling.eval(1.0, &mut v)?;
    if m1 == 0.0 {
        return Ok(AuxSolveReport {
            v: u.clone(),
            z: 0.0,
            z_iterations: coupling.iterations,
            residual: 0.0,
        });
    }

    let mut track = Bracket::default();
    let mut z = cfg.z_init.filter(|z| *z > 0.0 && z.is_finite()).unwrap_or(1.0);
    let mut m = if z == 1.0 { m1 } else { coupling.eval(z, &mut v)? };
    let mut res = track.record(z, m);
    if z != 1.0 {
        track.record(1.0, m1);
    }

    // Damped fixed-point phase.
    let mut fp = 0;
    while res > cfg.tol && fp < cfg.fixed_point_iters && coupling.iterations < cfg.max_outer {
        let prev = res;
        z = (1.0 - cfg.damping) * z + cfg.damping * m;
        m = coupling.eval(z, &mut v)?;
        res = track.record(z, m);
        fp += 1;
        if res > 0.9 * prev && track.lo.is_some() && track.hi.is_some() {
            break;
        }
    }

    if res > cfg.tol {
        // Complete the bracket in log z.
        while track.lo.is_none() && coupling.iterations < cfg.max_outer {
            let zt = track.hi.map_or(z, |(zh, _)| zh) * 0.25;
            let mt = coupling.eval(zt, &mut v)?;
            track.record(zt, mt);
        }
        while track.hi.is_none() && coupling.iterations < cfg.max_outer {
            let zt = track.lo.map_or(z, |(zl, _)| zl) * 4.0;
            let mt = coupling.eval(zt, &mut v)?;
            track.record(zt, mt);
        }
        // Illinois regula falsi on ln(m(z)/z) as a function of ln z.
        if let (Some((zl, gl)), Some((zh, gh))) = (track.lo, track.hi) {
            let (mut a, mut fa) = (zl.ln(), gl);
            let (mut b, mut fb) = (zh.ln(), gh);
            let mut side = 0i8;
            while coupling.iterations < cfg.max_outer {
                let c = (a * fb - b * fa) / (fb - fa);
                let c = if c.is_finite() && c > a.min(b) && c < a.max(b) {
                    c
                } else {
                    0.5 * (a + b)
                };
                z = c.exp();
                m = coupling.eval(z, &mut v)?;
                res = track.record(z, m);
                if res <= cfg.tol || (b - a).abs() < 1e-15 {
                    break;
                }
                let fc = (m / z).ln();
                if fc > 0.0 {
                    a = c;
                    fa = fc;
                    if side == 1 {
                        fb *= 0.5;
                    }
                    side = 1;
                } else {
                    b = c;
                    fb = fc;
                    if side == -1 {
                        fa *= 0.5;
                    }
                    side = -1;
                }
            }
        }
    }

    if res > cfg.tol {
        // Re-evaluate at the best z seen; accept only if it meets tolerance.
        let (best_res, best_z) = track.best;
        if best_res <= cfg.tol {
            z = best_z;
            m = coupling.eval(z, &mut v)?;
            res = relative_gap(z, m);
        }
        if res > cfg.tol {
            return Err(Error::CouplingNonConvergence {
                iterations: coupling.iterations,
                residual: best_res,
            });
        }
    }
    let iterations = coupling.iterations;

    Ok(AuxSolveReport {
        v: u.with_values_unchecked(v),
        z,
        z_iterations: iterations,
        residual: res,
    })
}
