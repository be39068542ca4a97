//! Matrix-free linear forward operators with exact adjoints and operator
//! norm bounds.
//!
//! Adjoints are taken with respect to the plain dot-product pairing used for
//! dual vectors (see [`crate::banach`]), so every adjoint here is the exact
//! transpose of the forward map.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, domain, Error, Result};

/// Absolute row/column sum statistics of an operator's matrix, or upper
/// bounds on them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryBounds {
    pub max_col_sum: f64,
    pub max_row_sum: f64,
    pub max_abs_entry: f64,
    pub total_abs_sum: f64,
}

impl EntryBounds {
    fn scaled(self, factor: f64) -> Self {
        let f = factor.abs();
        EntryBounds {
            max_col_sum: f * self.max_col_sum,
            max_row_sum: f * self.max_row_sum,
            max_abs_entry: f * self.max_abs_entry,
            total_abs_sum: f * self.total_abs_sum,
        }
    }
}

pub trait LinearOperator: fmt::Debug + Send + Sync {
    fn domain_len(&self) -> usize;
    fn range_len(&self) -> usize;

    /// `out = K u`
    fn apply_into(&self, u: &[f64], out: &mut [f64]);

    /// `out = K* v`
    fn adjoint_into(&self, v: &[f64], out: &mut [f64]);

    /// Bounds on the absolute entries of the operator's matrix.
    fn entry_bounds(&self) -> EntryBounds;

    /// Measure of one domain cell.
    fn domain_weight(&self) -> f64 {
        1.0
    }

    /// Measure of one range cell.
    fn range_weight(&self) -> f64 {
        1.0
    }

    /// Bound on `‖K‖` from `ℓ^e` to `ℓ^e` valid for every `e >= 1`.
    fn norm_bound(&self) -> f64 {
        let b = self.entry_bounds();
        (self.range_weight() / self.domain_weight() * b.max_col_sum).max(b.max_row_sum)
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.range_len()];
        self.apply_into(u, &mut out);
        out
    }

    fn adjoint(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.domain_len()];
        self.adjoint_into(v, &mut out);
        out
    }
}

/// Discretized `Ku(t) = ∫_0^t u(s) ds` on `[0, 1]` with `N` cells:
/// `(Ku)_i = h Σ_{j<=i} u_j`, `h = 1/N`.
#[derive(Debug, Clone)]
pub struct IntegrationOperator {
    n: usize,
    h: f64,
}

pub fn integration_operator(n: usize) -> Result<IntegrationOperator> {
    if n == 0 {
        return domain("integration operator needs N >= 1");
    }
    Ok(IntegrationOperator {
        n,
        h: 1.0 / n as f64,
    })
}

impl IntegrationOperator {
    pub fn cell_width(&self) -> f64 {
        self.h
    }
}

impl LinearOperator for IntegrationOperator {
    fn domain_len(&self) -> usize {
        self.n
    }

    fn range_len(&self) -> usize {
        self.n
    }

    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let mut acc = 0.0;
        for (o, x) in out.iter_mut().zip(u) {
            acc += x;
            *o = self.h * acc;
        }
    }

    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        let mut acc = 0.0;
        for (o, x) in out.iter_mut().zip(v).rev() {
            acc += x;
            *o = self.h * acc;
        }
    }

    fn entry_bounds(&self) -> EntryBounds {
        let n = self.n as f64;
        EntryBounds {
            max_col_sum: self.h * n,
            max_row_sum: self.h * n,
            max_abs_entry: self.h,
            total_abs_sum: self.h * n * (n + 1.0) / 2.0,
        }
    }

    fn domain_weight(&self) -> f64 {
        self.h
    }

    fn range_weight(&self) -> f64 {
        self.h
    }
}

/// Identity on `n` cells of measure `weight`.
#[derive(Debug, Clone)]
pub struct IdentityOperator {
    n: usize,
    weight: f64,
}

impl IdentityOperator {
    pub fn new(n: usize, weight: f64) -> Self {
        IdentityOperator { n, weight }
    }
}

impl LinearOperator for IdentityOperator {
    fn domain_len(&self) -> usize {
        self.n
    }
    fn range_len(&self) -> usize {
        self.n
    }
    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(u);
    }
    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
    }
    fn entry_bounds(&self) -> EntryBounds {
        EntryBounds {
            max_col_sum: 1.0,
            max_row_sum: 1.0,
            max_abs_entry: 1.0,
            total_abs_sum: self.n as f64,
        }
    }
    fn domain_weight(&self) -> f64 {
        self.weight
    }
    fn range_weight(&self) -> f64 {
        self.weight
    }
}

/// Row-major dense matrix adapter, mainly for tests and small problems.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    domain_weight: f64,
    range_weight: f64,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len(rows * cols, data.len())?;
        if data.iter().any(|x| !x.is_finite()) {
            return domain("matrix entries must be finite");
        }
        Ok(DenseMatrix {
            rows,
            cols,
            data,
            domain_weight: 1.0,
            range_weight: 1.0,
        })
    }

    pub fn with_weights(mut self, domain_weight: f64, range_weight: f64) -> Self {
        self.domain_weight = domain_weight;
        self.range_weight = range_weight;
        self
    }
}

impl LinearOperator for DenseMatrix {
    fn domain_len(&self) -> usize {
        self.cols
    }
    fn range_len(&self) -> usize {
        self.rows
    }
    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks(self.cols)) {
            *o = row.iter().zip(u).map(|(a, x)| a * x).sum();
        }
    }
    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, vi) in self.data.chunks(self.cols).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
    }
    fn entry_bounds(&self) -> EntryBounds {
        let mut col = vec![0.0; self.cols];
        let mut max_row_sum = 0.0f64;
        let mut max_abs_entry = 0.0f64;
        let mut total = 0.0;
        for row in self.data.chunks(self.cols) {
            let mut rs = 0.0;
            for (c, a) in col.iter_mut().zip(row) {
                *c += a.abs();
                rs += a.abs();
                max_abs_entry = max_abs_entry.max(a.abs());
            }
            max_row_sum = max_row_sum.max(rs);
            total += rs;
        }
        EntryBounds {
            max_col_sum: col.into_iter().fold(0.0, f64::max),
            max_row_sum,
            max_abs_entry,
            total_abs_sum: total,
        }
    }
    fn domain_weight(&self) -> f64 {
        self.domain_weight
    }
    fn range_weight(&self) -> f64 {
        self.range_weight
    }
}

/// `factor · K`.
#[derive(Debug)]
pub struct ScaledOperator<O> {
    pub factor: f64,
    pub inner: O,
}

impl<O: LinearOperator> LinearOperator for ScaledOperator<O> {
    fn domain_len(&self) -> usize {
        self.inner.domain_len()
    }
    fn range_len(&self) -> usize {
        self.inner.range_len()
    }
    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        self.inner.apply_into(u, out);
        out.iter_mut().for_each(|x| *x *= self.factor);
    }
    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        self.inner.adjoint_into(v, out);
        out.iter_mut().for_each(|x| *x *= self.factor);
    }
    fn entry_bounds(&self) -> EntryBounds {
        self.inner.entry_bounds().scaled(self.factor)
    }
    fn domain_weight(&self) -> f64 {
        self.inner.domain_weight()
    }
    fn range_weight(&self) -> f64 {
        self.inner.range_weight()
    }
}

/// A non-negative point-spread function on a `d`-dimensional stencil.
///
/// `taps` are stored row-major (last axis fastest). The kernel is centred at
/// index `n_i / 2` along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel3D {
    taps: Vec<f64>,
    dims: Vec<usize>,
    normalization: f64,
}

impl Kernel3D {
    pub fn new(taps: Vec<f64>, dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
            return domain(format!("kernel dims must be 1 to 3 positive sizes, got {dims:?}"));
        }
        check_len(dims.iter().product(), taps.len())?;
        if taps.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return domain("kernel taps must be finite and non-negative");
        }
        let sum: f64 = taps.iter().sum();
        if !(sum > 0.0) {
            return domain("kernel taps must not all vanish");
        }
        Ok(Kernel3D {
            taps,
            dims,
            normalization: 1.0 / sum,
        })
    }

    /// Single unit tap.
    pub fn identity(d: usize) -> Result<Self> {
        Self::new(vec![1.0], vec![1; d])
    }

    /// Constant taps on a box of the given size.
    pub fn uniform(dims: Vec<usize>) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(vec![1.0; n], dims)
    }

    /// Sampled isotropic Gaussian with `size` taps per axis.
    pub fn gaussian(d: usize, size: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return domain(format!("gaussian sigma must be > 0, got {sigma}"));
        }
        let dims = vec![size; d];
        let c = (size / 2) as f64;
        let n: usize = dims.iter().product();
        let mut taps = Vec::with_capacity(n);
        for flat in 0..n {
            let mut rem = flat;
            let mut r2 = 0.0;
            for _ in 0..d {
                let i = (rem % size) as f64;
                rem /= size;
                r2 += (i - c) * (i - c);
            }
            taps.push((-r2 / (2.0 * sigma * sigma)).exp());
        }
        Self::new(taps, dims)
    }

    /// Parses `d n1 … nd` followed by whitespace-separated taps in row-major
    /// order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty kernel file".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Parse(format!("bad kernel header token '{t}'")))
            })
            .collect::<Result<_>>()?;
        let (&d, sizes) = head
            .split_first()
            .ok_or_else(|| Error::Parse("kernel header is empty".into()))?;
        if sizes.len() != d {
            return Err(Error::Parse(format!(
                "kernel header declares d = {d} but lists {} sizes",
                sizes.len()
            )));
        }
        let taps: Vec<f64> = lines
            .flat_map(str::split_whitespace)
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Parse(format!("bad kernel tap '{t}'")))
            })
            .collect::<Result<_>>()?;
        Self::new(taps, sizes.to_vec())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}", self.dims.len());
        for n in &self.dims {
            s.push_str(&format!(" {n}"));
        }
        s.push('\n');
        let last = *self.dims.last().unwrap_or(&1);
        for row in self.taps.chunks(last) {
            let line: Vec<String> = row.iter().map(|t| format!("{t}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn normalized_taps(&self) -> Vec<f64> {
        self.taps.iter().map(|t| t * self.normalization).collect()
    }
}

/// Pads a shape of length `d <= 3` to three axes with leading ones.
pub(crate) fn pad3(dims: &[usize]) -> [usize; 3] {
    let mut out = [1; 3];
    let off = 3 - dims.len();
    out[off..].copy_from_slice(dims);
    out
}

/// Zero-padded convolution `Ku = u * k` on a regular grid.
#[derive(Debug, Clone)]
pub struct ConvolutionOperator {
    grid: [usize; 3],
    kdims: [usize; 3],
    taps: Vec<f64>,
    cells: usize,
    cell_measure: f64,
    max_tap: f64,
}

pub fn convolution_operator(kernel: &Kernel3D, dims: &[usize]) -> Result<ConvolutionOperator> {
    if dims.len() != kernel.dims().len() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dims().len(),
            got: dims.len(),
        });
    }
    if dims.contains(&0) {
        return domain(format!("grid dims must be positive, got {dims:?}"));
    }
    if let Some((g, k)) = dims.iter().zip(kernel.dims()).find(|(g, k)| k > g) {
        return domain(format!("kernel extent {k} exceeds grid extent {g}"));
    }
    let taps = kernel.normalized_taps();
    let max_tap = taps.iter().cloned().fold(0.0, f64::max);
    Ok(ConvolutionOperator {
        grid: pad3(dims),
        kdims: pad3(kernel.dims()),
        taps,
        cells: dims.iter().product(),
        cell_measure: 1.0,
        max_tap,
    })
}

impl ConvolutionOperator {
    pub fn with_cell_measure(mut self, measure: f64) -> Self {
        self.cell_measure = measure;
        self
    }

    /// Accumulates `out[x] += k[o] · src[x + sign·(o - c)]` over all taps.
    fn stencil(&self, src: &[f64], out: &mut [f64], sign: isize) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let [n0, n1, n2] = self.grid.map(|n| n as isize);
        let [k0, k1, k2] = self.kdims;
        let c = self.kdims.map(|k| (k / 2) as isize);
        let range = |n: isize, s: isize| (0.max(-s), n.min(n - s));
        let mut tap = 0;
        for o0 in 0..k0 {
            for o1 in 0..k1 {
                for o2 in 0..k2 {
                    let k = self.taps[tap];
                    tap += 1;
                    if k == 0.0 {
                        continue;
                    }
                    let s0 = sign * (o0 as isize - c[0]);
                    let s1 = sign * (o1 as isize - c[1]);
                    let s2 = sign * (o2 as isize - c[2]);
                    let (a0, b0) = range(n0, s0);
                    let (a1, b1) = range(n1, s1);
                    let (a2, b2) = range(n2, s2);
                    for x0 in a0..b0 {
                        for x1 in a1..b1 {
                            let start = ((x0 * n1 + x1) * n2 + a2) as usize;
                            let from = (((x0 + s0) * n1 + x1 + s1) * n2 + s2 + a2) as usize;
                            let len = (b2 - a2).max(0) as usize;
                            let dst = &mut out[start..start + len];
                            let from = &src[from..from + len];
                            for (d, s) in dst.iter_mut().zip(from) {
                                *d += k * s;
                            }
                        }
                    }
                }
            }
        }
    }
}

impl LinearOperator for ConvolutionOperator {
    fn domain_len(&self) -> usize {
        self.cells
    }
    fn range_len(&self) -> usize {
        self.cells
    }
    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        // (Ku)[x] = Σ_o k[o] u[x - (o - c)]
        self.stencil(u, out, -1);
    }
    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        // (K*v)[y] = Σ_o k[o] v[y + (o - c)]
        self.stencil(v, out, 1);
    }
    fn entry_bounds(&self) -> EntryBounds {
        // With ‖k‖₁ = 1 and zero padding every row and column sums to at most 1.
        EntryBounds {
            max_col_sum: 1.0,
            max_row_sum: 1.0,
            max_abs_entry: self.max_tap,
            total_abs_sum: self.cells as f64,
        }
    }
    fn domain_weight(&self) -> f64 {
        self.cell_measure
    }
    fn range_weight(&self) -> f64 {
        self.cell_measure
    }
}

/// Outcome of [`adjoint_test`].
#[derive(Debug, Clone, Copy)]
pub struct AdjointReport {
    pub trials: usize,
    pub max_relative_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Checks `⟨Ku, v⟩ = ⟨u, K*v⟩` on random pairs; the error of each trial is
/// `|⟨Ku,v⟩ - ⟨u,K*v⟩| / (‖Ku‖₂‖v‖₂ + ε)`.
pub fn adjoint_test(
    op: &dyn LinearOperator,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<AdjointReport> {
    if trials == 0 {
        return domain("adjoint test needs at least one trial");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let u: Vec<f64> = (0..op.domain_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..op.range_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ku = op.apply(&u);
        let ktv = op.adjoint(&v);
        let lhs: f64 = ku.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&ktv).map(|(a, b)| a * b).sum();
        let scale = l2(&ku) * l2(&v) + f64::EPSILON;
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    Ok(AdjointReport {
        trials,
        max_relative_error: worst,
        tol,
        passed: worst <= tol,
    })
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Upper bound on `‖K‖` from `ℓ^{from}(μ)` to `ℓ^{to}(ν)` with the
/// operator's cell measures `μ`, `ν`.
///
/// The norms at the four corners `1→1`, `∞→∞`, `1→∞`, `∞→1` follow from the
/// entry bounds; log-convexity of the norm in `(1/from, 1/to)` (Riesz–Thorin)
/// interpolates them. Both triangulations of the unit square are tried and
/// the smaller bound is returned.
pub fn norm_bound_estimate(op: &dyn LinearOperator, from_exponent: f64, to_exponent: f64) -> Result<f64> {
    if !(from_exponent >= 1.0 && to_exponent >= 1.0) {
        return domain(format!(
            "exponents must be >= 1, got {from_exponent} -> {to_exponent}"
        ));
    }
    let b = op.entry_bounds();
    let mu = op.domain_weight();
    let nu = op.range_weight();
    let n11 = nu / mu * b.max_col_sum;
    let n00 = b.max_row_sum;
    let n10 = b.max_abs_entry / mu;
    let n01 = nu * b.total_abs_sum;
    let a = 1.0 / from_exponent;
    let c = 1.0 / to_exponent;
    let interp = |parts: &[(f64, f64)]| -> f64 {
        parts
            .iter()
            .map(|&(norm, lambda)| if lambda == 0.0 { 1.0 } else { norm.powf(lambda) })
            .product()
    };
    let diagonal = if a >= c {
        interp(&[(n00, 1.0 - a), (n11, c), (n10, a - c)])
    } else {
        interp(&[(n00, 1.0 - c), (n11, a), (n01, c - a)])
    };
    let anti = if a + c <= 1.0 {
        interp(&[(n00, 1.0 - a - c), (n10, a), (n01, c)])
    } else {
        interp(&[(n11, a + c - 1.0), (n10, 1.0 - c), (n01, 1.0 - a)])
    };
    Ok(diagonal.min(anti))
}
