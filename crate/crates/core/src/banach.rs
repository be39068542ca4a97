//! Weighted sequence spaces: norms, signed powers, duality maps and the
//! Hölder constants of duality maps on bounded sets.
//!
//! A [`Signal`] lives in a weighted space `ℓ^e(w)` with norm
//! `(Σ_k w_k |u_k|^e)^{1/e}`. Weights are cell measures: 1 for plain sequence
//! spaces, the cell volume for grid discretizations of `L^e`.
//!
//! Dual elements ([`DualVector`]) carry the measure folded into their values,
//! so the duality pairing is a plain dot product `⟨w, v⟩ = Σ_k w_k v_k`. The
//! dual norm of `w` is therefore `(Σ_k w_k^{1-e'} |w_k|^{e'})^{1/e'}`.

use crate::error::{check_len, domain, Result};

/// Dual exponent `e'` with `1/e + 1/e' = 1`.
pub fn dual_exponent(e: f64) -> f64 {
    e / (e - 1.0)
}

/// `|x|^a` for `x >= 0`, with sqrt/multiply shortcuts for the exponents
/// the solvers use most.
#[inline]
pub(crate) fn mag_pow(x: f64, a: f64) -> f64 {
    if a == 1.0 {
        x
    } else if a == 2.0 {
        x * x
    } else if a == 0.5 {
        x.sqrt()
    } else if a == 1.5 {
        x * x.sqrt()
    } else if a == 3.0 {
        x * x * x
    } else if a == 0.0 {
        1.0
    } else {
        x.powf(a)
    }
}

/// `sign(x)|x|^a` without argument checks; callers guarantee `a >= 0`.
#[inline]
pub(crate) fn spow(x: f64, a: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * mag_pow(x.abs(), a)
    }
}

/// `|x|^a` for `a >= 1`.
#[inline]
pub(crate) fn apow(x: f64, a: f64) -> f64 {
    mag_pow(x.abs(), a)
}

/// `sign(x)·|x|^a`.
pub fn signed_power(x: f64, a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return domain(format!("signed_power exponent must be >= 0, got {a}"));
    }
    if !x.is_finite() {
        return domain(format!("signed_power argument must be finite, got {x}"));
    }
    Ok(spow(x, a))
}

/// `(Σ_k w_k |x_k|^e)^{1/e}`, accumulated sequentially in index order.
pub fn weighted_norm(values: &[f64], weights: &[f64], e: f64) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    if e == 2.0 {
        let s: f64 = values.iter().zip(weights).map(|(x, w)| w * x * x).sum();
        return s.sqrt();
    }
    if e == 1.0 {
        return values.iter().zip(weights).map(|(x, w)| w * x.abs()).sum();
    }
    // Scale by the largest magnitude so that large exponents cannot overflow.
    let scale = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = values
        .iter()
        .zip(weights)
        .map(|(x, w)| w * mag_pow(x.abs() / scale, e))
        .sum();
    scale * s.powf(1.0 / e)
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return domain(format!("weights must be finite and > 0, found {w}"));
    }
    Ok(())
}

fn validate_values(values: &[f64]) -> Result<()> {
    if let Some(x) = values.iter().find(|x| !x.is_finite()) {
        return domain(format!("values must be finite, found {x}"));
    }
    Ok(())
}

/// An element of a weighted `ℓ^e` space.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<f64>,
    exponent: f64,
    weights: Vec<f64>,
}

impl Signal {
    pub fn new(values: Vec<f64>, exponent: f64, weights: Vec<f64>) -> Result<Self> {
        check_len(values.len(), weights.len())?;
        if !(exponent > 1.0) || !exponent.is_finite() {
            return domain(format!("signal exponent must be > 1, got {exponent}"));
        }
        validate_weights(&weights)?;
        validate_values(&values)?;
        Ok(Signal {
            values,
            exponent,
            weights,
        })
    }

    /// A signal whose cells all carry the same measure.
    pub fn uniform(values: Vec<f64>, exponent: f64, weight: f64) -> Result<Self> {
        let n = values.len();
        Self::new(values, exponent, vec![weight; n])
    }

    pub fn zeros(n: usize, exponent: f64, weight: f64) -> Result<Self> {
        Self::uniform(vec![0.0; n], exponent, weight)
    }

    /// Same space, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        check_len(self.values.len(), values.len())?;
        validate_values(&values)?;
        Ok(Signal {
            values,
            exponent: self.exponent,
            weights: self.weights.clone(),
        })
    }

    pub(crate) fn with_values_unchecked(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Signal {
            values,
            exponent: self.exponent,
            weights: self.weights.clone(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.with_values_unchecked(vec![0.0; self.len()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Norm in the signal's own exponent.
    pub fn norm(&self) -> f64 {
        weighted_norm(&self.values, &self.weights, self.exponent)
    }

    /// `self - other`, keeping this signal's space.
    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        check_len(self.len(), other.len())?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(self.with_values_unchecked(values))
    }

    pub fn scaled(&self, factor: f64) -> Signal {
        self.with_values_unchecked(self.values.iter().map(|x| factor * x).collect())
    }
}

/// An element of the dual of a weighted `ℓ^e` space. Values already contain
/// the cell measure, so pairing with a [`Signal`] is a plain dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl DualVector {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_len(values.len(), weights.len())?;
        validate_weights(&weights)?;
        validate_values(&values)?;
        Ok(DualVector { values, weights })
    }

    pub fn zeros(weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        Self::new(vec![0.0; n], weights)
    }

    pub(crate) fn from_parts_unchecked(values: Vec<f64>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), weights.len());
        DualVector { values, weights }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `⟨self, v⟩ = Σ_k self_k v_k`.
    pub fn pair(&self, v: &Signal) -> f64 {
        dot(&self.values, v.values())
    }

    /// Norm in the dual of `ℓ^{primal_exponent}` with this vector's weights.
    pub fn dual_norm(&self, primal_exponent: f64) -> f64 {
        let q = dual_exponent(primal_exponent);
        // density = value / weight, norm = (Σ w |density|^q)^{1/q}
        let scale = self
            .values
            .iter()
            .zip(&self.weights)
            .fold(0.0f64, |m, (x, w)| m.max((x / w).abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let s: f64 = self
            .values
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * mag_pow((x / w).abs() / scale, q))
            .sum();
        scale * s.powf(1.0 / q)
    }

    pub fn sub(&self, other: &DualVector) -> Result<DualVector> {
        check_len(self.len(), other.len())?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(DualVector::from_parts_unchecked(values, self.weights.clone()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The exponent bundle of a splitting problem.
///
/// `p` is the smoothness exponent (the power of the proximity term), `r` the
/// data-fit power and primal space exponent, `s` the penalty exponent and
/// `delta` the step-size safety margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    pub p: f64,
    pub r: f64,
    pub s: f64,
    pub p_dual: f64,
    pub delta: f64,
}

impl Exponents {
    pub fn new(p: f64, r: f64, s: f64, delta: f64) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) {
            return domain(format!("p must lie in (1, 2], got {p}"));
        }
        if !(r >= p) || !r.is_finite() {
            return domain(format!("r must satisfy r >= p = {p}, got {r}"));
        }
        if !(s >= 1.0 && s <= r) {
            return domain(format!("s must lie in [1, r = {r}], got {s}"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return domain(format!("delta must lie in (0, 1), got {delta}"));
        }
        Ok(Exponents {
            p,
            r,
            s,
            p_dual: dual_exponent(p),
            delta,
        })
    }
}

/// Norm of `u` in the weighted `ℓ^exponent` space on `u`'s weights.
pub fn norm(u: &Signal, exponent: f64) -> Result<f64> {
    if !(exponent >= 1.0) {
        return domain(format!("norm exponent must be >= 1, got {exponent}"));
    }
    Ok(weighted_norm(u.values(), u.weights(), exponent))
}

/// The duality map `j(u) = ∂(‖u‖^power / power)` of the weighted
/// `ℓ^{space_exponent}` space:
/// `j(u)_k = w_k · sign(u_k)|u_k|^{e-1} · ‖u‖_e^{power-e}`.
///
/// `j(0) = 0`.
pub fn duality_map(u: &Signal, space_exponent: f64, power: f64) -> Result<DualVector> {
    if !(space_exponent > 1.0) {
        return domain(format!(
            "duality map space exponent must be > 1, got {space_exponent}"
        ));
    }
    if !(power > 1.0) {
        return domain(format!("duality map power must be > 1, got {power}"));
    }
    Ok(duality_map_unchecked(
        u.values(),
        u.weights(),
        space_exponent,
        power,
    ))
}

pub(crate) fn duality_map_unchecked(
    values: &[f64],
    weights: &[f64],
    e: f64,
    power: f64,
) -> DualVector {
    let nrm = weighted_norm(values, weights, e);
    if nrm == 0.0 {
        return DualVector::from_parts_unchecked(vec![0.0; values.len()], weights.to_vec());
    }
    let factor = if power == e { 1.0 } else { nrm.powf(power - e) };
    let out = values
        .iter()
        .zip(weights)
        .map(|(x, w)| w * spow(*x, e - 1.0) * factor)
        .collect();
    DualVector::from_parts_unchecked(out, weights.to_vec())
}

/// Upper bound `M` with `‖j(u) - j(v)‖_* <= M ‖u - v‖^{p-1}` for
/// `‖u‖, ‖v‖ <= radius`, where `j` is the duality map of
/// [`duality_map`] and `p = min(2, space_exponent)`.
///
/// The bound has the form `c(e, q) · max(1, radius)^{q - p}`. The constants
/// are dimension free:
///
/// * `e <= 2`: `sign(·)|·|^{e-1}` is `(e-1)`-Hölder with constant `2^{2-e}`;
/// * `e > 2`: `sign(·)|·|^{e-1}` is Lipschitz on the unit ball with constant
///   `(e-1)·2^{(e-2)/e}`;
///
/// and the norm factor `‖u‖^{q-e}` adds `max(1, q-e)` whenever `q > e`.
/// Powers `2 <= q < e` (only possible for `e > 2`) are not supported.
pub fn holder_bound_jr(space_exponent: f64, power: f64, radius: f64) -> Result<f64> {
    let e = space_exponent;
    let q = power;
    if !(e > 1.0) {
        return domain(format!("space exponent must be > 1, got {e}"));
    }
    if !(radius >= 0.0) {
        return domain(format!("radius must be >= 0, got {radius}"));
    }
    let p = e.min(2.0);
    if !(q >= p) {
        return domain(format!(
            "power {q} is below min(2, space exponent) = {p}; the duality map is not (p-1)-Hölder"
        ));
    }
    if q < e {
        return domain(format!(
            "power {q} < space exponent {e} > 2 has no Hölder constant in the table"
        ));
    }
    let base = if e <= 2.0 {
        2f64.powf(2.0 - e)
    } else {
        (e - 1.0) * 2f64.powf((e - 2.0) / e)
    };
    let beta = q - e;
    let norm_part = if beta > 0.0 { beta.max(1.0) } else { 0.0 };
    Ok((base + norm_part) * radius.max(1.0).powf(q - p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_power_examples() {
        assert_eq!(signed_power(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(signed_power(-4.0, 0.5).unwrap(), -2.0);
        assert_eq!(signed_power(7.3, 1.0).unwrap(), 7.3);
        assert_eq!(signed_power(-3.0, 0.0).unwrap(), -1.0);
        assert!(signed_power(1.0, -0.5).is_err());
        assert!(signed_power(f64::NAN, 1.0).is_err());
        assert!(signed_power(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn norm_examples() {
        let u = Signal::uniform(vec![3.0, 4.0], 2.0, 1.0).unwrap();
        assert_eq!(norm(&u, 2.0).unwrap(), 5.0);
        let z = Signal::zeros(5, 1.5, 1.0).unwrap();
        assert_eq!(norm(&z, 1.5).unwrap(), 0.0);
        let ones = Signal::uniform(vec![1.0; 4], 2.0, 0.25).unwrap();
        assert_eq!(norm(&ones, 1.0).unwrap(), 1.0);
        assert!(norm(&ones, 0.5).is_err());
    }

    #[test]
    fn signal_invariants_rejected() {
        assert!(Signal::new(vec![1.0], 1.0, vec![1.0]).is_err());
        assert!(Signal::new(vec![1.0], 2.0, vec![0.0]).is_err());
        assert!(Signal::new(vec![f64::NAN], 2.0, vec![1.0]).is_err());
        assert!(Signal::new(vec![1.0, 2.0], 2.0, vec![1.0]).is_err());
        assert!(DualVector::new(vec![1.0], vec![-1.0]).is_err());
    }

    #[test]
    fn duality_map_examples() {
        let z = Signal::zeros(3, 1.5, 1.0).unwrap();
        assert!(duality_map(&z, 1.5, 3.0)
            .unwrap()
            .values()
            .iter()
            .all(|x| *x == 0.0));

        let u = Signal::uniform(vec![1.5, -2.0, 0.25], 2.0, 1.0).unwrap();
        assert_eq!(duality_map(&u, 2.0, 2.0).unwrap().values(), u.values());

        let u = Signal::uniform(vec![4.0, 0.0], 1.5, 1.0).unwrap();
        assert_eq!(duality_map(&u, 1.5, 1.5).unwrap().values(), &[2.0, 0.0]);

        assert!(duality_map(&u, 1.0, 2.0).is_err());
        assert!(duality_map(&u, 2.0, 1.0).is_err());
    }

    #[test]
    fn dual_norm_of_weighted_hilbert_vector() {
        // w = h * density; dual norm is the weighted L2 norm of the density.
        let w = DualVector::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        assert!((w.dual_norm(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exponents_validation() {
        let e = Exponents::new(1.5, 2.0, 1.0, 0.1).unwrap();
        assert!((1.0 / e.p + 1.0 / e.p_dual - 1.0).abs() < 1e-12);
        assert!(Exponents::new(1.0, 2.0, 1.0, 0.1).is_err());
        assert!(Exponents::new(2.5, 3.0, 1.0, 0.1).is_err());
        assert!(Exponents::new(1.5, 1.4, 1.0, 0.1).is_err());
        assert!(Exponents::new(1.5, 2.0, 2.5, 0.1).is_err());
        assert!(Exponents::new(1.5, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn holder_bound_examples() {
        assert_eq!(holder_bound_jr(2.0, 2.0, 123.0).unwrap(), 1.0);
        assert_eq!(holder_bound_jr(2.0, 3.0, 1.0).unwrap(), 2.0);
        assert_eq!(holder_bound_jr(2.0, 3.0, 4.0).unwrap(), 8.0);
        assert!(holder_bound_jr(1.5, 1.2, 1.0).is_err());
        assert!(holder_bound_jr(3.0, 2.5, 1.0).is_err());
        assert!((holder_bound_jr(1.5, 1.5, 1.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
