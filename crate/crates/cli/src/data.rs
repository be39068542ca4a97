//! Seeded synthetic ground truths and noise.

use banach_fbs::banach::weighted_norm;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` spikes at distinct random positions with amplitudes drawn
/// uniformly from `[lo, hi]`.
pub fn spike_signal(n: usize, count: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    let mut positions = sample(&mut rng, n, count).into_vec();
    positions.sort_unstable();
    let mut u = vec![0.0; n];
    for k in positions {
        u[k] = rng.random_range(lo..=hi);
    }
    u
}

/// Gaussian noise rescaled to weighted `ℓ^exponent` norm `level` exactly.
pub fn scaled_noise(n: usize, level: f64, exponent: f64, weight: f64, seed: u64) -> Vec<f64> {
    // offset the stream so noise and truth never share draws for equal seeds
    let mut rng = rng(seed ^ 0x6e6f_6973_6500_0000);
    let mut e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let weights = vec![weight; n];
    let nrm = weighted_norm(&e, &weights, exponent);
    let scale = if nrm > 0.0 { level / nrm } else { 0.0 };
    e.iter_mut().for_each(|x| *x *= scale);
    e
}

/// Piecewise-constant phantom on `[0, 1]^d`: two boxes and one ball of
/// different intensities on a zero background.
pub fn phantom(dims: &[usize]) -> Vec<f64> {
    let cells: usize = dims.iter().product();
    let mut out = vec![0.0; cells];
    let d = dims.len();
    for (idx, v) in out.iter_mut().enumerate() {
        let mut rem = idx;
        let mut x = vec![0.0; d];
        for a in (0..d).rev() {
            x[a] = ((rem % dims[a]) as f64 + 0.5) / dims[a] as f64;
            rem /= dims[a];
        }
        let inside = |lo: f64, hi: f64| x.iter().all(|c| *c >= lo && *c <= hi);
        if inside(0.15, 0.45) {
            *v = 1.0;
        }
        if x.iter().zip([0.55, 0.6, 0.5]).all(|(c, lo)| *c >= lo && *c <= lo + 0.3) {
            *v = 0.5;
        }
        let r2: f64 = x.iter().zip([0.3, 0.72, 0.5]).map(|(c, m)| (c - m).powi(2)).sum();
        if r2 <= 0.15f64.powi(2) {
            *v = 0.75;
        }
    }
    out
}
