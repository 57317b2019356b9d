//! Seeded random plants shared by the integration suites.
#![allow(dead_code)]

use advlq::matops::{eye, hstack, spectral_radius, zeros, Mat};
use advlq::plant::{detectable, lq_plant, stabilizable, LqWeights, Plant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha20Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Random matrix with Frobenius norm `norm`.
pub fn direction(rng: &mut ChaCha20Rng, r: usize, c: usize, norm: f64) -> Mat {
    let d = randn(rng, r, c);
    let n = d.norm();
    d * (norm / n)
}

/// `n × n` matrix with spectral radius drawn from `[lo, hi]`.
pub fn random_dynamics(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> Mat {
    let a = randn(rng, n, n);
    let rho = spectral_radius(&a).unwrap().max(1e-3);
    let target = lo + (hi - lo) * rng.random::<f64>();
    a * (target / rho)
}

/// Random `(A, B)` pair that is stabilizable.
pub fn stabilizable_pair(seed: u64, n: usize, m: usize) -> (Mat, Mat) {
    let mut rng = rng(seed);
    loop {
        let a = random_dynamics(&mut rng, n, 0.3, 1.5);
        let b = randn(&mut rng, n, m);
        if stabilizable(&a, &b).unwrap() {
            return (a, b);
        }
    }
}

/// Seeded 2–3 state plant with one measurement, `B₀ = [I 0]`, one random
/// adversary direction (padded to the noise width) and identity weights.
/// Resamples until stabilizable and detectable.
pub fn random_plant(seed: u64) -> (Plant, LqWeights) {
    let mut rng = rng(seed);
    loop {
        let n = 2 + (seed % 2) as usize;
        let nu = 1 + usize::from(seed.is_multiple_of(3));
        let a = random_dynamics(&mut rng, n, 0.5, 1.3);
        let b2 = randn(&mut rng, n, nu);
        let c2 = randn(&mut rng, 1, n);
        if !stabilizable(&a, &b2).unwrap() || !detectable(&a, &c2).unwrap() {
            continue;
        }
        let b0 = hstack(&[&eye(n), &zeros(n, 1)]);
        let b1 = hstack(&[&(randn(&mut rng, n, 1) * 0.5), &zeros(n, 1)]);
        let mut d20 = zeros(1, n + 1);
        d20[(0, n)] = 1.0;
        let w = LqWeights::identity(n, nu);
        let p = lq_plant(a, b0, b1, b2, &w, c2, d20, zeros(1, 2)).unwrap();
        return (p, w);
    }
}

/// The same plant with the full state measured.
pub fn state_feedback(p: Plant) -> Plant {
    Plant {
        c2: eye(p.n_x()),
        d20: zeros(p.n_x(), p.n_w()),
        d21: zeros(p.n_x(), p.n_delta()),
        ..p
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
