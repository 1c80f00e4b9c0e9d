//! Shared helpers for the integration suites: a golden-section scalar
//! minimizer used as a brute-force oracle, seeded random vectors, and
//! canned instance families.

#![allow(dead_code)]

use nalgebra::DVector;
use proxcert::experiments::{build_random_lasso, Instance};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Minimizes a unimodal scalar function over `[lo, hi]` by golden-section
/// search, shrinking the bracket below `tol`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    assert!(lo < hi && tol > 0.0);
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.gen_range(-scale..=scale))
}

/// Dense random lasso with exact extreme curvatures, thin wrapper with the
/// argument order (seed first) the tests read most naturally.
pub fn dense_instance(seed: u64, m: usize, d: usize, mu: f64, l: f64, lambda: f64) -> Instance {
    build_random_lasso(m, d, mu, l, seed, lambda).expect("instance construction")
}

/// 21 instances spanning condition ratios `mu/L` in {1e-3, 0.1, 1} and
/// dimensions up to 50.
pub fn ratio_suite() -> Vec<Instance> {
    let dims = [3usize, 5, 8, 13, 21, 34, 50];
    let ratios = [1e-3, 0.1, 1.0];
    let mut out = Vec::new();
    for (r, &ratio) in ratios.iter().enumerate() {
        for (i, &d) in dims.iter().enumerate() {
            let l = 4.0;
            let lambda = 0.02 * (1 + i % 3) as f64;
            let seed = 1000 * (r as u64 + 1) + i as u64;
            out.push(dense_instance(seed, d + 5, d, ratio * l, l, lambda));
        }
    }
    out
}

/// Six instances with `mu/L = 0.1` for the envelope and Lyapunov suites;
/// pair with step `1/(2L)`.
pub fn well_conditioned_suite() -> Vec<Instance> {
    [5usize, 8, 12, 20, 32, 40]
        .iter()
        .enumerate()
        .map(|(i, &d)| dense_instance(7000 + i as u64, d + 4, d, 0.4, 4.0, 0.05))
        .collect()
}

/// `||a - b|| <= tol * (1 + max(||a||, ||b||))`.
pub fn vectors_close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}
