//! Seeded generators for random test operators; shared by the unit tests,
//! the acceptance suite and the CLI's randomized experiments.

use std::f64::consts::TAU;

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::opcore::{CMat, TruncatedOperator};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box–Muller; adequate for test matrices.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

pub fn random_matrix(n: usize, rng: &mut impl Rng) -> CMat {
    Mat::from_fn(n, n, |_, _| c64::new(gaussian(rng), gaussian(rng)))
}

pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> TruncatedOperator {
    let g = random_matrix(n, rng);
    let h = Mat::from_fn(n, n, |i, j| (g[(i, j)] + g[(j, i)].conj()) * 0.5);
    TruncatedOperator::from_plain(h)
}

/// Haar-ish unitary from Gram–Schmidt on a Gaussian matrix.
pub fn random_unitary(n: usize, rng: &mut impl Rng) -> TruncatedOperator {
    let g = random_matrix(n, rng);
    let mut q = Mat::<c64>::zeros(n, n);
    for j in 0..n {
        let mut v: Vec<c64> = (0..n).map(|i| g[(i, j)]).collect();
        for _ in 0..2 {
            for p in 0..j {
                let dot: c64 = (0..n).map(|i| q[(i, p)].conj() * v[i]).sum();
                for i in 0..n {
                    v[i] -= q[(i, p)] * dot;
                }
            }
        }
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            q[(i, j)] = v[i] / nrm;
        }
    }
    TruncatedOperator::from_plain(q)
}
