//! Shared builders for the integration tests.
#![allow(dead_code)]

use ebm_core::posterior::SufficientStats;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec<R: Rng>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

pub fn normal_mat<R: Rng>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// `AAᵀ + shift·I` with Gaussian `A`: well conditioned, positive definite.
pub fn random_spd<R: Rng>(d: usize, shift: f64, rng: &mut R) -> DMatrix<f64> {
    let a = normal_mat(d, d, rng);
    &a * a.transpose() + DMatrix::identity(d, d) * shift
}

pub fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn max_abs_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).abs().max()
}

/// Statistics of `T` random observations together with the raw design.
pub struct Sample {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub stats: SufficientStats,
}

pub fn random_sample<R: Rng>(t: usize, d: usize, rng: &mut R) -> Sample {
    let x = normal_mat(t, d, rng);
    let y = normal_vec(t, rng) * 2.0;
    let stats = SufficientStats::from_batch(&x, &y).unwrap();
    Sample { x, y, stats }
}

/// Inverse by plain LU, independent of the library's Cholesky path.
pub fn lu_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}
