//! Seeded generators for random test instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CMatrix, C64};

pub type InstanceRng = ChaCha8Rng;

pub fn rng(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian_c64(rng))
}

/// Unit vector drawn from the unitarily invariant distribution.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..dim).map(|_| gaussian_c64(rng)).collect();
        let n = crate::linalg::norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|z| z / n).collect();
        }
    }
}

/// Random `r x r` positive semidefinite matrix `G†G` with `G` of the given rank.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, r: usize, rank: usize) -> CMatrix {
    let g = random_matrix(rng, rank.max(1), r);
    g.adjoint().matmul(&g)
}
