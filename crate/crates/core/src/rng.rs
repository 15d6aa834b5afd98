//! The single random-number source used across the laboratory.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded through [`seeded`] or
//! [`stream`]. Independent streams of one seed let per-row work run in any
//! order and still reproduce bit-for-bit.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng64 = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` of `seed`.
pub fn stream(seed: u64, index: u64) -> Rng64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn gaussian_matrix(rng: &mut Rng64, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `rows x cols` matrix with orthonormal columns (`cols <= rows`), Haar
/// distributed up to column signs.
pub fn random_orthonormal(rng: &mut Rng64, rows: usize, cols: usize) -> DMatrix<f64> {
    assert!(
        cols <= rows,
        "cannot fit {cols} orthonormal columns in R^{rows}"
    );
    let g = gaussian_matrix(rng, rows, rows);
    let q = g.qr().q();
    q.columns(0, cols).into_owned()
}
