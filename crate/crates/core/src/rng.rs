//! Seeded random matrices. Entries are uniform in `[-1, 1]`, drawn column by
//! column from ChaCha8 seeded with `seed_from_u64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::Matrix;

/// Identifier recorded in reports so the stream can be reproduced elsewhere.
pub const PRNG_ALGORITHM: &str = "chacha8-seed_from_u64-uniform[-1,1]";

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Matrix::from_col_major(rows, cols, data).expect("shape matches data")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_matrix() {
        let a = random_matrix(5, 3, 9);
        let b = random_matrix(5, 3, 9);
        assert_eq!(a, b);
        assert_ne!(a, random_matrix(5, 3, 10));
        assert!(a.as_slice().iter().all(|x| (-1.0..=1.0).contains(x)));
    }
}
