use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::Matrix;
use crate::error::{Error, Result};

/// The crate-wide deterministic generator: ChaCha with 8 rounds, seeded from
/// a 64-bit value. Its output stream is fixed across platforms.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable 64-bit hash (leading bytes of SHA-256).
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(out)
}

/// Derives an independent child seed from a base seed and a label.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut bytes = base.to_le_bytes().to_vec();
    bytes.extend_from_slice(label.as_bytes());
    stable_hash(&bytes)
}

/// Uniform Xavier/Glorot fill in `±√(6 / (fan_in + fan_out))`.
pub fn xavier_fill(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<Matrix> {
    if rows == 0 || cols == 0 || fan_in == 0 || fan_out == 0 {
        return Err(Error::Config(format!(
            "xavier fill needs non-empty shape and fans, got {rows}x{cols} (fan_in {fan_in}, fan_out {fan_out})"
        )));
    }
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect();
    Matrix::new(rows, cols, data)
}

/// Xavier fill for a plain `out × in` weight matrix.
pub fn xavier_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Result<Matrix> {
    xavier_fill(rows, cols, cols, rows, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let a = xavier_matrix(7, 3, &mut rng_from_seed(11)).unwrap();
        let b = xavier_matrix(7, 3, &mut rng_from_seed(11)).unwrap();
        assert_eq!(a.shape(), (7, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn values_within_limit_and_variance_matches() {
        let (fan_in, fan_out) = (30, 70);
        let m = xavier_fill(1000, 100, fan_in, fan_out, &mut rng_from_seed(5)).unwrap();
        let limit = (6.0f64 / 100.0).sqrt();
        assert!(m.data().iter().all(|v| v.abs() <= limit));
        let n = m.len() as f64;
        let mean = m.sum() / n;
        let var = m.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = 2.0 / (fan_in + fan_out) as f64;
        assert!((var - expected).abs() / expected < 0.05, "{var} vs {expected}");
    }

    #[test]
    fn zero_shape_is_config_error() {
        assert!(matches!(xavier_matrix(0, 3, &mut rng_from_seed(1)), Err(Error::Config(_))));
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_eq!(derive_seed(9, "x"), derive_seed(9, "x"));
    }
}
