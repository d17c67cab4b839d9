use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Continuity-corrected McNemar test on paired correctness vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// Questions only the first system solved.
    pub b: usize,
    /// Questions only the second system solved.
    pub c: usize,
    pub statistic: f64,
    pub p_value: f64,
}

pub fn mcnemar(bits_a: &[bool], bits_b: &[bool]) -> Result<McNemar> {
    if bits_a.len() != bits_b.len() {
        return Err(Error::Contract(format!(
            "mcnemar needs equal-length vectors, got {} and {}",
            bits_a.len(),
            bits_b.len()
        )));
    }
    let b = bits_a.iter().zip(bits_b).filter(|(x, y)| **x && !**y).count();
    let c = bits_a.iter().zip(bits_b).filter(|(x, y)| !**x && **y).count();
    Ok(mcnemar_counts(b, c))
}

pub fn mcnemar_counts(b: usize, c: usize) -> McNemar {
    if b + c == 0 {
        return McNemar {
            b,
            c,
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let statistic = diff.powi(2) / (b + c) as f64;
    let chi = ChiSquared::new(1.0).expect("one degree of freedom");
    McNemar {
        b,
        c,
        statistic,
        p_value: chi.sf(statistic),
    }
}
