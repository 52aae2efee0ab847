//! Per-dimension standardization and small feature-vector helpers.

use alloc::vec;
use alloc::vec::Vec;

/// z-scoring statistics fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; constant dimensions get 1.
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits on equal-length rows. Panics on empty input.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        assert!(!rows.is_empty(), "cannot standardize an empty set");
        let d = rows[0].as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = libm::sqrt(s / n);
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Bits mapped to `{-1, +1}`.
pub fn signed_bits(bits: &[bool]) -> Vec<f64> {
    bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()
}

pub fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_and_guards_constant_columns() {
        let rows = [[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(&rows);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 5.0]), vec![1.0, 0.0]);
        let rows = [[0.0], [4.0]];
        assert_eq!(Standardizer::fit(&rows).apply(&[4.0]), vec![1.0]);
    }

    #[test]
    fn bit_mapping() {
        assert_eq!(signed_bits(&[true, false]), vec![1.0, -1.0]);
        assert_eq!(concat(&[1.0], &[2.0, 3.0]), vec![1.0, 2.0, 3.0]);
    }
}
