//! Deterministic reductions: compensated summation and composite Simpson.
//!
//! All sums run sequentially in index order so results never depend on how
//! many worker threads produced the summands.

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Composite Simpson weight (without the h/3 factor) of node `i` out of `n`.
#[inline]
pub fn simpson_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i == n - 1 {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Composite Simpson rule over equally spaced samples. Needs an odd number
/// (≥ 3) of nodes.
pub fn simpson(values: &[f64], spacing: f64) -> Result<f64> {
    let n = values.len();
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidGrid(format!(
            "Simpson's rule needs an odd number of at least 3 nodes, got {n}"
        )));
    }
    let s = compensated_sum(
        values
            .iter()
            .enumerate()
            .map(|(i, v)| simpson_weight(i, n) * v),
    );
    Ok(s * spacing / 3.0)
}
