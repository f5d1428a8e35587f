//! Unbiased maximum mean discrepancy between two equally sized feature sets.
//!
//! For sets `X = {x_i}` and `Y = {y_i}` of size `n`,
//!
//! ```text
//! s = 1 / (n^2 - n) * sum_{i != j} h[i, j]
//! h[i, j] = k(x_i, x_j) + k(y_i, y_j) - k(x_i, y_j) - k(x_j, y_i)
//! ```
//!
//! and the distance is `sqrt(max(s, 0))`. The estimate `s` is unbiased for
//! the squared discrepancy and can dip below zero on finite samples.

use super::FeatureMatrix;
use crate::error::{Error, Result};

pub trait Kernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;
}

/// `k(a, b) = a . b`
#[derive(Debug, Clone, Copy, Default)]
pub struct DotProduct;

impl Kernel for DotProduct {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

fn check_pair(x: &FeatureMatrix, y: &FeatureMatrix) -> Result<usize> {
    if x.n() != y.n() {
        return Err(Error::invalid(format!(
            "MMD needs equally sized sets, got {} and {}",
            x.n(),
            y.n()
        )));
    }
    if x.c() != y.c() {
        return Err(Error::Dimension {
            expected: x.c(),
            found: y.c(),
        });
    }
    if x.n() < 2 {
        return Err(Error::invalid(format!(
            "MMD needs at least 2 rows, got {}",
            x.n()
        )));
    }
    Ok(x.n())
}

/// The unclamped estimate `s` for an arbitrary kernel, summing `h` over every
/// ordered pair `i != j`. Quadratic in `n`.
pub fn mmd_unbiased_squared_with<K: Kernel>(
    kernel: &K,
    x: &FeatureMatrix,
    y: &FeatureMatrix,
) -> Result<f64> {
    let n = check_pair(x, y)?;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (xi, xj, yi, yj) = (x.row(i), x.row(j), y.row(i), y.row(j));
            sum += kernel.eval(xi, xj) + kernel.eval(yi, yj)
                - kernel.eval(xi, yj)
                - kernel.eval(xj, yi);
        }
    }
    Ok(sum / (n * n - n) as f64)
}

/// The unclamped estimate `s` for the dot-product kernel.
///
/// With a linear kernel `h[i, j] = z_i . z_j` where `z_i = x_i - y_i`, so the
/// ordered-pair sum equals `|sum_i z_i|^2 - sum_i |z_i|^2`. Linear in `n`.
pub fn mmd_unbiased_squared(x: &FeatureMatrix, y: &FeatureMatrix) -> Result<f64> {
    let n = check_pair(x, y)?;
    let c = x.c();
    let mut total = vec![0.0; c];
    let mut diagonal = 0.0;
    for (xi, yi) in x.rows().zip(y.rows()) {
        for ((t, a), b) in total.iter_mut().zip(xi).zip(yi) {
            let z = a - b;
            *t += z;
            diagonal += z * z;
        }
    }
    let full: f64 = total.iter().map(|t| t * t).sum();
    Ok((full - diagonal) / (n * n - n) as f64)
}

/// Dot-product-kernel MMD distance, clamped at zero before the square root.
pub fn mmd_unbiased(x: &FeatureMatrix, y: &FeatureMatrix) -> Result<f64> {
    Ok(mmd_unbiased_squared(x, y)?.max(0.0).sqrt())
}
