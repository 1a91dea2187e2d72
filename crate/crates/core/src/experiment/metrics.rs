//! Reconstruction and sparsity metrics, plus small summary statistics.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// `sqrt(mean((a − b)²))`
pub fn rmse(original: &[f64], reconstruction: &[f64]) -> Result<f64> {
    if original.len() != reconstruction.len() {
        return Err(Error::invalid(format!(
            "rmse of vectors with lengths {} and {}",
            original.len(),
            reconstruction.len()
        )));
    }
    if original.is_empty() {
        return Ok(0.0);
    }
    squared_error(original, reconstruction).map(|s| (s / original.len() as f64).sqrt())
}

pub(crate) fn squared_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("length mismatch"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Percentage of strictly positive entries.
pub fn sparsity(code: &[f64]) -> f64 {
    if code.is_empty() {
        return 0.0;
    }
    100.0 * code.iter().filter(|v| **v > 0.0).count() as f64 / code.len() as f64
}

/// Mean with a two-sided 95% Student-t confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// `None` with fewer than two samples.
    pub ci95: Option<f64>,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            ci95: None,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ci95 = (n >= 2).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("dof >= 1")
            .inverse_cdf(0.975);
        t * (var / n as f64).sqrt()
    });
    Summary { mean, ci95, n }
}
