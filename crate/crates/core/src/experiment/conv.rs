//! Small-instance check that a dense dictionary over the full kernel
//! support is the same linear map as a single-position convolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dictionary::{Dictionary, InputDims};
use crate::error::Result;
use crate::linalg;

/// Single-channel 2-D convolutional dictionary with "valid" placement.
#[derive(Debug, Clone)]
pub struct ConvDictionary {
    pub input: (usize, usize),
    pub kernel: (usize, usize),
    /// Each kernel is `kh × kw`, row-major, unit norm.
    pub kernels: Vec<Vec<f64>>,
}

impl ConvDictionary {
    pub fn positions(&self) -> (usize, usize) {
        (
            self.input.0.saturating_sub(self.kernel.0) + 1,
            self.input.1.saturating_sub(self.kernel.1) + 1,
        )
    }

    fn fits(&self) -> bool {
        self.kernel.0 <= self.input.0 && self.kernel.1 <= self.input.1
    }

    /// `recon[y, x] = Σ_k Σ_p a[k, p] · kernel_k[y − p_y, x − p_x]`;
    /// code layout is kernel-major, then position row-major.
    pub fn synthesize(&self, code: &[f64]) -> Vec<f64> {
        let (h, w) = self.input;
        let (kh, kw) = self.kernel;
        let (ph, pw) = self.positions();
        let mut out = vec![0.0; h * w];
        for (k, kernel) in self.kernels.iter().enumerate() {
            for py in 0..ph {
                for px in 0..pw {
                    let a = code[(k * ph + py) * pw + px];
                    for dy in 0..kh {
                        for dx in 0..kw {
                            out[(py + dy) * w + px + dx] += a * kernel[dy * kw + dx];
                        }
                    }
                }
            }
        }
        out
    }

    /// Correlation of each kernel with the residual at every position.
    pub fn analyze(&self, residual: &[f64]) -> Vec<f64> {
        let (_, w) = self.input;
        let (kh, kw) = self.kernel;
        let (ph, pw) = self.positions();
        let mut out = Vec::with_capacity(self.kernels.len() * ph * pw);
        for kernel in &self.kernels {
            for py in 0..ph {
                for px in 0..pw {
                    let mut acc = 0.0;
                    for dy in 0..kh {
                        for dx in 0..kw {
                            acc += kernel[dy * kw + dx] * residual[(py + dy) * w + px + dx];
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvCheck {
    /// Kernel support differs from the input, so no dense equivalent exists.
    NotApplicable { positions: (usize, usize) },
    Checked {
        synth_max_diff: f64,
        analyze_max_diff: f64,
        passed: bool,
    },
}

impl ConvCheck {
    pub fn passed(&self) -> bool {
        matches!(self, ConvCheck::Checked { passed: true, .. })
    }
}

pub const CONV_TOLERANCE: f64 = 1e-10;

/// Compares convolutional and dense synthesis/analysis on random codes and
/// residuals.
pub fn conv_check(
    seed: u64,
    input: (usize, usize),
    kernel: (usize, usize),
    n_kernels: usize,
) -> Result<ConvCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernels: Vec<Vec<f64>> = (0..n_kernels)
        .map(|_| {
            let mut k: Vec<f64> = (0..kernel.0 * kernel.1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = linalg::norm2(&k);
            k.iter_mut().for_each(|v| *v /= n);
            k
        })
        .collect();
    let conv = ConvDictionary { input, kernel, kernels };
    let positions = conv.positions();
    if !conv.fits() || positions != (1, 1) {
        return Ok(ConvCheck::NotApplicable { positions });
    }
    let dense = Dictionary::from_rows(&conv.kernels, InputDims::new(input.0, input.1, 1, 1))?;

    let code: Vec<f64> = (0..n_kernels).map(|_| rng.random_range(0.0..2.0)).collect();
    let residual: Vec<f64> = (0..input.0 * input.1).map(|_| rng.random_range(-1.0..1.0)).collect();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let synth_max_diff = diff(&conv.synthesize(&code), &dense.synthesize(&code)?);
    let analyze_max_diff = diff(&conv.analyze(&residual), &dense.analyze(&residual)?);
    Ok(ConvCheck::Checked {
        synth_max_diff,
        analyze_max_diff,
        passed: synth_max_diff <= CONV_TOLERANCE && analyze_max_diff <= CONV_TOLERANCE,
    })
}

/// The default instance: 4×4 input, three 4×4 kernels.
pub fn conv_equivalence_check(seed: u64) -> Result<ConvCheck> {
    conv_check(seed, (4, 4), (4, 4), 3)
}
