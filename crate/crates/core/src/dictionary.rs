//! Feature dictionary: initialization, the synthesis/analysis operators,
//! the Hebbian learning rule and checkpoint persistence.
//!
//! Elements are stored element-major (`N × D`, row-major) so both
//! operators walk contiguous memory.

use std::fs;
use std::io::Write;
use std::ops::Deref;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg;

/// Shape of one input sample. `D = height · width · channels · frames`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputDims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub frames: usize,
}

impl InputDims {
    pub fn new(height: usize, width: usize, channels: usize, frames: usize) -> Self {
        Self {
            height,
            width,
            channels,
            frames,
        }
    }

    /// A flat vector of `len` values viewed as one 1×len grayscale frame.
    pub fn flat(len: usize) -> Self {
        Self::new(1, len, 1, 1)
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels * self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Flat index of `(frame, row, col, channel)`; frame-major, then
    /// row-major, channels interleaved.
    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize, c: usize) -> usize {
        ((t * self.height + y) * self.width + x) * self.channels + c
    }
}

/// Reconstruction error `I − Φa` for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual(Vec<f64>);

impl Residual {
    pub fn new(values: Vec<f64>) -> Self {
        Residual(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Residual {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Variance of the initial entries before normalization.
pub const INIT_VARIANCE: f64 = 0.01;

pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    elements: Vec<f64>,
    dims: InputDims,
    count: usize,
}

impl Dictionary {
    /// Draws every entry i.i.d. from `N(0, 0.01)` and rescales each element
    /// to unit L2 norm.
    pub fn init_random(seed: u64, n: usize, dims: InputDims) -> Result<Self> {
        check_shape(n, dims)?;
        let d = dims.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_VARIANCE.sqrt()).expect("valid normal");
        let mut elements: Vec<f64> = (0..n * d).map(|_| normal.sample(&mut rng)).collect();
        for row in elements.chunks_exact_mut(d) {
            let norm = linalg::norm2(row);
            if norm == 0.0 {
                return Err(Error::numeric("zero-norm element at initialization", 0));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(Self {
            elements,
            dims,
            count: n,
        })
    }

    /// Builds a dictionary from explicit element rows, normalizing each.
    pub fn from_rows(rows: &[Vec<f64>], dims: InputDims) -> Result<Self> {
        check_shape(rows.len(), dims)?;
        let d = dims.len();
        let mut elements = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::invalid(format!(
                    "element {i} has length {}, expected {d}",
                    row.len()
                )));
            }
            let norm = linalg::norm2(row);
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::invalid(format!("element {i} cannot be normalized")));
            }
            elements.extend(row.iter().map(|v| v / norm));
        }
        Ok(Self {
            elements,
            dims,
            count: rows.len(),
        })
    }

    pub fn element_count(&self) -> usize {
        self.count
    }

    pub fn input_len(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> InputDims {
        self.dims
    }

    pub fn element(&self, i: usize) -> &[f64] {
        let d = self.input_len();
        &self.elements[i * d..(i + 1) * d]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[f64]> {
        self.elements.chunks_exact(self.input_len())
    }

    /// Raw element-major storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.elements
    }

    /// `Σᵢ aᵢ·Φᵢ`
    pub fn synthesize(&self, code: &[f64]) -> Result<Vec<f64>> {
        self.check_code(code)?;
        let mut out = vec![0.0; self.input_len()];
        self.synthesize_into(code, &mut out);
        Ok(out)
    }

    /// Accumulates `Φa` into `out`, which must be zeroed (or hold an offset).
    /// Zero coefficients are skipped.
    pub(crate) fn synthesize_into(&self, code: &[f64], out: &mut [f64]) {
        for (a, row) in code.iter().zip(self.elements()) {
            if *a != 0.0 {
                linalg::axpy(*a, row, out);
            }
        }
    }

    /// `I − Φa`
    pub fn residual(&self, input: &[f64], code: &[f64]) -> Result<Residual> {
        self.check_code(code)?;
        self.check_input(input)?;
        let mut r = input.to_vec();
        for (a, row) in code.iter().zip(self.elements()) {
            if *a != 0.0 {
                linalg::axpy(-*a, row, &mut r);
            }
        }
        Ok(Residual(r))
    }

    /// `Φᵀ·residual`
    pub fn analyze(&self, residual: &[f64]) -> Result<Vec<f64>> {
        self.check_input(residual)?;
        let mut out = vec![0.0; self.count];
        self.analyze_into(residual, &mut out, Execution::Sequential);
        Ok(out)
    }

    pub(crate) fn analyze_into(&self, residual: &[f64], out: &mut [f64], exec: Execution) {
        exec::fill(exec, out, |i| linalg::dot(self.element(i), residual));
    }

    /// One Hebbian step: `Φᵢ ← normalize(Φᵢ + η·aᵢ·R)`. Elements with
    /// `aᵢ = 0` are left bit-for-bit untouched. On error the dictionary is
    /// unchanged.
    pub fn hebbian_update(&mut self, code: &[f64], residual: &[f64], learning_rate: f64) -> Result<()> {
        self.check_code(code)?;
        self.check_input(residual)?;
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be positive and finite, got {learning_rate}"
            )));
        }
        if !linalg::all_finite(code) || !linalg::all_finite(residual) {
            return Err(Error::numeric("non-finite code or residual in dictionary update", 0));
        }
        let d = self.input_len();
        let mut updated: Vec<(usize, Vec<f64>)> = Vec::new();
        for (i, &a) in code.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let mut row = self.element(i).to_vec();
            linalg::axpy(learning_rate * a, residual, &mut row);
            let norm = linalg::norm2(&row);
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::numeric(
                    format!("element {i} collapsed during update (norm {norm})"),
                    0,
                ));
            }
            row.iter_mut().for_each(|v| *v /= norm);
            updated.push((i, row));
        }
        for (i, row) in updated {
            self.elements[i * d..(i + 1) * d].copy_from_slice(&row);
        }
        Ok(())
    }

    /// Largest deviation of any element norm from 1.
    pub fn max_norm_deviation(&self) -> f64 {
        self.elements()
            .map(|row| (linalg::norm2(row) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Copy with every entry rounded through `f32`, i.e. exactly what a
    /// checkpoint round trip produces.
    pub fn quantized(&self) -> Self {
        Self {
            elements: self.elements.iter().map(|&v| v as f32 as f64).collect(),
            dims: self.dims,
            count: self.count,
        }
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * self.elements.len());
        bytes.extend_from_slice(CHECKPOINT_MAGIC);
        for field in [
            CHECKPOINT_VERSION,
            self.count as u32,
            self.dims.height as u32,
            self.dims.width as u32,
            self.dims.channels as u32,
            self.dims.frames as u32,
        ] {
            bytes.extend_from_slice(&field.to_le_bytes());
        }
        for &v in &self.elements {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        bytes
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(format!(
                "checkpoint truncated: {} bytes, header needs {HEADER_LEN}",
                bytes.len()
            )));
        }
        if &bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::format("bad checkpoint magic"));
        }
        let field = |k: usize| {
            let off = 4 + 4 * k;
            u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap())
        };
        let version = field(0);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let count = field(1) as usize;
        let dims = InputDims::new(
            field(2) as usize,
            field(3) as usize,
            field(4) as usize,
            field(5) as usize,
        );
        if count == 0 || dims.is_empty() {
            return Err(Error::format("checkpoint declares an empty dictionary"));
        }
        let expected = count
            .checked_mul(dims.len())
            .and_then(|e| e.checked_mul(4))
            .ok_or_else(|| Error::format("checkpoint dimensions overflow"))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::format(format!(
                "checkpoint payload is {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let elements = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Ok(Self {
            elements,
            dims,
            count,
        })
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_checkpoint_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes).map_err(|e| e.context(path.display().to_string()))
    }

    fn check_code(&self, code: &[f64]) -> Result<()> {
        if code.len() != self.count {
            return Err(Error::invalid(format!(
                "code has length {}, dictionary has {} elements",
                code.len(),
                self.count
            )));
        }
        Ok(())
    }

    fn check_input(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.input_len() {
            return Err(Error::invalid(format!(
                "input has length {}, dictionary expects {}",
                v.len(),
                self.input_len()
            )));
        }
        Ok(())
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"LCAD";
const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 6 * 4;

fn check_shape(n: usize, dims: InputDims) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("dictionary needs at least one element"));
    }
    if dims.is_empty() {
        return Err(Error::invalid(format!("input dimensions {dims:?} are empty")));
    }
    Ok(())
}

/// Asserts the unit-norm invariant; used after loading untrusted data.
pub fn check_unit_norm(dict: &Dictionary, tolerance: f64) -> Result<()> {
    let dev = dict.max_norm_deviation();
    if dev > tolerance {
        return Err(Error::numeric(
            format!("element norm deviates from 1 by {dev}"),
            0,
        ));
    }
    Ok(())
}
