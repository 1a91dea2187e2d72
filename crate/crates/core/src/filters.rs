//! Temporal smoothing of (spiking) latent codes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Configuration-level description of a filter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FilterSpec {
    #[default]
    Identity,
    /// First-order low pass: `y ← y + (dt/T)(x − y)`.
    Exponential { time_constant_ms: f64 },
    /// Causal moving average over the last `⌈window/dt⌉` frames.
    Boxcar { window_ms: f64 },
}

impl FilterSpec {
    pub fn validate(&self, dt: f64) -> Result<()> {
        match *self {
            FilterSpec::Identity => Ok(()),
            FilterSpec::Exponential { time_constant_ms } => {
                if time_constant_ms > 0.0 && time_constant_ms.is_finite() && dt <= time_constant_ms {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "exponential filter needs dt <= time constant, got T={time_constant_ms} dt={dt}"
                    )))
                }
            }
            FilterSpec::Boxcar { window_ms } => {
                if window_ms >= dt && window_ms.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "boxcar window {window_ms} ms shorter than dt {dt} ms"
                    )))
                }
            }
        }
    }

    pub fn build(&self, n: usize, dt: f64) -> Result<CodeFilter> {
        self.validate(dt)?;
        let state = match *self {
            FilterSpec::Identity => FilterState::Identity,
            FilterSpec::Exponential { time_constant_ms } => FilterState::Exponential {
                alpha: dt / time_constant_ms,
                y: vec![0.0; n],
            },
            FilterSpec::Boxcar { window_ms } => FilterState::Boxcar {
                len: boxcar_len(window_ms, dt),
                frames: VecDeque::new(),
            },
        };
        Ok(CodeFilter {
            n,
            state,
            out: vec![0.0; n],
        })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, FilterSpec::Identity)
    }
}

/// Number of frames in a boxcar window, `⌈window/dt⌉`.
pub fn boxcar_len(window_ms: f64, dt: f64) -> usize {
    // guard against 40.000000001 / 1.0 style round-up
    let ratio = window_ms / dt;
    let r = ratio.round();
    let len = if (ratio - r).abs() < 1e-9 { r } else { ratio.ceil() };
    (len as usize).max(1)
}

#[derive(Debug, Clone)]
enum FilterState {
    Identity,
    Exponential { alpha: f64, y: Vec<f64> },
    Boxcar { len: usize, frames: VecDeque<Vec<f64>> },
}

/// A stateful filter over N-dimensional code frames.
#[derive(Debug, Clone)]
pub struct CodeFilter {
    n: usize,
    state: FilterState,
    out: Vec<f64>,
}

impl CodeFilter {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Feeds one frame and returns the smoothed code.
    pub fn step(&mut self, frame: &[f64]) -> &[f64] {
        assert_eq!(frame.len(), self.n, "filter dimension mismatch");
        match &mut self.state {
            FilterState::Identity => self.out.copy_from_slice(frame),
            FilterState::Exponential { alpha, y } => {
                for (yi, &x) in y.iter_mut().zip(frame) {
                    *yi += *alpha * (x - *yi);
                }
                self.out.copy_from_slice(y);
            }
            FilterState::Boxcar { len, frames } => {
                if frames.len() == *len {
                    let mut recycled = frames.pop_front().unwrap();
                    recycled.copy_from_slice(frame);
                    frames.push_back(recycled);
                } else {
                    frames.push_back(frame.to_vec());
                }
                // recomputed each step so all-zero windows give exactly zero
                let k = frames.len() as f64;
                self.out.iter_mut().for_each(|o| *o = 0.0);
                for f in frames.iter() {
                    for (o, v) in self.out.iter_mut().zip(f) {
                        *o += v;
                    }
                }
                self.out.iter_mut().for_each(|o| *o /= k);
            }
        }
        &self.out
    }

    /// Most recent output.
    pub fn current(&self) -> &[f64] {
        &self.out
    }

    pub fn reset(&mut self) {
        match &mut self.state {
            FilterState::Identity => {}
            FilterState::Exponential { y, .. } => y.iter_mut().for_each(|v| *v = 0.0),
            FilterState::Boxcar { frames, .. } => frames.clear(),
        }
        self.out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Convenience for single-call use.
pub fn filter_step(f: &mut CodeFilter, frame: &[f64]) -> Vec<f64> {
    f.step(frame).to_vec()
}
