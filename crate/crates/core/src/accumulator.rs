//! Accumulator neurons: spiking as discretization with carry-over of the
//! rounding error, and the spiking LCA (S-LCA) built on top of them.
//!
//! Per neuron and timestep, with spike height `s`:
//!
//! ```text
//! v      = carry + desired
//! count  = ⌊v / s⌋          (may exceed 1: several spikes in one step)
//! output = count · s
//! carry' = v − output       (0 ≤ carry' < s)
//! ```
//!
//! In S-LCA the spike output, not the graded code, is what enters the
//! reconstruction and lateral-inhibition terms of the membrane update.

use std::io::Write;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::filters::FilterSpec;
use crate::lca::{self, LcaParams, MembraneState, SparseCode, StepScratch};
use crate::period::{self, DisplayPeriod, PeriodOutput};

/// Per-neuron carry, held as an unevaluated sum `carry + carry_low` of two
/// doubles so that rounding does not accumulate over long runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorState {
    pub carry: Vec<f64>,
    pub carry_low: Vec<f64>,
    pub spike_height: f64,
}

impl AccumulatorState {
    pub fn new(n: usize, spike_height: f64) -> Result<Self> {
        check_spike_height(spike_height)?;
        Ok(Self {
            carry: vec![0.0; n],
            carry_low: vec![0.0; n],
            spike_height,
        })
    }

    pub fn len(&self) -> usize {
        self.carry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carry.is_empty()
    }

    pub fn reset(&mut self) {
        self.carry.iter_mut().for_each(|c| *c = 0.0);
        self.carry_low.iter_mut().for_each(|c| *c = 0.0);
    }
}

pub(crate) fn check_spike_height(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("spike height must be positive and finite, got {s}")))
    }
}

/// Spikes emitted by all neurons in one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeFrame {
    pub counts: Vec<u64>,
    /// `counts · spike_height`
    pub value: Vec<f64>,
}

impl SpikeFrame {
    pub fn zeros(n: usize) -> Self {
        Self {
            counts: vec![0; n],
            value: vec![0.0; n],
        }
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// `(hi + lo) − c·s` as a normalized pair.
#[inline]
fn remainder(hi: f64, lo: f64, c: f64, s: f64) -> (f64, f64) {
    let p = c * s;
    let pe = c.mul_add(s, -p);
    let (t, e) = two_sum(hi, -p);
    fast_two_sum(t, (e + lo) - pe)
}

#[inline]
fn at_least(hi: f64, lo: f64, bound: f64) -> bool {
    let (q, e) = two_sum(hi, -bound);
    q + (e + lo) >= 0.0
}

/// Discretizes one value against the carry `(hi, lo)`; returns
/// `(count, hi', lo')` with `0 ≤ hi' + lo' < s`.
#[inline]
pub(crate) fn discretize(hi: f64, lo: f64, desired: f64, s: f64) -> (u64, f64, f64) {
    let (a, e) = two_sum(hi, desired);
    let (vh, vl) = fast_two_sum(a, e + lo);
    let mut count = (vh / s).floor().max(0.0);
    let (mut rh, mut rl) = remainder(vh, vl, count, s);
    // the quotient can round across an integer boundary
    while count > 0.0 && !at_least(rh, rl, 0.0) {
        count -= 1.0;
        (rh, rl) = remainder(vh, vl, count, s);
    }
    while at_least(rh, rl, s) {
        count += 1.0;
        (rh, rl) = remainder(vh, vl, count, s);
    }
    if !at_least(rh, rl, 0.0) {
        (rh, rl) = (0.0, 0.0);
    }
    if rh >= s {
        // exact value is below s but its leading part rounded up to it
        let below = s.next_down();
        rl += rh - below;
        rh = below;
    }
    (count as u64, rh, rl)
}

pub(crate) fn accumulate_into(state: &mut AccumulatorState, desired: &[f64], frame: &mut SpikeFrame) {
    let s = state.spike_height;
    for ((((c, l), &d), n), v) in state
        .carry
        .iter_mut()
        .zip(state.carry_low.iter_mut())
        .zip(desired)
        .zip(frame.counts.iter_mut())
        .zip(frame.value.iter_mut())
    {
        let (count, hi, lo) = discretize(*c, *l, d, s);
        *c = hi;
        *l = lo;
        *n = count;
        *v = count as f64 * s;
    }
}

/// One accumulator step for every neuron.
pub fn accumulate_step(state: &AccumulatorState, desired: &[f64]) -> Result<(SpikeFrame, AccumulatorState)> {
    if desired.len() != state.carry.len() || state.carry_low.len() != state.carry.len() {
        return Err(Error::invalid("desired output length does not match accumulator"));
    }
    if let Some(i) = desired.iter().position(|d| !d.is_finite()) {
        return Err(Error::numeric(format!("non-finite desired output at neuron {i}"), 0));
    }
    if let Some(i) = desired.iter().position(|d| *d < 0.0) {
        return Err(Error::invalid(format!("negative desired output at neuron {i}")));
    }
    let mut next = state.clone();
    let mut frame = SpikeFrame::zeros(desired.len());
    accumulate_into(&mut next, desired, &mut frame);
    Ok((frame, next))
}

/// One S-LCA step: threshold, discretize, then integrate with the spike
/// output in the feedback term.
pub fn slca_step(
    mstate: &MembraneState,
    astate: &AccumulatorState,
    dict: &Dictionary,
    input: &[f64],
    params: &LcaParams,
) -> Result<(MembraneState, AccumulatorState, SpikeFrame)> {
    if astate.carry.len() != dict.element_count() {
        return Err(Error::invalid("accumulator size does not match dictionary"));
    }
    let desired: SparseCode = lca::soft_threshold(&mstate.u, params.lambda);
    let (spikes, astate) = accumulate_step(astate, &desired)
        .map_err(|e| e.context(format!("step {}", mstate.step_index)))?;
    let mstate = lca::lca_step(mstate, dict, input, params, &spikes.value)?;
    Ok((mstate, astate, spikes))
}

/// Hot-loop variant of [`slca_step`] working on reusable buffers.
pub(crate) fn slca_step_in_place(
    mstate: &mut MembraneState,
    astate: &mut AccumulatorState,
    dict: &Dictionary,
    input: &[f64],
    params: &LcaParams,
    desired: &mut [f64],
    frame: &mut SpikeFrame,
    scratch: &mut StepScratch,
    exec: Execution,
) -> Result<f64> {
    lca::soft_threshold_into(&mstate.u, params.lambda, desired);
    accumulate_into(astate, desired, frame);
    lca::step_in_place(mstate, dict, input, params.rate(), &frame.value, scratch, exec)
}

/// One nonzero raster cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterEntry {
    pub step: usize,
    pub neuron: usize,
    pub count: u64,
}

/// Writes `step,neuron,count` CSV, nonzero counts only.
pub fn write_raster_csv<W: Write>(mut w: W, raster: &[RasterEntry]) -> std::io::Result<()> {
    writeln!(w, "step,neuron,count")?;
    for e in raster {
        writeln!(w, "{},{},{}", e.step, e.neuron, e.count)?;
    }
    Ok(())
}

/// Runs S-LCA over one display period of `params.steps` steps from rest.
/// The returned code is the filter output at period end.
pub fn run_spiking_inference(
    dict: &Dictionary,
    input: &[f64],
    params: &LcaParams,
    spike_height: f64,
    filter: FilterSpec,
    record_raster: bool,
) -> Result<PeriodOutput> {
    check_spike_height(spike_height)?;
    let period = DisplayPeriod {
        params: *params,
        spike_height: Some(spike_height),
        filter,
        record_raster,
        ..DisplayPeriod::default()
    };
    period::run(dict, input, &period, None)
}
