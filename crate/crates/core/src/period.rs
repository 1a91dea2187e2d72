//! Display-period runner shared by graded and spiking inference.
//!
//! At every step the network emits an output frame (graded code for LCA,
//! spike values for S-LCA). Frames feed back into the membrane update and
//! are passed through the configured [`CodeFilter`](crate::filters::CodeFilter);
//! the filtered stream is what reconstructions, dictionary updates and
//! classifier features are computed from.

use serde::{Deserialize, Serialize};

use crate::accumulator::{self, AccumulatorState, RasterEntry, SpikeFrame};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::filters::FilterSpec;
use crate::lca::{self, LcaParams, MembraneState, StepRecord, StepScratch};

/// How the input vector drives the membranes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InputEncoding {
    /// The input is a constant current for the whole period.
    #[default]
    Constant,
    /// Each pixel magnitude is discretized by its own accumulator with the
    /// given spike height; the sign is reapplied. Firing rate is then
    /// proportional to pixel value.
    Rate { spike_height: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplayPeriod {
    pub params: LcaParams,
    /// `None` runs graded LCA.
    pub spike_height: Option<f64>,
    pub filter: FilterSpec,
    pub encoding: InputEncoding,
    pub record_raster: bool,
    /// Keep every filtered frame.
    pub record_codes: bool,
    /// Keep per-step energy diagnostics.
    pub record_trace: bool,
    pub exec: Execution,
}

impl Default for DisplayPeriod {
    fn default() -> Self {
        Self {
            params: LcaParams::default(),
            spike_height: None,
            filter: FilterSpec::Identity,
            encoding: InputEncoding::Constant,
            record_raster: false,
            record_codes: false,
            record_trace: false,
            exec: Execution::Sequential,
        }
    }
}

impl DisplayPeriod {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if let Some(s) = self.spike_height {
            accumulator::check_spike_height(s)?;
        }
        if let InputEncoding::Rate { spike_height } = self.encoding {
            accumulator::check_spike_height(spike_height)?;
        }
        self.filter.validate(self.params.dt)
    }
}

/// Everything that can carry over between periods when warm-starting.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodState {
    pub membrane: MembraneState,
    pub accumulator: Option<AccumulatorState>,
    pub input_carry: Option<AccumulatorState>,
}

impl PeriodState {
    pub fn rest(dict: &Dictionary, period: &DisplayPeriod) -> Self {
        let n = dict.element_count();
        Self {
            membrane: MembraneState::zeros(n),
            accumulator: period.spike_height.map(|s| AccumulatorState {
                carry: vec![0.0; n],
                carry_low: vec![0.0; n],
                spike_height: s,
            }),
            input_carry: match period.encoding {
                InputEncoding::Constant => None,
                InputEncoding::Rate { spike_height } => Some(AccumulatorState {
                    carry: vec![0.0; dict.input_len()],
                    carry_low: vec![0.0; dict.input_len()],
                    spike_height,
                }),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct PeriodOutput {
    /// Filter output after the last step.
    pub code: Vec<f64>,
    /// Unfiltered output frame of the last step.
    pub raw: Vec<f64>,
    /// Mean of the filter output over the last half of the period.
    pub mean_last_half: Vec<f64>,
    /// Largest spike count any neuron emitted in one step (0 when graded).
    pub max_spikes: u64,
    pub total_spikes: u64,
    pub raster: Option<Vec<RasterEntry>>,
    pub codes: Option<Vec<Vec<f64>>>,
    pub trace: Option<Vec<StepRecord>>,
    pub state: PeriodState,
}

/// First step index included in the "last half" average.
pub fn last_half_start(steps: usize) -> usize {
    steps / 2
}

struct InputDrive {
    encoded: Vec<f64>,
}

impl InputDrive {
    fn next<'a>(&'a mut self, input: &'a [f64], carry: Option<&mut AccumulatorState>) -> &'a [f64] {
        match carry {
            Some(acc) => {
                let s = acc.spike_height;
                for (((e, &x), c), l) in self.encoded.iter_mut().zip(input).zip(acc.carry.iter_mut()).zip(acc.carry_low.iter_mut()) {
                    let (count, hi, lo) = accumulator::discretize(*c, *l, x.abs(), s);
                    (*c, *l) = (hi, lo);
                    *e = (count as f64 * s).copysign(x);
                }
                &self.encoded
            }
            None => input,
        }
    }
}

fn check_state(dict: &Dictionary, input: &[f64], period: &DisplayPeriod, state: &PeriodState) -> Result<()> {
    if input.len() != dict.input_len() {
        return Err(Error::invalid(format!(
            "input has length {}, dictionary expects {}",
            input.len(),
            dict.input_len()
        )));
    }
    if state.membrane.u.len() != dict.element_count() {
        return Err(Error::invalid("warm-start state size does not match dictionary"));
    }
    if period.spike_height.is_some() != state.accumulator.is_some() {
        return Err(Error::invalid("warm-start state does not match spiking mode"));
    }
    if state.accumulator.as_ref().is_some_and(|a| a.len() != dict.element_count() || a.carry_low.len() != a.len()) {
        return Err(Error::invalid("accumulator size does not match dictionary"));
    }
    let rate = matches!(period.encoding, InputEncoding::Rate { .. });
    match &state.input_carry {
        None if rate => return Err(Error::invalid("warm-start state lacks the input encoder")),
        Some(_) if !rate => return Err(Error::invalid("warm-start state has an input encoder but the input is constant")),
        Some(a) if a.len() != input.len() || a.carry_low.len() != a.len() => {
            return Err(Error::invalid("input encoder size does not match the input"))
        }
        _ => {}
    }
    Ok(())
}

/// Runs one display period on `input`, from rest or from `warm`.
pub fn run(dict: &Dictionary, input: &[f64], period: &DisplayPeriod, warm: Option<PeriodState>) -> Result<PeriodOutput> {
    period.validate()?;
    let mut state = warm.unwrap_or_else(|| PeriodState::rest(dict, period));
    check_state(dict, input, period, &state)?;

    let n = dict.element_count();
    let steps = period.params.steps;
    let half = last_half_start(steps);
    let mut filter = period.filter.build(n, period.params.dt)?;
    let mut scratch = StepScratch::new(dict);
    let mut desired = vec![0.0; n];
    let mut frame = SpikeFrame::zeros(n);
    let mut drive = InputDrive {
        encoded: vec![0.0; dict.input_len()],
    };
    let mut tail_sum = vec![0.0; n];
    let mut max_spikes = 0u64;
    let mut total_spikes = 0u64;
    let mut raster = period.record_raster.then(Vec::new);
    let mut codes = period.record_codes.then(Vec::new);
    let mut trace = period.record_trace.then(Vec::new);

    for t in 0..steps {
        let x = drive.next(input, state.input_carry.as_mut());
        let du = match state.accumulator.as_mut() {
            Some(acc) => {
                let du = accumulator::slca_step_in_place(
                    &mut state.membrane,
                    acc,
                    dict,
                    x,
                    &period.params,
                    &mut desired,
                    &mut frame,
                    &mut scratch,
                    period.exec,
                )?;
                max_spikes = max_spikes.max(frame.max_count());
                total_spikes += frame.total();
                if let Some(r) = raster.as_mut() {
                    r.extend(frame.counts.iter().enumerate().filter(|(_, c)| **c > 0).map(|(i, &c)| {
                        RasterEntry {
                            step: t,
                            neuron: i,
                            count: c,
                        }
                    }));
                }
                du
            }
            None => {
                lca::soft_threshold_into(&state.membrane.u, period.params.lambda, &mut frame.value);
                lca::step_in_place(
                    &mut state.membrane,
                    dict,
                    x,
                    period.params.rate(),
                    &frame.value,
                    &mut scratch,
                    period.exec,
                )?
            }
        };
        let smoothed = filter.step(&frame.value);
        if t >= half {
            for (s, v) in tail_sum.iter_mut().zip(smoothed) {
                *s += v;
            }
        }
        if let Some(c) = codes.as_mut() {
            c.push(smoothed.to_vec());
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(StepRecord {
                step: t,
                energy: lca::energy(dict, input, &frame.value, period.params.lambda)?,
                active: frame.value.iter().filter(|v| **v > 0.0).count(),
                du_inf: du,
            });
        }
    }

    let tail_len = (steps - half) as f64;
    tail_sum.iter_mut().for_each(|s| *s /= tail_len);
    Ok(PeriodOutput {
        code: filter.current().to_vec(),
        raw: frame.value,
        mean_last_half: tail_sum,
        max_spikes,
        total_spikes,
        raster,
        codes,
        trace,
        state,
    })
}

/// Advances `state` through `steps` steps of zero input (no filtering,
/// nothing recorded).
pub fn run_gap(dict: &Dictionary, period: &DisplayPeriod, state: &mut PeriodState, steps: usize) -> Result<()> {
    let n = dict.element_count();
    let zero = vec![0.0; dict.input_len()];
    let mut scratch = StepScratch::new(dict);
    let mut desired = vec![0.0; n];
    let mut frame = SpikeFrame::zeros(n);
    for _ in 0..steps {
        match state.accumulator.as_mut() {
            Some(acc) => {
                accumulator::slca_step_in_place(
                    &mut state.membrane,
                    acc,
                    dict,
                    &zero,
                    &period.params,
                    &mut desired,
                    &mut frame,
                    &mut scratch,
                    period.exec,
                )?;
            }
            None => {
                lca::soft_threshold_into(&state.membrane.u, period.params.lambda, &mut desired);
                lca::step_in_place(
                    &mut state.membrane,
                    dict,
                    &zero,
                    period.params.rate(),
                    &desired,
                    &mut scratch,
                    period.exec,
                )?;
            }
        }
    }
    Ok(())
}
