//! Non-spiking LCA: leaky-integrator membrane dynamics with a rectified
//! soft-threshold output.
//!
//! ```text
//! a  = T_λ(u) = max(u − λ, 0)
//! u ← u + (dt/τ)·(−u + Φᵀ(I − Φ·a) + a)          (forward Euler)
//! E  = ½‖I − Φa‖² + λ‖a‖₁
//! ```

use std::io::Write;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg;

/// Rectified activations, entries ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode(Vec<f64>);

impl SparseCode {
    pub fn zeros(n: usize) -> Self {
        SparseCode(vec![0.0; n])
    }

    /// Wraps `values`, rejecting negative or non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!(
                "code entry {i} = {} is not a finite nonnegative value",
                values[i]
            )));
        }
        Ok(SparseCode(values))
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|v| **v > 0.0).count()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for SparseCode {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembraneState {
    pub u: Vec<f64>,
    pub step_index: usize,
}

impl MembraneState {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            step_index: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LcaParams {
    pub lambda: f64,
    /// Timestep, ms.
    pub dt: f64,
    /// Membrane time constant, ms.
    pub tau: f64,
    /// Timesteps per display period.
    pub steps: usize,
}

impl Default for LcaParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            dt: 1.0,
            tau: 100.0,
            steps: 2000,
        }
    }
}

impl LcaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= self.tau && self.tau.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < dt <= tau, got dt={} tau={}",
                self.dt, self.tau
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be >= 1"));
        }
        Ok(())
    }

    pub fn rate(&self) -> f64 {
        self.dt / self.tau
    }
}

/// `aᵢ = uᵢ − λ` where `uᵢ > λ`, else 0.
pub fn soft_threshold(u: &[f64], lambda: f64) -> SparseCode {
    let mut out = vec![0.0; u.len()];
    soft_threshold_into(u, lambda, &mut out);
    SparseCode(out)
}

pub(crate) fn soft_threshold_into(u: &[f64], lambda: f64, out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(u) {
        *o = if v > lambda { v - lambda } else { 0.0 };
    }
}

/// `½‖I − Φa‖² + λ‖a‖₁`
pub fn energy(dict: &Dictionary, input: &[f64], code: &[f64], lambda: f64) -> Result<f64> {
    let r = dict.residual(input, code)?;
    Ok(0.5 * linalg::dot(&r, &r) + lambda * linalg::norm1(code))
}

/// Reusable buffers for the Euler update so the hot loop never allocates.
#[derive(Debug, Clone)]
pub(crate) struct StepScratch {
    pub residual: Vec<f64>,
    pub drive: Vec<f64>,
}

impl StepScratch {
    pub fn new(dict: &Dictionary) -> Self {
        Self {
            residual: vec![0.0; dict.input_len()],
            drive: vec![0.0; dict.element_count()],
        }
    }
}

/// Euler update in place; returns `‖Δu‖∞`. `output` is whatever enters the
/// reconstruction term (graded code for LCA, spike values for S-LCA).
pub(crate) fn step_in_place(
    state: &mut MembraneState,
    dict: &Dictionary,
    input: &[f64],
    rate: f64,
    output: &[f64],
    scratch: &mut StepScratch,
    exec: Execution,
) -> Result<f64> {
    scratch.residual.copy_from_slice(input);
    for (a, row) in output.iter().zip(dict.elements()) {
        if *a != 0.0 {
            linalg::axpy(-*a, row, &mut scratch.residual);
        }
    }
    dict.analyze_into(&scratch.residual, &mut scratch.drive, exec);
    let mut du_inf = 0.0f64;
    for ((u, &b), &a) in state.u.iter_mut().zip(&scratch.drive).zip(output) {
        let du = rate * (-*u + b + a);
        *u += du;
        du_inf = du_inf.max(du.abs());
    }
    if !du_inf.is_finite() || !linalg::all_finite(&state.u) {
        return Err(Error::numeric("membrane potential became non-finite", state.step_index));
    }
    state.step_index += 1;
    Ok(du_inf)
}

fn check_dims(dict: &Dictionary, u: &[f64], input: &[f64]) -> Result<()> {
    if u.len() != dict.element_count() {
        return Err(Error::invalid(format!(
            "membrane state has {} neurons, dictionary has {}",
            u.len(),
            dict.element_count()
        )));
    }
    if input.len() != dict.input_len() {
        return Err(Error::invalid(format!(
            "input has length {}, dictionary expects {}",
            input.len(),
            dict.input_len()
        )));
    }
    Ok(())
}

/// One forward-Euler step of the membrane dynamics.
pub fn lca_step(
    state: &MembraneState,
    dict: &Dictionary,
    input: &[f64],
    params: &LcaParams,
    output_code: &[f64],
) -> Result<MembraneState> {
    check_dims(dict, &state.u, input)?;
    if output_code.len() != dict.element_count() {
        return Err(Error::invalid("output code length does not match dictionary"));
    }
    let mut next = state.clone();
    let mut scratch = StepScratch::new(dict);
    step_in_place(
        &mut next,
        dict,
        input,
        params.rate(),
        output_code,
        &mut scratch,
        Execution::Sequential,
    )?;
    Ok(next)
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub energy: f64,
    pub active: usize,
    pub du_inf: f64,
}

/// Writes `step,energy,active,du_inf` CSV.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[StepRecord]) -> std::io::Result<()> {
    writeln!(w, "step,energy,active,du_inf")?;
    for r in trace {
        writeln!(w, "{},{:e},{},{:e}", r.step, r.energy, r.active, r.du_inf)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct InferenceOptions {
    /// Start from this state instead of `u = 0`.
    pub warm_start: Option<MembraneState>,
    /// Record energy / activity per step (costs one extra synthesis per step).
    pub trace: bool,
    /// Stop once `‖Δu‖∞` falls below this.
    pub early_stop: Option<f64>,
    pub exec: Execution,
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub code: SparseCode,
    pub state: MembraneState,
    pub trace: Option<Vec<StepRecord>>,
    /// Steps actually run (less than `params.steps` on early stop).
    pub steps_run: usize,
    pub converged: bool,
}

/// Integrates the dynamics for `params.steps` steps (or until early stop)
/// and returns the final thresholded code.
pub fn run_inference(
    dict: &Dictionary,
    input: &[f64],
    params: &LcaParams,
    opts: &InferenceOptions,
) -> Result<Inference> {
    params.validate()?;
    let n = dict.element_count();
    let mut state = opts
        .warm_start
        .clone()
        .unwrap_or_else(|| MembraneState::zeros(n));
    check_dims(dict, &state.u, input)?;

    let rate = params.rate();
    let mut scratch = StepScratch::new(dict);
    let mut code = vec![0.0; n];
    let mut trace = opts.trace.then(Vec::new);
    let mut steps_run = 0;
    let mut converged = false;

    for _ in 0..params.steps {
        soft_threshold_into(&state.u, params.lambda, &mut code);
        let du = step_in_place(&mut state, dict, input, rate, &code, &mut scratch, opts.exec)?;
        steps_run += 1;
        if let Some(t) = trace.as_mut() {
            soft_threshold_into(&state.u, params.lambda, &mut code);
            t.push(StepRecord {
                step: state.step_index,
                energy: energy(dict, input, &code, params.lambda)?,
                active: code.iter().filter(|v| **v > 0.0).count(),
                du_inf: du,
            });
        }
        if opts.early_stop.is_some_and(|tol| du < tol) {
            converged = true;
            break;
        }
    }
    soft_threshold_into(&state.u, params.lambda, &mut code);
    Ok(Inference {
        code: SparseCode(code),
        state,
        trace,
        steps_run,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::InputDims;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(&[0.6], 0.6)[0], 0.0);
        assert!((soft_threshold(&[1.0], 0.6)[0] - 0.4).abs() < 1e-15);
        assert_eq!(soft_threshold(&[-0.5], 0.6)[0], 0.0);
    }

    #[test]
    fn zero_input_is_a_fixed_point() {
        let dict = Dictionary::init_random(1, 4, InputDims::flat(3)).unwrap();
        let params = LcaParams::default();
        let s = MembraneState::zeros(4);
        let next = lca_step(&s, &dict, &[0.0; 3], &params, &[0.0; 4]).unwrap();
        assert_eq!(next.u, vec![0.0; 4]);
        assert_eq!(next.step_index, 1);
    }

    #[test]
    fn one_dim_identity_converges_to_input() {
        let dict = Dictionary::from_rows(&[vec![1.0]], InputDims::flat(1)).unwrap();
        let params = LcaParams {
            lambda: 0.0,
            dt: 1.0,
            tau: 100.0,
            steps: 1000,
        };
        let c = 0.8;
        let out = run_inference(&dict, &[c], &params, &InferenceOptions::default()).unwrap();
        // u̇ = −u + (c − a) + a = c − u, so a = u → c with rate 1/τ.
        let closed_form = c * (1.0 - (1.0 - 0.01f64).powi(1000));
        assert!((out.code[0] - closed_form).abs() < 1e-12);
        assert!((out.code[0] - c).abs() < 1e-3);
    }

    #[test]
    fn trajectory_matches_naive_euler_oracle() {
        let dict = Dictionary::init_random(42, 3, InputDims::flat(3)).unwrap();
        let phi: Vec<Vec<f64>> = dict.elements().map(|r| r.to_vec()).collect();
        let input = [0.9, -0.3, 0.5];
        let params = LcaParams {
            lambda: 0.05,
            dt: 1.0,
            tau: 10.0,
            steps: 1,
        };
        let mut state = MembraneState::zeros(3);
        let mut oracle = [0.0f64; 3];
        for _ in 0..200 {
            let a = soft_threshold(&state.u, params.lambda);
            state = lca_step(&state, &dict, &input, &params, &a).unwrap();

            let ao: Vec<f64> = oracle.iter().map(|&u| if u > 0.05 { u - 0.05 } else { 0.0 }).collect();
            let mut r = input;
            for i in 0..3 {
                for j in 0..3 {
                    r[j] -= phi[i][j] * ao[i];
                }
            }
            let mut next = oracle;
            for i in 0..3 {
                let b: f64 = (0..3).map(|j| phi[i][j] * r[j]).sum();
                next[i] = oracle[i] + 0.1 * (-oracle[i] + b + ao[i]);
            }
            oracle = next;
            for i in 0..3 {
                assert!((state.u[i] - oracle[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_code() {
        let dict = Dictionary::init_random(2, 5, InputDims::flat(4)).unwrap();
        let params = LcaParams {
            steps: 50,
            ..Default::default()
        };
        let out = run_inference(&dict, &[0.0; 4], &params, &InferenceOptions::default()).unwrap();
        assert_eq!(out.code.active_count(), 0);
    }

    #[test]
    fn input_equal_to_element_selects_it() {
        let dict = Dictionary::init_random(8, 6, InputDims::flat(10)).unwrap();
        let params = LcaParams {
            lambda: 0.1,
            dt: 1.0,
            tau: 10.0,
            steps: 2000,
        };
        for target in 0..6 {
            let input = dict.element(target).to_vec();
            let out = run_inference(&dict, &input, &params, &InferenceOptions::default()).unwrap();
            let argmax = (0..6).max_by(|&a, &b| out.code[a].total_cmp(&out.code[b])).unwrap();
            assert_eq!(argmax, target);

            // brute force over one-hot codes: the best single-element code
            // (optimal amplitude max(⟨Φᵢ,I⟩ − λ, 0)) is also the target
            let best = (0..6)
                .map(|i| {
                    let amp = (linalg::dot(dict.element(i), &input) - 0.1).max(0.0);
                    let mut c = vec![0.0; 6];
                    c[i] = amp;
                    (i, energy(&dict, &input, &c, 0.1).unwrap())
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            assert_eq!(best, target);
        }
    }

    #[test]
    fn orthonormal_pair_matches_closed_form() {
        let dict = Dictionary::from_rows(&[vec![0.6, 0.8], vec![-0.8, 0.6]], InputDims::flat(2)).unwrap();
        let input: Vec<f64> = (0..2).map(|j| dict.element(0)[j] + 0.1 * dict.element(1)[j]).collect();
        let params = LcaParams {
            lambda: 0.3,
            dt: 1.0,
            tau: 100.0,
            steps: 3000,
        };
        let out = run_inference(&dict, &input, &params, &InferenceOptions::default()).unwrap();
        assert!((out.code[0] - 0.7).abs() < 1e-3);
        assert!(out.code[1].abs() < 1e-3);
    }

    #[test]
    fn energy_cases() {
        let dict = Dictionary::init_random(4, 3, InputDims::flat(5)).unwrap();
        let a = [0.2, 0.0, 1.1];
        let input = dict.synthesize(&a).unwrap();
        assert!(energy(&dict, &input, &a, 0.0).unwrap() < 1e-24);
        let norm_sq: f64 = input.iter().map(|v| v * v).sum();
        assert!((energy(&dict, &input, &[0.0; 3], 0.5).unwrap() - 0.5 * norm_sq).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let code = [0.3, 0.7, 0.1];
        let mut rec = vec![0.0; 5];
        for i in 0..3 {
            for j in 0..5 {
                rec[j] += code[i] * dict.element(i)[j];
            }
        }
        let oracle = 0.5 * x.iter().zip(&rec).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            + 0.25 * (0.3 + 0.7 + 0.1);
        assert!((energy(&dict, &x, &code, 0.25).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        let ok = LcaParams::default();
        assert!(ok.validate().is_ok());
        assert!(LcaParams { dt: 0.0, ..ok }.validate().is_err());
        assert!(LcaParams { dt: 200.0, ..ok }.validate().is_err());
        assert!(LcaParams { lambda: -0.1, ..ok }.validate().is_err());
        assert!(LcaParams { steps: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn non_finite_input_reports_step() {
        let dict = Dictionary::init_random(4, 3, InputDims::flat(2)).unwrap();
        let params = LcaParams {
            steps: 10,
            ..Default::default()
        };
        let err = run_inference(&dict, &[f64::NAN, 0.0], &params, &InferenceOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Numeric { step: 0, .. }));
    }

    #[test]
    fn sparsity_is_monotone_in_lambda() {
        for seed in 0..5 {
            let dict = Dictionary::init_random(seed, 30, InputDims::flat(20)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let input: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut last = usize::MAX;
            for lambda in [0.1, 0.3, 0.6, 1.0] {
                let params = LcaParams {
                    lambda,
                    dt: 1.0,
                    tau: 10.0,
                    steps: 20_000,
                };
                let opts = InferenceOptions {
                    early_stop: Some(1e-9),
                    ..Default::default()
                };
                let active = run_inference(&dict, &input, &params, &opts).unwrap().code.active_count();
                assert!(active <= last, "seed {seed}: {active} active at λ={lambda} > {last}");
                last = active;
            }
        }
    }

    #[test]
    fn trace_csv_has_header() {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[StepRecord { step: 1, energy: 0.5, active: 2, du_inf: 0.1 }]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("step,energy,active,du_inf\n1,"));
    }

    proptest! {
        #[test]
        fn soft_threshold_is_lipschitz_and_idempotent(
            u in proptest::collection::vec(-5.0f64..5.0, 1..20),
            v_shift in proptest::collection::vec(-1.0f64..1.0, 20),
            lambda in 0.0f64..2.0,
        ) {
            let v: Vec<f64> = u.iter().zip(&v_shift).map(|(a, b)| a + b).collect();
            let a = soft_threshold(&u, lambda);
            let b = soft_threshold(&v, lambda);
            for i in 0..u.len() {
                prop_assert!(a[i] >= 0.0);
                prop_assert!((a[i] - b[i]).abs() <= (u[i] - v[i]).abs() + 1e-15);
            }
            let once = soft_threshold(&u, 0.0);
            let twice = soft_threshold(&once, 0.0);
            prop_assert_eq!(once, twice);
        }
    }
}
