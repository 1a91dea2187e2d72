//! Training schedule, evaluation, sweeps and run artifacts.
//!
//! One epoch visits every training sample once (shuffled with the run
//! seed). Each visit is one display period of inference, optionally
//! preceded by a zero-input gap, followed by a single Hebbian update from
//! the period-end (filtered) code and its residual.

mod config;
mod conv;
mod metrics;
mod sweep;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{ClassifierSpec, DatasetSpec, DictSize, ExperimentConfig};
pub use conv::{conv_check, conv_equivalence_check, ConvCheck, ConvDictionary, CONV_TOLERANCE};
pub use metrics::{rmse, sparsity, summarize, Summary};
pub use sweep::{run_sweep, SweepAxis, SweepRow, SweepTable};

use crate::classifier::{self, FeatureScheme};
use crate::data::{self, LabeledSample};
use crate::dictionary::{Dictionary, InputDims};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::period::{self, DisplayPeriod, PeriodState};

/// Loaded train/validation split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dims: InputDims,
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(train: Vec<LabeledSample>, val: Vec<LabeledSample>) -> Result<Self> {
        let dims = train
            .first()
            .or(val.first())
            .map(|s| s.input.dims)
            .ok_or_else(|| Error::invalid("dataset is empty"))?;
        if train.iter().chain(&val).any(|s| s.input.dims != dims) {
            return Err(Error::invalid("samples differ in shape"));
        }
        Ok(Self { dims, train, val })
    }

    pub fn load(spec: &DatasetSpec, run_seed: u64) -> Result<Self> {
        match spec {
            DatasetSpec::Synthetic { seed, spec } => {
                let ds = data::generate_synthetic(seed.unwrap_or(run_seed), spec)?;
                Self::new(ds.train, ds.val)
            }
            DatasetSpec::Mixture { seed, spec } => {
                let ds = data::generate_mixture(seed.unwrap_or(run_seed), spec)?;
                Self::new(ds.train, ds.val)
            }
            DatasetSpec::Cifar {
                train_path,
                val_path,
                crop,
                train_limit,
                val_count,
            } => {
                let mut train = data::load_cifar(train_path, *crop)?;
                let val = match val_path {
                    Some(p) => data::load_cifar(p, *crop)?,
                    None => {
                        let keep = train.len().saturating_sub(*val_count);
                        train.split_off(keep)
                    }
                };
                if let Some(limit) = train_limit {
                    train.truncate(*limit);
                }
                Self::new(train, val)
            }
            DatasetSpec::Events {
                train_dir,
                val_dir,
                framing,
            } => Self::new(
                data::load_event_dir(train_dir, framing)?,
                data::load_event_dir(val_dir, framing)?,
            ),
        }
    }

    pub fn classes(&self) -> usize {
        self.train.iter().chain(&self.val).map(|s| s.label + 1).max().unwrap_or(0)
    }
}

/// Frozen-dictionary pass over a sample set.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    /// RMSE of reconstructions from the filtered period-end code.
    pub rmse: f64,
    /// RMSE of reconstructions from the raw last-step output.
    pub rmse_unfiltered: f64,
    /// Mean percentage of active elements in the filtered code.
    pub sparsity_pct: f64,
    pub max_spikes_per_step: u64,
    /// Mean spikes per neuron per step.
    pub mean_spike_rate: f64,
    /// Cumulative activation per element, for ranking.
    pub activity: Vec<f64>,
    pub codes: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
}

/// Runs one display period per sample (from rest) with `dict` held fixed.
pub fn evaluate_dictionary(
    dict: &Dictionary,
    samples: &[LabeledSample],
    period: &DisplayPeriod,
    features: FeatureScheme,
    exec: Execution,
) -> Result<EvalSummary> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    let outs = exec::map(exec, samples, |_, s| {
        let out = period::run(dict, &s.input.values, period, None)?;
        let filtered = dict.residual(&s.input.values, &out.code)?;
        let raw = dict.residual(&s.input.values, &out.raw)?;
        let se = filtered.iter().map(|v| v * v).sum::<f64>();
        let se_raw = raw.iter().map(|v| v * v).sum::<f64>();
        let feature = match features {
            FeatureScheme::Final => out.code.clone(),
            FeatureScheme::MeanLastHalf => out.mean_last_half.clone(),
        };
        Ok::<_, Error>((out, se, se_raw, feature))
    });
    let n = dict.element_count();
    let d = dict.input_len() as f64;
    let mut summary = EvalSummary {
        rmse: 0.0,
        rmse_unfiltered: 0.0,
        sparsity_pct: 0.0,
        max_spikes_per_step: 0,
        mean_spike_rate: 0.0,
        activity: vec![0.0; n],
        codes: Vec::with_capacity(samples.len()),
        features: Vec::with_capacity(samples.len()),
    };
    let (mut se, mut se_raw, mut spikes) = (0.0, 0.0, 0u64);
    for (i, r) in outs.into_iter().enumerate() {
        let (out, e, e_raw, feature) = r.map_err(|e| e.context(format!("sample {i}")))?;
        se += e;
        se_raw += e_raw;
        summary.sparsity_pct += metrics::sparsity(&out.code);
        summary.max_spikes_per_step = summary.max_spikes_per_step.max(out.max_spikes);
        spikes += out.total_spikes;
        for (a, v) in summary.activity.iter_mut().zip(&out.mean_last_half) {
            *a += v;
        }
        summary.codes.push(out.code);
        summary.features.push(feature);
    }
    let m = samples.len() as f64;
    summary.rmse = (se / (m * d)).sqrt();
    summary.rmse_unfiltered = (se_raw / (m * d)).sqrt();
    summary.sparsity_pct /= m;
    summary.mean_spike_rate = spikes as f64 / (m * n as f64 * period.params.steps as f64);
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// From the online pass (codes inferred before each update).
    pub rmse_train: f64,
    pub rmse_val: f64,
    pub rmse_val_unfiltered: f64,
    pub sparsity_pct: f64,
    pub accuracy: Option<f64>,
    pub max_spikes_per_step: u64,
    pub mean_spike_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub epochs: Vec<EpochMetrics>,
}

impl RunMetrics {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,rmse_train,rmse_val,sparsity_pct,accuracy,max_spikes_per_step")?;
        for e in &self.epochs {
            let acc = e.accuracy.map(|a| a.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.epoch, e.rmse_train, e.rmse_val, e.sparsity_pct, acc, e.max_spikes_per_step
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: RunMetrics,
    pub initial: Dictionary,
    pub dictionary: Dictionary,
    /// Validation pass with the final dictionary (absent when there is no
    /// validation data).
    pub final_eval: Option<EvalSummary>,
}

static STOP: AtomicBool = AtomicBool::new(false);

/// Asks running trainings to stop after the current sample.
pub fn request_stop() {
    STOP.store(true, Ordering::SeqCst);
}

pub fn stop_requested() -> bool {
    STOP.load(Ordering::SeqCst)
}

/// Name of the marker left in a run directory by an interrupted run.
pub const PARTIAL_MARKER: &str = "PARTIAL";

pub fn checkpoint_name(epoch: usize) -> String {
    format!("dict_epoch_{epoch}.lcad")
}

/// Writes the verbatim config text as `config.json`, creating `dir`.
pub fn write_config_echo(dir: &Path, text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join("config.json");
    fs::write(&p, text).map_err(|e| Error::io(p, e))
}

fn write_metrics(dir: &Path, metrics: &RunMetrics) -> Result<()> {
    let p = dir.join("metrics.csv");
    let mut buf = Vec::new();
    metrics.write_csv(&mut buf).expect("write to Vec");
    fs::write(&p, buf).map_err(|e| Error::io(p, e))
}

/// Full training run. With `out_dir`, writes `metrics.csv` and
/// `dict_epoch_<k>.lcad` there (the config echo is the caller's job).
pub fn run_training(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunResult> {
    config.validate()?;
    let dataset = Dataset::load(&config.dataset, config.seed)?;
    run_training_on(config, &dataset, out_dir)
}

pub fn run_training_on(config: &ExperimentConfig, dataset: &Dataset, out_dir: Option<&Path>) -> Result<RunResult> {
    config.validate()?;
    if dataset.train.is_empty() && config.epochs > 0 {
        return Err(Error::invalid("no training samples"));
    }
    let period = config.period()?;
    let gap_steps = config.gap_steps()?;
    let n = config.dictionary_size.resolve(dataset.dims.len())?;
    let initial = Dictionary::init_random(config.seed, n, dataset.dims)?;
    let mut dict = initial.clone();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        dict.save_checkpoint(dir.join(checkpoint_name(0)))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x05ee_d0f0_dde7_u64);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut metrics = RunMetrics::default();
    let mut carried: Option<PeriodState> = None;
    let mut final_eval = None;

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut se = 0.0;
        for chunk in order.chunks(config.update_batch) {
            if stop_requested() {
                if let Some(dir) = out_dir {
                    write_metrics(dir, &metrics)?;
                    let p = dir.join(PARTIAL_MARKER);
                    let note = format!("interrupted during epoch {epoch}; {} epochs complete\n", epoch - 1);
                    fs::write(&p, note).map_err(|e| Error::io(p, e))?;
                }
                return Err(Error::Interrupted { epoch });
            }
            if chunk.len() > 1 {
                let snapshot = &dict;
                let results = exec::map(config.execution, chunk, |_, &i| {
                    let x = &dataset.train[i].input.values;
                    let out = period::run(snapshot, x, &period, None)?;
                    let residual = snapshot.residual(x, &out.code)?;
                    Ok::<_, Error>((i, out.code, residual))
                });
                for r in results {
                    let (i, code, residual) = r.map_err(|e| e.context(format!("epoch {epoch}")))?;
                    se += residual.iter().map(|v| v * v).sum::<f64>();
                    dict.hebbian_update(&code, &residual, config.learning_rate)
                        .map_err(|e| e.context(format!("epoch {epoch}, sample {i}")))?;
                }
                continue;
            }
            let i = chunk[0];
            let sample = &dataset.train[i];
            let ctx = |e: Error| e.context(format!("epoch {epoch}, sample {i}"));
            let warm = if config.warm_start {
                let mut st = carried.take().unwrap_or_else(|| PeriodState::rest(&dict, &period));
                if config.reset_carry {
                    if let Some(acc) = st.accumulator.as_mut() {
                        acc.reset();
                    }
                }
                period::run_gap(&dict, &period, &mut st, gap_steps).map_err(ctx)?;
                Some(st)
            } else {
                // a gap from rest with zero input stays at rest
                None
            };
            let out = period::run(&dict, &sample.input.values, &period, warm).map_err(ctx)?;
            let residual = dict.residual(&sample.input.values, &out.code).map_err(ctx)?;
            se += residual.iter().map(|v| v * v).sum::<f64>();
            dict.hebbian_update(&out.code, &residual, config.learning_rate)
                .map_err(ctx)?;
            if config.warm_start {
                carried = Some(out.state);
            }
        }
        let rmse_train = (se / (dataset.train.len() * dataset.dims.len()) as f64).sqrt();

        let is_last = epoch == config.epochs;
        if epoch % config.eval_every == 0 || is_last {
            let eval = if dataset.val.is_empty() {
                None
            } else {
                Some(evaluate_epoch(config, dataset, &dict, &period)?)
            };
            let (row, summary) = match eval {
                Some((summary, accuracy)) => (
                    EpochMetrics {
                        epoch,
                        rmse_train,
                        rmse_val: summary.rmse,
                        rmse_val_unfiltered: summary.rmse_unfiltered,
                        sparsity_pct: summary.sparsity_pct,
                        accuracy,
                        max_spikes_per_step: summary.max_spikes_per_step,
                        mean_spike_rate: summary.mean_spike_rate,
                    },
                    Some(summary),
                ),
                None => (
                    EpochMetrics {
                        epoch,
                        rmse_train,
                        rmse_val: f64::NAN,
                        rmse_val_unfiltered: f64::NAN,
                        sparsity_pct: f64::NAN,
                        accuracy: None,
                        max_spikes_per_step: 0,
                        mean_spike_rate: 0.0,
                    },
                    None,
                ),
            };
            log::info!(
                "epoch {epoch}: rmse_train={:.4} rmse_val={:.4} sparsity={:.2}% max_spikes={}",
                row.rmse_train,
                row.rmse_val,
                row.sparsity_pct,
                row.max_spikes_per_step
            );
            metrics.epochs.push(row);
            if is_last {
                final_eval = summary;
            }
        }
        if let Some(dir) = out_dir {
            let periodic = config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0;
            if periodic || is_last {
                dict.save_checkpoint(dir.join(checkpoint_name(epoch)))?;
            }
            write_metrics(dir, &metrics)?;
        }
    }
    if let Some(dir) = out_dir {
        write_metrics(dir, &metrics)?;
    }
    Ok(RunResult {
        metrics,
        initial,
        dictionary: dict,
        final_eval,
    })
}

fn evaluate_epoch(
    config: &ExperimentConfig,
    dataset: &Dataset,
    dict: &Dictionary,
    period: &DisplayPeriod,
) -> Result<(EvalSummary, Option<f64>)> {
    let scheme = config
        .classifier
        .as_ref()
        .map(|c| c.features)
        .unwrap_or_default();
    let val = evaluate_dictionary(dict, &dataset.val, period, scheme, config.execution)?;
    let accuracy = match &config.classifier {
        Some(spec) if !dataset.train.is_empty() => {
            let train = evaluate_dictionary(dict, &dataset.train, period, spec.features, config.execution)?;
            let labels: Vec<usize> = dataset.train.iter().map(|s| s.label).collect();
            let model = classifier::train(&train.features, &labels, &spec.train)?;
            let val_labels: Vec<usize> = dataset.val.iter().map(|s| s.label).collect();
            Some(classifier::evaluate(&model, &val.features, &val_labels, config.execution)?)
        }
        _ => None,
    };
    Ok((val, accuracy))
}

/// Latent features of a sample set for classifier training/evaluation.
pub fn features_for(
    dict: &Dictionary,
    samples: &[LabeledSample],
    config: &ExperimentConfig,
    scheme: FeatureScheme,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let period = config.period()?;
    let eval = evaluate_dictionary(dict, samples, &period, scheme, config.execution)?;
    Ok((eval.features, samples.iter().map(|s| s.label).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use crate::filters::FilterSpec;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(DatasetSpec::Synthetic {
            seed: Some(1),
            spec: SyntheticSpec {
                height: 6,
                width: 6,
                frames: 2,
                train_per_class: 3,
                val_per_class: 2,
                density: 0.3,
                ..Default::default()
            },
        });
        cfg.display_ms = 60.0;
        cfg.tau = 10.0;
        cfg.lambda = 0.3;
        cfg.epochs = 3;
        cfg.learning_rate = 0.05;
        cfg.seed = 4;
        cfg
    }

    #[test]
    fn zero_epochs_keep_initialization() {
        let mut cfg = small_config();
        cfg.epochs = 0;
        let r = run_training(&cfg, None).unwrap();
        assert_eq!(r.dictionary, r.initial);
        assert!(r.metrics.epochs.is_empty());
    }

    #[test]
    fn rerun_is_bitwise_identical() {
        let mut cfg = small_config();
        cfg.spike_height = 1.0;
        cfg.filter = FilterSpec::Boxcar { window_ms: 20.0 };
        let a = run_training(&cfg, None).unwrap();
        let b = run_training(&cfg, None).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.dictionary.to_checkpoint_bytes(), b.dictionary.to_checkpoint_bytes());
    }

    #[test]
    fn batched_updates_are_deterministic() {
        let mut cfg = small_config();
        cfg.update_batch = 4;
        cfg.execution = Execution::Sequential;
        let a = run_training(&cfg, None).unwrap();
        cfg.execution = Execution::Parallel;
        let b = run_training(&cfg, None).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.dictionary, b.dictionary);
        cfg.update_batch = 1;
        let online = run_training(&cfg, None).unwrap();
        assert_ne!(online.dictionary, a.dictionary);
        cfg.update_batch = 2;
        cfg.warm_start = true;
        assert!(matches!(run_training(&cfg, None), Err(Error::Config(_))));
    }

    #[test]
    fn sequential_and_parallel_runs_agree() {
        let mut cfg = small_config();
        cfg.execution = Execution::Sequential;
        let a = run_training(&cfg, None).unwrap();
        cfg.execution = Execution::Parallel;
        let b = run_training(&cfg, None).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.dictionary, b.dictionary);
    }

    #[test]
    fn run_dir_contents() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.checkpoint_every = 2;
        run_training(&cfg, Some(dir.path())).unwrap();
        for k in [0, 2, 3] {
            assert!(dir.path().join(checkpoint_name(k)).exists(), "epoch {k}");
        }
        assert!(!dir.path().join(checkpoint_name(1)).exists());
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,rmse_train,rmse_val,sparsity_pct,accuracy,max_spikes_per_step");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn warm_start_with_gap_runs() {
        let mut cfg = small_config();
        cfg.warm_start = true;
        cfg.gap_ms = 20.0;
        cfg.spike_height = 0.5;
        let r = run_training(&cfg, None).unwrap();
        assert!(r.metrics.last().unwrap().rmse_val.is_finite());
    }

    #[test]
    fn classifier_accuracy_is_reported() {
        let mut cfg = small_config();
        cfg.classifier = Some(ClassifierSpec::default());
        let r = run_training(&cfg, None).unwrap();
        let acc = r.metrics.last().unwrap().accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}
