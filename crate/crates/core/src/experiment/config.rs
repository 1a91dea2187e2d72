//! Experiment configuration (JSON, unknown keys rejected).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::classifier::{FeatureScheme, TrainConfig};
use crate::data::{EventFraming, MixtureSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::filters::FilterSpec;
use crate::lca::LcaParams;
use crate::period::{DisplayPeriod, InputEncoding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Class-template event frames. `seed` defaults to the run seed.
    Synthetic {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        spec: SyntheticSpec,
    },
    /// Sparse mixtures of a hidden dictionary.
    Mixture {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        spec: MixtureSpec,
    },
    /// CIFAR-10 binary batches. Without `val_path`, the last `val_count`
    /// training records are held out.
    Cifar {
        train_path: PathBuf,
        #[serde(default)]
        val_path: Option<PathBuf>,
        #[serde(default = "default_crop")]
        crop: usize,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        val_count: usize,
    },
    /// Directories of canonical event recordings named `<label>_*.evt`.
    Events {
        train_dir: PathBuf,
        val_dir: PathBuf,
        #[serde(default)]
        framing: EventFraming,
    },
}

fn default_crop() -> usize {
    16
}

/// Absolute element count, or a ratio of the input dimension written as
/// `"1/2"` (under-complete) or `"x5"` (over-complete).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DictSize {
    Absolute(usize),
    Ratio(String),
}

impl Default for DictSize {
    fn default() -> Self {
        DictSize::Ratio("1/2".into())
    }
}

impl DictSize {
    pub fn resolve(&self, input_len: usize) -> Result<usize> {
        let n = match self {
            DictSize::Absolute(n) => *n,
            DictSize::Ratio(r) => {
                let r = r.trim();
                let bad = || Error::Config(format!("cannot parse dictionary size {r:?}"));
                if let Some(den) = r.strip_prefix("1/") {
                    let den: usize = den.trim().parse().map_err(|_| bad())?;
                    if den == 0 {
                        return Err(bad());
                    }
                    input_len / den
                } else if let Some(k) = r.strip_prefix('x').or_else(|| r.strip_suffix('x')) {
                    let k: usize = k.trim().parse().map_err(|_| bad())?;
                    k * input_len
                } else {
                    return Err(bad());
                }
            }
        };
        if n == 0 {
            return Err(Error::Config(format!(
                "dictionary size {self:?} resolves to zero elements for D = {input_len}"
            )));
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSpec {
    pub features: FeatureScheme,
    pub train: TrainConfig,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            features: FeatureScheme::MeanLastHalf,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub dictionary_size: DictSize,
    #[serde(default = "d::lambda")]
    pub lambda: f64,
    /// 0 selects graded (non-spiking) LCA.
    #[serde(default)]
    pub spike_height: f64,
    #[serde(default = "d::dt")]
    pub dt: f64,
    #[serde(default = "d::tau")]
    pub tau: f64,
    #[serde(default = "d::display_ms")]
    pub display_ms: f64,
    /// Zero-input interval before each sample.
    #[serde(default)]
    pub gap_ms: f64,
    #[serde(default = "d::epochs")]
    pub epochs: usize,
    #[serde(default = "d::learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default)]
    pub input_encoding: InputEncoding,
    /// Carry membrane (and accumulator) state across samples instead of
    /// resetting at each display period.
    #[serde(default)]
    pub warm_start: bool,
    /// With `warm_start`, still zero the accumulator carry per period.
    #[serde(default = "d::yes")]
    pub reset_carry: bool,
    #[serde(default = "d::yes")]
    pub shuffle: bool,
    #[serde(default)]
    pub classifier: Option<ClassifierSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Write `dict_epoch_<k>.lcad` every this many epochs (0: initial and
    /// final only).
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Evaluate every this many epochs; the final epoch is always evaluated.
    #[serde(default = "d::one")]
    pub eval_every: usize,
    #[serde(default)]
    pub execution: Execution,
    /// Samples inferred in parallel against one dictionary snapshot before
    /// their updates are applied in order. 1 is plain online learning.
    #[serde(default = "d::one")]
    pub update_batch: usize,
}

mod d {
    pub fn lambda() -> f64 {
        0.1
    }
    pub fn dt() -> f64 {
        1.0
    }
    pub fn tau() -> f64 {
        100.0
    }
    pub fn display_ms() -> f64 {
        2000.0
    }
    pub fn epochs() -> usize {
        1
    }
    pub fn learning_rate() -> f64 {
        0.005
    }
    pub fn yes() -> bool {
        true
    }
    pub fn one() -> usize {
        1
    }
}

fn whole_steps(ms: f64, dt: f64, what: &str) -> Result<usize> {
    let ratio = ms / dt;
    let r = ratio.round();
    if !(ratio.is_finite() && ratio >= 0.0 && (ratio - r).abs() < 1e-9) {
        return Err(Error::Config(format!("{what} = {ms} ms is not a whole number of dt = {dt} ms steps")));
    }
    Ok(r as usize)
}

impl ExperimentConfig {
    /// Default schedule around a dataset.
    pub fn new(dataset: DatasetSpec) -> Self {
        serde_json::from_value(serde_json::json!({ "dataset": dataset }))
            .expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn display_steps(&self) -> Result<usize> {
        whole_steps(self.display_ms, self.dt, "display_ms")
    }

    pub fn gap_steps(&self) -> Result<usize> {
        whole_steps(self.gap_ms, self.dt, "gap_ms")
    }

    pub fn is_spiking(&self) -> bool {
        self.spike_height > 0.0
    }

    pub fn params(&self) -> Result<LcaParams> {
        let p = LcaParams {
            lambda: self.lambda,
            dt: self.dt,
            tau: self.tau,
            steps: self.display_steps()?,
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn period(&self) -> Result<DisplayPeriod> {
        let period = DisplayPeriod {
            params: self.params()?,
            spike_height: self.is_spiking().then_some(self.spike_height),
            filter: self.filter,
            encoding: self.input_encoding,
            exec: crate::exec::Execution::Sequential,
            ..DisplayPeriod::default()
        };
        period.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(period)
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        if !(self.spike_height >= 0.0 && self.spike_height.is_finite()) {
            return Err(Error::Config("spike_height must be >= 0".into()));
        }
        self.period()?;
        self.gap_steps()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if self.update_batch == 0 {
            return Err(Error::Config("update_batch must be >= 1".into()));
        }
        if self.update_batch > 1 && self.warm_start {
            return Err(Error::Config("update_batch > 1 cannot carry state between samples (warm_start)".into()));
        }
        if let DictSize::Ratio(_) = self.dictionary_size {
            self.dictionary_size.resolve(1 << 20)?;
        }
        if let DatasetSpec::Synthetic { spec, .. } = &self.dataset {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let DatasetSpec::Cifar { crop, .. } = &self.dataset {
            if *crop == 0 || *crop > 32 {
                return Err(Error::Config(format!("crop {crop} outside 1..=32")));
            }
        }
        Ok(())
    }
}
