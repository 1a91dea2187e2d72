//! Repeated runs over one hyper-parameter axis.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{DictSize, ExperimentConfig};
use super::metrics::{summarize, Summary};
use super::{run_training_on, Dataset};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Lambda,
    /// 0 means graded (non-spiking) LCA.
    SpikeHeight,
    /// Values are multiples of the input dimension.
    DictionarySize,
}

impl SweepAxis {
    pub fn apply(self, base: &ExperimentConfig, value: f64, input_len: usize) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Lambda => cfg.lambda = value,
            SweepAxis::SpikeHeight => cfg.spike_height = value,
            SweepAxis::DictionarySize => {
                let n = (value * input_len as f64).round();
                if !(n >= 1.0 && n.is_finite()) {
                    return Err(Error::Config(format!("dictionary size ratio {value} gives no elements")));
                }
                cfg.dictionary_size = DictSize::Absolute(n as usize);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub runs: usize,
    pub failed: usize,
    pub rmse_val: Summary,
    pub rmse_unfiltered: Summary,
    pub sparsity_pct: Summary,
    pub accuracy: Summary,
    pub max_spikes: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mean(s: &Summary) -> String {
    if s.n == 0 {
        String::new()
    } else {
        s.mean.to_string()
    }
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "value,runs,failed,rmse_val_mean,rmse_val_ci,rmse_raw_mean,rmse_raw_ci,sparsity_mean,sparsity_ci,accuracy_mean,accuracy_ci,max_spikes_mean,max_spikes_ci"
        )?;
        for r in &self.rows {
            write!(w, "{},{},{}", r.value, r.runs, r.failed)?;
            for s in [&r.rmse_val, &r.rmse_unfiltered, &r.sparsity_pct, &r.accuracy, &r.max_spikes] {
                write!(w, ",{},{}", mean(s), opt(s.ci95))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

struct Cell {
    rmse: f64,
    raw: f64,
    sparsity: f64,
    accuracy: Option<f64>,
    max_spikes: f64,
}

/// Trains `repeats` runs per value with seeds `base.seed + r` (paired
/// across values). A run that errors is counted in `failed` and left out of
/// the summaries.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    repeats: usize,
    exec: Execution,
) -> Result<SweepTable> {
    if values.is_empty() || repeats == 0 {
        return Err(Error::invalid("sweep needs at least one value and one repeat"));
    }
    let jobs: Vec<(usize, u64)> = (0..values.len())
        .flat_map(|v| (0..repeats as u64).map(move |r| (v, r)))
        .collect();
    let cells = exec::map(exec, &jobs, |_, &(v, r)| {
        let mut cfg = base.clone();
        cfg.seed = base.seed.wrapping_add(r);
        cfg.execution = Execution::Sequential;
        let dataset = Dataset::load(&cfg.dataset, cfg.seed)?;
        let cfg = axis.apply(&cfg, values[v], dataset.dims.len())?;
        let result = run_training_on(&cfg, &dataset, None)?;
        let e = result
            .final_eval
            .ok_or_else(|| Error::invalid("sweep runs need validation data"))?;
        Ok::<_, Error>(Cell {
            rmse: e.rmse,
            raw: e.rmse_unfiltered,
            sparsity: e.sparsity_pct,
            accuracy: result.metrics.last().and_then(|m| m.accuracy),
            max_spikes: e.max_spikes_per_step as f64,
        })
    });
    let mut rows = Vec::with_capacity(values.len());
    for (v, chunk) in cells.chunks(repeats).enumerate() {
        let ok: Vec<&Cell> = chunk
            .iter()
            .enumerate()
            .filter_map(|(r, c)| match c {
                Ok(c) => Some(c),
                Err(e) => {
                    log::warn!("sweep value {} repeat {r} failed: {e}", values[v]);
                    None
                }
            })
            .collect();
        let col = |f: &dyn Fn(&Cell) -> Option<f64>| summarize(&ok.iter().filter_map(|c| f(c)).collect::<Vec<_>>());
        rows.push(SweepRow {
            value: values[v],
            runs: ok.len(),
            failed: chunk.len() - ok.len(),
            rmse_val: col(&|c| Some(c.rmse)),
            rmse_unfiltered: col(&|c| Some(c.raw)),
            sparsity_pct: col(&|c| Some(c.sparsity)),
            accuracy: col(&|c| c.accuracy),
            max_spikes: col(&|c| Some(c.max_spikes)),
        });
    }
    Ok(SweepTable { axis, rows })
}
