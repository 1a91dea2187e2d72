//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on usage errors (bad flags, missing or
//! invalid config), 2 on runtime errors. Every file a command writes lives
//! under `--out`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Once;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classifier::{self, LinearClassifier};
use crate::data::{self, LabeledSample, SyntheticSpec};
use crate::dictionary::Dictionary;
use crate::error::Error;
use crate::experiment::{self, ClassifierSpec, Dataset, DatasetSpec, ExperimentConfig, SweepAxis};
use crate::export::{self, GridOptions, NormMode};
use crate::period;

#[derive(Debug, Parser)]
#[command(name = "slca", version, about = "Sparse coding and dictionary learning with graded and spiking LCA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(short, long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Lambda,
    #[value(name = "s", alias = "spike-height")]
    SpikeHeight,
    #[value(name = "dict-size", alias = "dictionary-size")]
    DictionarySize,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Lambda => SweepAxis::Lambda,
            AxisArg::SpikeHeight => SweepAxis::SpikeHeight,
            AxisArg::DictionarySize => SweepAxis::DictionarySize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Symmetric,
    Global,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a dictionary; writes metrics.csv and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Encode samples with a fixed dictionary.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        dict: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: Split,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Write a spike raster per sample.
        #[arg(long)]
        raster: bool,
        /// Write a per-step energy trace per sample.
        #[arg(long)]
        trace: bool,
    },
    /// Repeated training over a hyper-parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Fit the linear head on training-split features.
    ClassifyTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        dict: PathBuf,
    },
    /// Score a trained head on validation-split features.
    ClassifyEval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        dict: PathBuf,
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
    },
    /// Bin an event recording into frames.
    EventsToFrames {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, default_value_t = 1000)]
        window_us: u64,
        #[arg(long, default_value_t = 2)]
        saturation: u32,
        /// Sensor size as WxH; CSV input otherwise uses the event bounding box.
        #[arg(long, value_parser = parse_sensor)]
        sensor: Option<(u16, u16)>,
    },
    /// Write the synthetic event dataset as recordings under train/ and val/.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Render dictionary elements as a PGM/PPM grid.
    ExportDict {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        dict: PathBuf,
        /// CSV `element,activity` used to order the grid.
        #[arg(long, value_name = "PATH")]
        activity: Option<PathBuf>,
        /// Number of elements shown (default: fill the grid).
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, default_value_t = 8)]
        rows: usize,
        #[arg(long, default_value_t = 8)]
        cols: usize,
        #[arg(long, default_value_t = 1)]
        pad: usize,
        #[arg(long, value_enum, default_value = "symmetric")]
        norm: NormArg,
    },
    /// Render originals above their reconstructions.
    ExportRecon {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        dict: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, value_enum, default_value = "val")]
        split: Split,
    },
    /// Compare convolutional and dense synthesis/analysis.
    ConvCheck {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Train { common }
            | Command::Infer { common, .. }
            | Command::Sweep { common, .. }
            | Command::ClassifyTrain { common, .. }
            | Command::ClassifyEval { common, .. }
            | Command::EventsToFrames { common, .. }
            | Command::Synth { common }
            | Command::ExportDict { common, .. }
            | Command::ExportRecon { common, .. }
            | Command::ConvCheck { common } => common,
        }
    }
}

fn parse_sensor(s: &str) -> std::result::Result<(u16, u16), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    Ok((w, h))
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.command.common().verbose);
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: bool) {
    let level = if verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn install_interrupt_handler() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        if let Err(e) = ctrlc::set_handler(experiment::request_stop) {
            log::warn!("no interrupt handler: {e}");
        }
    });
}

/// Config as read from disk plus the effective (overridden) version.
struct LoadedConfig {
    text: String,
    config: ExperimentConfig,
}

fn load_config(common: &Common) -> CliResult<LoadedConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut config = ExperimentConfig::from_json(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(LoadedConfig { text, config })
}

fn out_dir(common: &Common, config: Option<&ExperimentConfig>) -> CliResult<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.output_dir.clone()))
        .ok_or_else(|| CliError::Usage("--out is required".into()))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e).into())
}

/// Writes `config.json` verbatim and `config.resolved.json` with overrides
/// applied.
fn echo_config(dir: &Path, loaded: &LoadedConfig) -> CliResult<()> {
    experiment::write_config_echo(dir, &loaded.text)?;
    write_file(&dir.join("config.resolved.json"), loaded.config.to_json() + "\n")
}

/// Validates the config and prepares the run directory before any data is
/// touched.
fn prepare(common: &Common) -> CliResult<(LoadedConfig, PathBuf)> {
    let loaded = load_config(common)?;
    let dir = out_dir(common, Some(&loaded.config))?;
    echo_config(&dir, &loaded)?;
    Ok((loaded, dir))
}

fn load_dict(path: &Path, dataset: &Dataset) -> CliResult<Dictionary> {
    let dict = Dictionary::load_checkpoint(path)?;
    if dict.dims() != dataset.dims {
        return Err(Error::invalid(format!(
            "dictionary {} has shape {:?} but the dataset has {:?}",
            path.display(),
            dict.dims(),
            dataset.dims
        ))
        .into());
    }
    Ok(dict)
}

fn split(dataset: &Dataset, which: Split) -> &[LabeledSample] {
    match which {
        Split::Train => &dataset.train,
        Split::Val => &dataset.val,
    }
}

fn image_name(stem: &str, channels: usize) -> String {
    format!("{stem}.{}", if channels == 1 { "pgm" } else { "ppm" })
}

pub fn run(command: &Command) -> CliResult<()> {
    match command {
        Command::Train { common } => train(common),
        Command::Infer {
            common,
            dict,
            split,
            index,
            count,
            raster,
            trace,
        } => infer(common, dict, *split, *index, *count, *raster, *trace),
        Command::Sweep {
            common,
            axis,
            values,
            repeats,
        } => sweep(common, (*axis).into(), values, *repeats),
        Command::ClassifyTrain { common, dict } => classify_train(common, dict),
        Command::ClassifyEval { common, dict, model } => classify_eval(common, dict, model),
        Command::EventsToFrames {
            common,
            input,
            window_us,
            saturation,
            sensor,
        } => events_to_frames(common, input, *window_us, *saturation, *sensor),
        Command::Synth { common } => synth(common),
        Command::ExportDict {
            common,
            dict,
            activity,
            top_k,
            rows,
            cols,
            pad,
            norm,
        } => export_dict(common, dict, activity.as_deref(), *top_k, (*rows, *cols, *pad), *norm),
        Command::ExportRecon {
            common,
            dict,
            count,
            split,
        } => export_recon(common, dict, *count, *split),
        Command::ConvCheck { common } => conv_check(common),
    }
}

fn train(common: &Common) -> CliResult<()> {
    let (loaded, dir) = prepare(common)?;
    install_interrupt_handler();
    let result = experiment::run_training(&loaded.config, Some(&dir))?;
    if let Some(eval) = &result.final_eval {
        let mut csv = String::from("element,activity\n");
        for (i, a) in eval.activity.iter().enumerate() {
            let _ = writeln!(csv, "{i},{a}");
        }
        write_file(&dir.join("activity.csv"), csv)?;
    }
    if let Some(m) = result.metrics.last() {
        println!(
            "epoch {}: rmse_train={} rmse_val={} sparsity_pct={} max_spikes_per_step={}",
            m.epoch, m.rmse_train, m.rmse_val, m.sparsity_pct, m.max_spikes_per_step
        );
    }
    Ok(())
}

fn infer(common: &Common, dict_path: &Path, which: Split, index: usize, count: usize, raster: bool, trace: bool) -> CliResult<()> {
    let (loaded, dir) = prepare(common)?;
    let dataset = Dataset::load(&loaded.config.dataset, loaded.config.seed)?;
    let dict = load_dict(dict_path, &dataset)?;
    let samples = split(&dataset, which);
    if count == 0 || index + count > samples.len() {
        return Err(Error::invalid(format!(
            "samples {index}..{} requested from a split of {}",
            index + count,
            samples.len()
        ))
        .into());
    }
    let mut period = loaded.config.period()?;
    period.record_raster = raster && period.spike_height.is_some();
    period.record_trace = trace;
    let mut codes = String::from("sample,element,value\n");
    let mut summary = String::from("sample,label,rmse,rmse_unfiltered,sparsity_pct,max_spikes_per_step,total_spikes\n");
    for k in index..index + count {
        let s = &samples[k];
        let out = period::run(&dict, &s.input.values, &period, None).map_err(|e| e.context(format!("sample {k}")))?;
        let rmse = experiment::rmse(&s.input.values, &dict.synthesize(&out.code)?)?;
        let rmse_raw = experiment::rmse(&s.input.values, &dict.synthesize(&out.raw)?)?;
        for (i, v) in out.code.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let _ = writeln!(codes, "{k},{i},{v}");
        }
        let _ = writeln!(
            summary,
            "{k},{},{rmse},{rmse_raw},{},{},{}",
            s.label,
            experiment::sparsity(&out.code),
            out.max_spikes,
            out.total_spikes
        );
        if let Some(r) = &out.raster {
            let mut buf = Vec::new();
            crate::accumulator::write_raster_csv(&mut buf, r).expect("write to Vec");
            write_file(&dir.join(format!("raster_{k}.csv")), buf)?;
            export::render_raster(r, dict.element_count(), period.params.steps)?.save(dir.join(format!("raster_{k}.pgm")))?;
        }
        if let Some(t) = &out.trace {
            let mut buf = Vec::new();
            crate::lca::write_trace_csv(&mut buf, t).expect("write to Vec");
            write_file(&dir.join(format!("trace_{k}.csv")), buf)?;
        }
    }
    write_file(&dir.join("codes.csv"), codes)?;
    write_file(&dir.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn sweep(common: &Common, axis: SweepAxis, values: &[f64], repeats: usize) -> CliResult<()> {
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be >= 1".into()));
    }
    let (loaded, dir) = prepare(common)?;
    install_interrupt_handler();
    let table = experiment::run_sweep(&loaded.config, axis, values, repeats, loaded.config.execution)?;
    if experiment::stop_requested() {
        write_file(&dir.join(experiment::PARTIAL_MARKER), "interrupted during sweep\n")?;
        return Err(Error::Interrupted { epoch: 0 }.into());
    }
    let mut buf = Vec::new();
    table.write_csv(&mut buf).expect("write to Vec");
    write_file(&dir.join("sweep.csv"), &buf)?;
    std::io::stdout().write_all(&buf).map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn classifier_spec(config: &ExperimentConfig) -> ClassifierSpec {
    let mut spec = config.classifier.clone().unwrap_or_default();
    if config.classifier.is_none() {
        spec.train.seed = config.seed;
    }
    spec
}

fn classify_train(common: &Common, dict_path: &Path) -> CliResult<()> {
    let (loaded, dir) = prepare(common)?;
    let dataset = Dataset::load(&loaded.config.dataset, loaded.config.seed)?;
    let dict = load_dict(dict_path, &dataset)?;
    let spec = classifier_spec(&loaded.config);
    let (features, labels) = experiment::features_for(&dict, &dataset.train, &loaded.config, spec.features)?;
    let model = classifier::train(&features, &labels, &spec.train)?;
    let acc = classifier::evaluate(&model, &features, &labels, loaded.config.execution)?;
    let loss = classifier::loss(&model, &features, &labels);
    model.save(dir.join("classifier.lcls"))?;
    let report = format!(
        "samples,classes,features,train_accuracy,loss\n{},{},{},{acc},{loss}\n",
        labels.len(),
        model.classes(),
        model.features()
    );
    write_file(&dir.join("classify_train.csv"), &report)?;
    print!("{report}");
    Ok(())
}

fn classify_eval(common: &Common, dict_path: &Path, model_path: &Path) -> CliResult<()> {
    let (loaded, dir) = prepare(common)?;
    let model = LinearClassifier::load(model_path)?;
    let dataset = Dataset::load(&loaded.config.dataset, loaded.config.seed)?;
    let dict = load_dict(dict_path, &dataset)?;
    let spec = classifier_spec(&loaded.config);
    let (features, labels) = experiment::features_for(&dict, &dataset.val, &loaded.config, spec.features)?;
    let acc = classifier::evaluate(&model, &features, &labels, loaded.config.execution)?;
    let mut preds = String::from("sample,label,predicted\n");
    for (i, (f, l)) in features.iter().zip(&labels).enumerate() {
        let _ = writeln!(preds, "{i},{l},{}", model.predict(f));
    }
    write_file(&dir.join("predictions.csv"), preds)?;
    let report = format!("samples,accuracy\n{},{acc}\n", labels.len());
    write_file(&dir.join("classify_eval.csv"), &report)?;
    print!("{report}");
    Ok(())
}

fn events_to_frames(common: &Common, input: &Path, window_us: u64, saturation: u32, sensor: Option<(u16, u16)>) -> CliResult<()> {
    if window_us == 0 || saturation == 0 {
        return Err(CliError::Usage("--window-us and --saturation must be positive".into()));
    }
    let dir = out_dir(common, None)?;
    create_dir(&dir)?;
    let stream = data::read_events(input, sensor)?;
    let frames = data::accumulate_events(&stream.events, window_us, (stream.width, stream.height), saturation)?;
    let mut csv = String::from("frame,y,x,value\n");
    for (t, f) in frames.iter().enumerate() {
        for y in 0..f.height {
            for x in 0..f.width {
                let v = f.get(y, x, 0);
                if v != 0.0 {
                    let _ = writeln!(csv, "{t},{y},{x},{v}");
                }
            }
        }
    }
    write_file(&dir.join("frames.csv"), csv)?;
    let seq = data::FrameSequence::from_frames(&frames)?;
    let img = export::render_sequence(&seq.values, seq.dims, NormMode::Fixed { lo: -1.0, hi: 1.0 })?;
    img.save(dir.join("frames.pgm"))?;
    println!(
        "{} events -> {} frames of {}x{}",
        stream.events.len(),
        frames.len(),
        stream.width,
        stream.height
    );
    Ok(())
}

fn synth(common: &Common) -> CliResult<()> {
    let (spec, mut seed, framing) = match &common.config {
        Some(_) => {
            let loaded = load_config(common)?;
            match &loaded.config.dataset {
                DatasetSpec::Synthetic { seed, spec } => (*spec, seed.unwrap_or(loaded.config.seed), data::EventFraming::default()),
                DatasetSpec::Events { framing, .. } => (SyntheticSpec::default(), loaded.config.seed, *framing),
                _ => return Err(CliError::Usage("synth needs a synthetic or events dataset config".into())),
            }
        }
        None => (SyntheticSpec::default(), 0, data::EventFraming::default()),
    };
    if let Some(s) = common.seed {
        seed = s;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = out_dir(common, None)?;
    let ds = data::generate_synthetic(seed, &spec)?;
    let mut written = 0;
    for (name, samples) in [("train", &ds.train), ("val", &ds.val)] {
        let sub = dir.join(name);
        create_dir(&sub)?;
        for (k, s) in samples.iter().enumerate() {
            let frames: Vec<data::Frame> = (0..s.input.dims.frames).map(|t| s.input.frame(t)).collect();
            let stream = data::frames_to_events(&frames, framing.window_us, framing.saturation);
            let back = data::accumulate_events(&stream.events, framing.window_us, (stream.width, stream.height), framing.saturation)?;
            if back != frames {
                log::warn!("{name} sample {k} does not survive event framing exactly (empty leading or trailing frame)");
            }
            write_file(&sub.join(format!("{}_{k:04}.evt", s.label)), stream.to_bytes())?;
            written += 1;
        }
    }
    println!("wrote {written} recordings to {}", dir.display());
    Ok(())
}

fn read_activity(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("element,activity") {
        return Err(Error::format(format!("{}: expected header element,activity", path.display())).into());
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::format(format!("{}: line {}: {line:?}", path.display(), n + 2));
        let (i, a) = line.split_once(',').ok_or_else(bad)?;
        let i: usize = i.trim().parse().map_err(|_| bad())?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        if i != out.len() {
            return Err(bad().into());
        }
        out.push(a);
    }
    Ok(out)
}

fn export_dict(
    common: &Common,
    dict_path: &Path,
    activity: Option<&Path>,
    top_k: Option<usize>,
    (rows, cols, pad): (usize, usize, usize),
    norm: NormArg,
) -> CliResult<()> {
    if rows == 0 || cols == 0 {
        return Err(CliError::Usage("--rows and --cols must be >= 1".into()));
    }
    let dir = out_dir(common, None)?;
    create_dir(&dir)?;
    let dict = Dictionary::load_checkpoint(dict_path)?;
    let activity = activity.map(read_activity).transpose()?;
    let opts = GridOptions {
        rows,
        cols,
        top_k,
        pad,
        norm: match norm {
            NormArg::Symmetric => NormMode::PerTileSymmetric,
            NormArg::Global => NormMode::Global,
        },
    };
    let grid = export::render_dictionary_grid(&dict, activity.as_deref(), &opts)?;
    if grid.ranking_fallback {
        log::warn!("no activity ranking given; showing elements in index order");
    }
    let name = image_name("dictionary", grid.image.channels);
    grid.image.save(dir.join(&name))?;
    println!("{} elements -> {}", grid.shown.len(), dir.join(name).display());
    Ok(())
}

fn export_recon(common: &Common, dict_path: &Path, count: usize, which: Split) -> CliResult<()> {
    if count == 0 {
        return Err(CliError::Usage("--count must be >= 1".into()));
    }
    let (loaded, dir) = prepare(common)?;
    let dataset = Dataset::load(&loaded.config.dataset, loaded.config.seed)?;
    let dict = load_dict(dict_path, &dataset)?;
    let samples = split(&dataset, which);
    let period = loaded.config.period()?;
    let mut originals = Vec::new();
    let mut recons = Vec::new();
    for s in samples.iter().take(count) {
        let out = period::run(&dict, &s.input.values, &period, None)?;
        recons.push(dict.synthesize(&out.code)?);
        originals.push(s.input.values.clone());
    }
    let img = export::render_reconstruction_strip(&originals, &recons, dataset.dims, 1, NormMode::Global)?;
    let name = image_name("reconstructions", img.channels);
    img.save(dir.join(&name))?;
    println!("{} pairs -> {}", originals.len(), dir.join(name).display());
    Ok(())
}

fn conv_check(common: &Common) -> CliResult<()> {
    let seed = common.seed.unwrap_or(0);
    let result = experiment::conv_equivalence_check(seed)?;
    let report = match &result {
        experiment::ConvCheck::Checked {
            synth_max_diff,
            analyze_max_diff,
            passed,
        } => format!(
            "synth_max_diff,analyze_max_diff,tolerance,passed\n{synth_max_diff},{analyze_max_diff},{},{passed}\n",
            experiment::CONV_TOLERANCE
        ),
        experiment::ConvCheck::NotApplicable { positions } => {
            format!("not applicable: {}x{} kernel positions\n", positions.0, positions.1)
        }
    };
    if let Some(dir) = &common.out {
        create_dir(dir)?;
        write_file(&dir.join("conv_check.csv"), &report)?;
    }
    print!("{report}");
    if result.passed() {
        Ok(())
    } else {
        Err(Error::numeric("convolutional and dense operators disagree", 0).into())
    }
}
