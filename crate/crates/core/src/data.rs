//! Dataset ingestion: CIFAR-10 binaries, DVS event streams, frame windows,
//! and seeded synthetic datasets.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, InputDims};
use crate::error::{Error, Result};

/// One H×W×C grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Row-major, channels interleaved.
    pub values: Vec<f64>,
}

impl Frame {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.values[(y * self.width + x) * self.channels + c]
    }
}

/// Time-flattened multi-frame input.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub dims: InputDims,
    pub values: Vec<f64>,
}

impl FrameSequence {
    pub fn from_frames(frames: &[Frame]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("empty frame list"))?;
        let dims = InputDims::new(first.height, first.width, first.channels, frames.len());
        let mut values = Vec::with_capacity(dims.len());
        for f in frames {
            if (f.height, f.width, f.channels) != (first.height, first.width, first.channels) {
                return Err(Error::invalid("frames in one sequence differ in shape"));
            }
            values.extend_from_slice(&f.values);
        }
        Ok(Self { dims, values })
    }

    pub fn frame(&self, t: usize) -> Frame {
        let len = self.dims.frame_len();
        Frame {
            height: self.dims.height,
            width: self.dims.width,
            channels: self.dims.channels,
            values: self.values[t * len..(t + 1) * len].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub input: FrameSequence,
    pub label: usize,
}

// ---------------------------------------------------------------- CIFAR

pub const CIFAR_SIDE: usize = 32;
const CIFAR_PLANE: usize = CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_RECORD: usize = 1 + 3 * CIFAR_PLANE;

/// Parses raw CIFAR-10 records (label byte, then R, G, B planes) and takes
/// a centered `crop × crop` window. Pixels are scaled to `[0, 1]`.
pub fn parse_cifar(bytes: &[u8], crop: usize) -> Result<Vec<LabeledSample>> {
    if crop == 0 || crop > CIFAR_SIDE {
        return Err(Error::invalid(format!("crop must be in 1..=32, got {crop}")));
    }
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::format(format!(
            "truncated CIFAR record {} ({} trailing bytes)",
            bytes.len() / CIFAR_RECORD,
            bytes.len() % CIFAR_RECORD
        )));
    }
    let off = (CIFAR_SIDE - crop) / 2;
    let dims = InputDims::new(crop, crop, 3, 1);
    Ok(bytes
        .chunks_exact(CIFAR_RECORD)
        .map(|rec| {
            let label = rec[0] as usize;
            let planes = &rec[1..];
            let mut values = vec![0.0; dims.len()];
            for y in 0..crop {
                for x in 0..crop {
                    for c in 0..3 {
                        let b = planes[c * CIFAR_PLANE + (y + off) * CIFAR_SIDE + (x + off)];
                        values[dims.index(0, y, x, c)] = b as f64 / 255.0;
                    }
                }
            }
            LabeledSample {
                input: FrameSequence { dims, values },
                label,
            }
        })
        .collect())
}

pub fn load_cifar(path: impl AsRef<Path>, crop: usize) -> Result<Vec<LabeledSample>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar(&bytes, crop).map_err(|e| e.context(path.display().to_string()))
}

/// Smooth random RGB images in CIFAR binary layout, for smoke tests when
/// the real dataset is unavailable. Each image mixes a few low-frequency
/// color gradients.
pub fn generate_cifar_like(seed: u64, count: usize, classes: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count * CIFAR_RECORD);
    for _ in 0..count {
        let label = rng.random_range(0..classes.max(1)) as u8;
        out.push(label);
        let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..0.8));
        let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.5..2.5),
                    rng.random_range(0.0..std::f64::consts::TAU),
                    rng.random_range(0.0..std::f64::consts::TAU),
                    std::array::from_fn(|_| rng.random_range(-0.15..0.15)),
                )
            })
            .collect();
        for c in 0..3 {
            for y in 0..CIFAR_SIDE {
                for x in 0..CIFAR_SIDE {
                    let (fy, fx) = (y as f64 / CIFAR_SIDE as f64, x as f64 / CIFAR_SIDE as f64);
                    let mut v = base[c];
                    for (freq, py, px, amp) in &waves {
                        v += amp[c] * (std::f64::consts::TAU * freq * fy + py).sin()
                            * (std::f64::consts::TAU * freq * fx + px).cos();
                    }
                    out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------- events

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    /// Microseconds.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    /// +1 or −1.
    pub polarity: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub width: u16,
    pub height: u16,
    pub events: Vec<EventRecord>,
}

const EVENT_MAGIC: &[u8; 4] = b"EVT1";
const EVENT_VERSION: u32 = 1;
const EVENT_HEADER: usize = 4 + 4 + 2 + 2;
const EVENT_RECORD: usize = 4 + 2 + 2 + 1;

impl EventStream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(EVENT_HEADER + EVENT_RECORD * self.events.len());
        b.extend_from_slice(EVENT_MAGIC);
        b.extend_from_slice(&EVENT_VERSION.to_le_bytes());
        b.extend_from_slice(&self.width.to_le_bytes());
        b.extend_from_slice(&self.height.to_le_bytes());
        for e in &self.events {
            b.extend_from_slice(&(e.t as u32).to_le_bytes());
            b.extend_from_slice(&e.x.to_le_bytes());
            b.extend_from_slice(&e.y.to_le_bytes());
            b.push(e.polarity as u8);
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < EVENT_HEADER || &bytes[..4] != EVENT_MAGIC {
            return Err(Error::format("not a canonical event file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != EVENT_VERSION {
            return Err(Error::format(format!("unsupported event file version {version}")));
        }
        let width = u16::from_le_bytes(bytes[8..10].try_into().unwrap());
        let height = u16::from_le_bytes(bytes[10..12].try_into().unwrap());
        let body = &bytes[EVENT_HEADER..];
        if !body.len().is_multiple_of(EVENT_RECORD) {
            return Err(Error::format(format!(
                "event record {} truncated",
                body.len() / EVENT_RECORD
            )));
        }
        let events = body
            .chunks_exact(EVENT_RECORD)
            .enumerate()
            .map(|(i, r)| {
                let polarity = r[8] as i8;
                if polarity != 1 && polarity != -1 {
                    return Err(Error::format(format!("event {i} has polarity {polarity}")));
                }
                Ok(EventRecord {
                    t: u32::from_le_bytes(r[0..4].try_into().unwrap()) as u64,
                    x: u16::from_le_bytes(r[4..6].try_into().unwrap()),
                    y: u16::from_le_bytes(r[6..8].try_into().unwrap()),
                    polarity,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let stream = Self { width, height, events };
        stream.validate()?;
        Ok(stream)
    }

    /// Writes `t_us,x,y,p` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_us,x,y,p")?;
        for e in &self.events {
            writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.polarity)?;
        }
        Ok(())
    }

    /// Parses the CSV twin. The CSV carries no sensor size, so it is taken
    /// from `sensor` or, when absent, inferred as the coordinate bounding box.
    pub fn from_csv<R: BufRead>(r: R, sensor: Option<(u16, u16)>) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::format(e.to_string()))?
            .unwrap_or_default();
        if header.trim() != "t_us,x,y,p" {
            return Err(Error::format(format!("unexpected event CSV header {header:?}")));
        }
        let mut events = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::format(format!("malformed event CSV row {}: {line:?}", i + 1));
            let mut parts = line.split(',').map(str::trim);
            let mut next = || parts.next().ok_or_else(bad);
            let t = next()?.parse::<u64>().map_err(|_| bad())?;
            let x = next()?.parse::<u16>().map_err(|_| bad())?;
            let y = next()?.parse::<u16>().map_err(|_| bad())?;
            let polarity = next()?.parse::<i8>().map_err(|_| bad())?;
            if polarity != 1 && polarity != -1 {
                return Err(bad());
            }
            events.push(EventRecord { t, x, y, polarity });
        }
        let (width, height) = sensor.unwrap_or_else(|| {
            let w = events.iter().map(|e| e.x + 1).max().unwrap_or(0);
            let h = events.iter().map(|e| e.y + 1).max().unwrap_or(0);
            (w, h)
        });
        let stream = Self { width, height, events };
        stream.validate()?;
        Ok(stream)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.events.iter().enumerate() {
            if e.x >= self.width || e.y >= self.height {
                return Err(Error::format(format!(
                    "event {i} at ({}, {}) outside {}x{} sensor",
                    e.x, e.y, self.width, self.height
                )));
            }
        }
        if let Some(i) = self.events.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(Error::format(format!("event {} is earlier than its predecessor", i + 1)));
        }
        Ok(())
    }
}

/// Reads a canonical event file, binary (`EVT1` magic) or CSV.
pub fn read_events(path: impl AsRef<Path>, sensor: Option<(u16, u16)>) -> Result<EventStream> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let parsed = if bytes.starts_with(EVENT_MAGIC) {
        EventStream::from_bytes(&bytes)
    } else {
        EventStream::from_csv(BufReader::new(bytes.as_slice()), sensor)
    };
    parsed.map_err(|e| e.context(path.display().to_string()))
}

/// Bins events into consecutive `window_us` frames starting at the first
/// event. Per pixel the polarities are summed, clamped to `[−Q, Q]` and
/// divided by `Q`. No events yield a single all-zero frame.
pub fn accumulate_events(
    events: &[EventRecord],
    window_us: u64,
    sensor: (u16, u16),
    saturation: u32,
) -> Result<Vec<Frame>> {
    if window_us == 0 || saturation == 0 {
        return Err(Error::invalid("window and saturation must be positive"));
    }
    let (w, h) = (sensor.0 as usize, sensor.1 as usize);
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Ok(vec![Frame::zeros(h, w, 1)]);
    };
    if last.t < first.t {
        return Err(Error::invalid("events are not time-sorted"));
    }
    let origin = first.t;
    let n_frames = ((last.t - origin) / window_us + 1) as usize;
    let mut sums = vec![vec![0i64; w * h]; n_frames];
    let mut prev_t = origin;
    for (i, e) in events.iter().enumerate() {
        if e.t < prev_t {
            return Err(Error::invalid(format!("event {i} out of time order")));
        }
        prev_t = e.t;
        let (x, y) = (e.x as usize, e.y as usize);
        if x >= w || y >= h {
            return Err(Error::format(format!("event {i} at ({x}, {y}) outside {w}x{h} sensor")));
        }
        let k = ((e.t - origin) / window_us) as usize;
        sums[k][y * w + x] += e.polarity as i64;
    }
    let q = saturation as i64;
    Ok(sums
        .into_iter()
        .map(|s| Frame {
            height: h,
            width: w,
            channels: 1,
            values: s.into_iter().map(|v| v.clamp(-q, q) as f64 / q as f64).collect(),
        })
        .collect())
}

/// Inverse of [`accumulate_events`] for frames whose values are multiples
/// of `1/Q`: each pixel emits `|v|·Q` events of its sign inside its window.
pub fn frames_to_events(frames: &[Frame], window_us: u64, saturation: u32) -> EventStream {
    let (h, w) = frames.first().map(|f| (f.height, f.width)).unwrap_or((0, 0));
    let mut events = Vec::new();
    for (k, f) in frames.iter().enumerate() {
        let t = k as u64 * window_us;
        for y in 0..h {
            for x in 0..w {
                let v = f.get(y, x, 0);
                let n = (v.abs() * saturation as f64).round() as usize;
                let polarity = if v > 0.0 { 1 } else { -1 };
                for _ in 0..n {
                    events.push(EventRecord {
                        t,
                        x: x as u16,
                        y: y as u16,
                        polarity,
                    });
                }
            }
        }
    }
    EventStream {
        width: w as u16,
        height: h as u16,
        events,
    }
}

/// A labeled sequence of frames from one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub frames: Vec<Frame>,
    pub label: usize,
}

/// Sliding windows of `window_len` frames, `stride` apart, all carrying the
/// recording's label. Too-short recordings give no windows.
pub fn make_windows(recording: &Recording, window_len: usize, stride: usize) -> Result<Vec<LabeledSample>> {
    if window_len == 0 || stride == 0 {
        return Err(Error::invalid("window length and stride must be >= 1"));
    }
    let n = recording.frames.len();
    if n < window_len {
        return Ok(Vec::new());
    }
    (0..=n - window_len)
        .step_by(stride)
        .map(|start| {
            Ok(LabeledSample {
                input: FrameSequence::from_frames(&recording.frames[start..start + window_len])?,
                label: recording.label,
            })
        })
        .collect()
}

pub const POKER_CLASSES: [&str; 4] = ["clubs", "diamonds", "hearts", "spades"];

/// Label from a file stem such as `2_rec07` or `hearts_rec07`.
pub fn label_from_stem(stem: &str) -> Option<usize> {
    let head = stem.split(['_', '-', '.']).next()?;
    head.parse::<usize>()
        .ok()
        .or_else(|| POKER_CLASSES.iter().position(|c| c.eq_ignore_ascii_case(head)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventFraming {
    pub window_us: u64,
    pub saturation: u32,
    pub window_len: usize,
    pub stride: usize,
}

impl Default for EventFraming {
    fn default() -> Self {
        Self {
            window_us: 1000,
            saturation: 2,
            window_len: 5,
            stride: 1,
        }
    }
}

/// Loads every `*.evt` / `*.csv` recording in `dir` (sorted by name), frames
/// it and cuts windows. The label comes from the file-name prefix.
pub fn load_event_dir(dir: impl AsRef<Path>, framing: &EventFraming) -> Result<Vec<LabeledSample>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("evt") | Some("csv")))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let label = label_from_stem(stem)
            .ok_or_else(|| Error::format(format!("cannot derive a label from {}", p.display())))?;
        let stream = read_events(&p, None)?;
        let frames = accumulate_events(
            &stream.events,
            framing.window_us,
            (stream.width, stream.height),
            framing.saturation,
        )
        .map_err(|e| e.context(p.display().to_string()))?;
        out.extend(make_windows(&Recording { frames, label }, framing.window_len, framing.stride)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- synthetic

/// Class-template event-frame dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    /// Fraction of template pixels dropped, and relative rate of spurious
    /// pixels added, per sample.
    pub noise: f64,
    /// Fraction of nonzero pixels in a template frame.
    pub density: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 4,
            height: 12,
            width: 12,
            frames: 5,
            train_per_class: 12,
            val_per_class: 5,
            noise: 0.1,
            density: 0.2,
        }
    }
}

impl SyntheticSpec {
    pub fn dims(&self) -> InputDims {
        InputDims::new(self.height, self.width, 1, self.frames)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.dims().is_empty() {
            return Err(Error::invalid("synthetic spec needs classes and nonzero dims"));
        }
        if !(0.0..=1.0).contains(&self.noise) || !(0.0..=1.0).contains(&self.density) {
            return Err(Error::invalid("noise and density must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub templates: Vec<FrameSequence>,
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
}

/// Each class is a sparse signed pattern (values ±0.5 / ±1) drifting with a
/// class-specific velocity across the frames. Samples drop template pixels
/// and add spurious ±0.5 pixels at rate `noise`.
pub fn generate_synthetic(seed: u64, spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = spec.dims();
    let (h, w) = (spec.height, spec.width);
    let velocities = [(0i64, 1i64), (1, 0), (0, -1), (-1, 0), (1, 1), (-1, 1), (1, -1), (-1, -1)];
    let templates: Vec<FrameSequence> = (0..spec.n_classes)
        .map(|k| {
            let mut base = vec![0.0; h * w];
            for v in base.iter_mut() {
                if rng.random_bool(spec.density) {
                    let mag = if rng.random_bool(0.5) { 1.0 } else { 0.5 };
                    *v = if rng.random_bool(0.5) { mag } else { -mag };
                }
            }
            let (vy, vx) = velocities[k % velocities.len()];
            let mut values = vec![0.0; dims.len()];
            for t in 0..spec.frames {
                for y in 0..h {
                    for x in 0..w {
                        let sy = (y as i64 - vy * t as i64).rem_euclid(h as i64) as usize;
                        let sx = (x as i64 - vx * t as i64).rem_euclid(w as i64) as usize;
                        values[dims.index(t, y, x, 0)] = base[sy * w + sx];
                    }
                }
            }
            FrameSequence { dims, values }
        })
        .collect();

    let draw = |count: usize, rng: &mut ChaCha8Rng| -> Vec<LabeledSample> {
        let mut out = Vec::with_capacity(count * spec.n_classes);
        for _ in 0..count {
            for (label, tpl) in templates.iter().enumerate() {
                let mut values = tpl.values.clone();
                if spec.noise > 0.0 {
                    for v in values.iter_mut() {
                        if *v != 0.0 {
                            if rng.random_bool(spec.noise) {
                                *v = 0.0;
                            }
                        } else if rng.random_bool(spec.noise * spec.density) {
                            *v = if rng.random_bool(0.5) { 0.5 } else { -0.5 };
                        }
                    }
                }
                out.push(LabeledSample {
                    input: FrameSequence { dims, values },
                    label,
                });
            }
        }
        out
    };
    let train = draw(spec.train_per_class, &mut rng);
    let val = draw(spec.val_per_class, &mut rng);
    Ok(SyntheticDataset { templates, train, val })
}

/// Sparse nonnegative mixtures of a hidden unit-norm dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureSpec {
    pub atoms: usize,
    pub dim: usize,
    pub active: usize,
    pub train: usize,
    pub val: usize,
    pub coef_min: f64,
    pub coef_max: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            atoms: 30,
            dim: 20,
            active: 3,
            train: 5000,
            val: 200,
            coef_min: 0.5,
            coef_max: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixtureDataset {
    pub ground_truth: Dictionary,
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
}

/// The label of each sample is the index of its largest coefficient.
pub fn generate_mixture(seed: u64, spec: &MixtureSpec) -> Result<MixtureDataset> {
    if spec.active == 0 || spec.active > spec.atoms {
        return Err(Error::invalid("active must be in 1..=atoms"));
    }
    if !(0.0 < spec.coef_min && spec.coef_min <= spec.coef_max) {
        return Err(Error::invalid("need 0 < coef_min <= coef_max"));
    }
    let dims = InputDims::flat(spec.dim);
    let ground_truth = Dictionary::init_random(seed ^ 0x9e37_79b9_7f4a_7c15, spec.atoms, dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |count: usize| -> Vec<LabeledSample> {
        (0..count)
            .map(|_| {
                let mut code = vec![0.0; spec.atoms];
                for i in index::sample(&mut rng, spec.atoms, spec.active) {
                    code[i] = if spec.coef_max > spec.coef_min {
                        rng.random_range(spec.coef_min..spec.coef_max)
                    } else {
                        spec.coef_min
                    };
                }
                let label = (0..spec.atoms).max_by(|&a, &b| code[a].total_cmp(&code[b])).unwrap();
                LabeledSample {
                    input: FrameSequence {
                        dims,
                        values: ground_truth.synthesize(&code).expect("shape checked"),
                    },
                    label,
                }
            })
            .collect()
    };
    let train = draw(spec.train);
    let val = draw(spec.val);
    Ok(MixtureDataset {
        ground_truth,
        train,
        val,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    fn cifar_fixture() -> Vec<u8> {
        let mut bytes = Vec::new();
        for rec in 0..2u8 {
            bytes.push(rec + 3);
            for c in 0..3usize {
                for p in 0..CIFAR_PLANE {
                    bytes.push(((p * 7 + c * 31 + rec as usize * 11) % 256) as u8);
                }
            }
        }
        bytes
    }

    #[test]
    fn cifar_pixels_are_byte_over_255() {
        let samples = parse_cifar(&cifar_fixture(), 32).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].label, 4);
        let dims = samples[0].input.dims;
        assert_eq!(dims, InputDims::new(32, 32, 3, 1));
        // identity crop: (y, x, c) maps straight to the source plane
        for &(y, x, c) in &[(0usize, 0usize, 0usize), (5, 17, 1), (31, 31, 2)] {
            let p = y * 32 + x;
            let byte = (p * 7 + c * 31 + 11) % 256;
            assert_eq!(samples[1].input.values[dims.index(0, y, x, c)], byte as f64 / 255.0);
        }
    }

    #[test]
    fn cifar_center_crop_offsets() {
        let full = parse_cifar(&cifar_fixture(), 32).unwrap();
        let crop = parse_cifar(&cifar_fixture(), 16).unwrap();
        let (fd, cd) = (full[0].input.dims, crop[0].input.dims);
        assert_eq!(cd, InputDims::new(16, 16, 3, 1));
        for y in 0..16 {
            for x in 0..16 {
                for c in 0..3 {
                    assert_eq!(
                        crop[0].input.values[cd.index(0, y, x, c)],
                        full[0].input.values[fd.index(0, y + 8, x + 8, c)]
                    );
                }
            }
        }
    }

    #[test]
    fn cifar_truncated_record_is_format_error() {
        let mut bytes = cifar_fixture();
        bytes.truncate(CIFAR_RECORD + 100);
        match parse_cifar(&bytes, 16) {
            Err(Error::Format(msg)) => assert!(msg.contains("record 1")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn accumulate_basic_cases() {
        let frames = accumulate_events(&[], 1000, (35, 35), 2).unwrap();
        assert_eq!(frames.len(), 1);
        assert!(frames[0].values.iter().all(|v| *v == 0.0));

        let one = [EventRecord { t: 10, x: 3, y: 5, polarity: 1 }];
        let f = &accumulate_events(&one, 1000, (8, 8), 2).unwrap()[0];
        assert_eq!(f.get(5, 3, 0), 0.5);
        assert_eq!(f.values.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn accumulate_clamps_against_naive_oracle() {
        let events: Vec<EventRecord> = (0..3)
            .map(|i| EventRecord { t: i * 100, x: 1, y: 1, polarity: 1 })
            .chain([EventRecord { t: 1500, x: 0, y: 2, polarity: -1 }])
            .collect();
        let frames = accumulate_events(&events, 1000, (4, 4), 2).unwrap();
        assert_eq!(frames.len(), 2);
        // naive loop: per frame, per pixel, sum then clamp
        for (k, f) in frames.iter().enumerate() {
            for y in 0..4u16 {
                for x in 0..4u16 {
                    let s: i64 = events
                        .iter()
                        .filter(|e| e.x == x && e.y == y && (e.t / 1000) as usize == k)
                        .map(|e| e.polarity as i64)
                        .sum();
                    assert_eq!(f.get(y as usize, x as usize, 0), s.clamp(-2, 2) as f64 / 2.0);
                }
            }
        }
        assert_eq!(frames[0].get(1, 1, 0), 1.0);
        assert_eq!(frames[1].get(2, 0, 0), -0.5);
    }

    #[test]
    fn accumulate_conserves_counts_without_clamping() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = 0u64;
        let events: Vec<EventRecord> = (0..500)
            .map(|_| {
                t += rng.random_range(0..40);
                EventRecord {
                    t,
                    x: rng.random_range(0..6),
                    y: rng.random_range(0..6),
                    polarity: 1,
                }
            })
            .collect();
        let q = 1000;
        let frames = accumulate_events(&events, 1000, (6, 6), q).unwrap();
        let total: f64 = frames.iter().flat_map(|f| &f.values).map(|v| (v * q as f64).abs()).sum();
        assert!((total - 500.0).abs() < 1e-9);
    }

    #[test]
    fn accumulate_rejects_out_of_bounds() {
        let e = [EventRecord { t: 0, x: 9, y: 0, polarity: 1 }];
        assert!(matches!(accumulate_events(&e, 1000, (4, 4), 2), Err(Error::Format(_))));
    }

    #[test]
    fn window_counts_and_labels() {
        let rec = |n| Recording {
            frames: vec![Frame::zeros(35, 35, 1); n],
            label: 2,
        };
        assert_eq!(make_windows(&rec(5), 5, 1).unwrap().len(), 1);
        let w = make_windows(&rec(7), 5, 1).unwrap();
        assert_eq!(w.len(), 3);
        assert!(w.iter().all(|s| s.label == 2));
        assert_eq!(w[0].input.values.len(), 6125);
        assert!(make_windows(&rec(3), 5, 1).unwrap().is_empty());
        assert_eq!(make_windows(&rec(9), 5, 2).unwrap().len(), 3);
    }

    #[test]
    fn event_file_round_trips_binary_and_csv() {
        let stream = EventStream {
            width: 10,
            height: 7,
            events: vec![
                EventRecord { t: 0, x: 1, y: 2, polarity: 1 },
                EventRecord { t: 900, x: 9, y: 6, polarity: -1 },
            ],
        };
        assert_eq!(EventStream::from_bytes(&stream.to_bytes()).unwrap(), stream);
        let mut csv = Vec::new();
        stream.write_csv(&mut csv).unwrap();
        assert_eq!(EventStream::from_csv(csv.as_slice(), Some((10, 7))).unwrap(), stream);

        let mut bad = stream.to_bytes();
        bad[0] = b'Z';
        assert!(EventStream::from_bytes(&bad).is_err());
        let bytes = stream.to_bytes();
        assert!(EventStream::from_bytes(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn frames_events_frames_is_identity_on_grid_values() {
        let ds = generate_synthetic(4, &SyntheticSpec::default()).unwrap();
        let frames: Vec<Frame> = (0..5).map(|t| ds.train[0].input.frame(t)).collect();
        let stream = frames_to_events(&frames, 1000, 2);
        let back = accumulate_events(&stream.events, 1000, (12, 12), 2).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn synthetic_determinism_noise_and_templates() {
        let spec = SyntheticSpec::default();
        let a = generate_synthetic(7, &spec).unwrap();
        let b = generate_synthetic(7, &spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.train.len(), 48);
        assert_eq!(a.val.len(), 20);

        let clean = generate_synthetic(7, &SyntheticSpec { noise: 0.0, ..spec }).unwrap();
        for s in clean.train.iter().chain(&clean.val) {
            assert_eq!(s.input, clean.templates[s.label]);
        }
        for i in 0..4 {
            for j in i + 1..4 {
                let c = linalg::cosine(&a.templates[i].values, &a.templates[j].values);
                assert!(c.abs() < 0.3, "templates {i},{j} cosine {c}");
            }
        }
        for s in &a.train {
            assert!(s.input.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn labels_from_file_names() {
        assert_eq!(label_from_stem("2_rec07"), Some(2));
        assert_eq!(label_from_stem("Hearts_x"), Some(2));
        assert_eq!(label_from_stem("joker"), None);
    }

    #[test]
    fn mixture_samples_are_sparse_combinations() {
        let spec = MixtureSpec { train: 50, val: 5, ..Default::default() };
        let ds = generate_mixture(3, &spec).unwrap();
        assert_eq!(ds.ground_truth.element_count(), 30);
        assert_eq!(ds.train.len(), 50);
        let again = generate_mixture(3, &spec).unwrap();
        assert_eq!(ds.train, again.train);
        assert!(generate_mixture(3, &MixtureSpec { active: 0, ..spec }).is_err());
    }

    #[test]
    fn cifar_like_generator_parses() {
        let bytes = generate_cifar_like(1, 3, 10);
        let s = parse_cifar(&bytes, 16).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s[0].input.values.iter().any(|v| *v > 0.0 && *v < 1.0));
    }
}
