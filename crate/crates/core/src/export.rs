//! Image export of dictionary elements and reconstructions (binary PNM).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::accumulator::RasterEntry;
use crate::dictionary::{Dictionary, InputDims};
use crate::error::{Error, Result};

/// 8-bit image, 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bytes: Vec<u8>,
}

impl Image {
    pub fn black(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            bytes: vec![0; width * height * channels],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.bytes[i..i + self.channels]
    }

    /// P5 for gray, P6 for RGB, maxval 255.
    pub fn write_pnm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        write!(w, "{magic}\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.bytes)
    }

    pub fn to_pnm(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.bytes.len() + 20);
        self.write_pnm(&mut buf).expect("write to Vec");
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pnm()).map_err(|e| Error::io(path, e))
    }
}

/// Maps values to bytes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NormMode {
    /// Min/max over everything rendered together.
    Global,
    /// Each tile separately, zero at mid-gray.
    #[default]
    PerTileSymmetric,
    /// Clamped to `[lo, hi]`.
    Fixed { lo: f64, hi: f64 },
}

fn to_byte(v: f64, lo: f64, hi: f64) -> u8 {
    if hi <= lo {
        return 128;
    }
    (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8
}

fn symmetric_byte(v: f64, max_abs: f64) -> u8 {
    if max_abs == 0.0 {
        return 128;
    }
    (128.0 + (127.0 * v / max_abs).round()).clamp(1.0, 255.0) as u8
}

fn range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

struct Quantizer {
    mode: NormMode,
    global: (f64, f64),
}

impl Quantizer {
    fn new(mode: NormMode, all: &[&[f64]]) -> Self {
        let global = all.iter().map(|t| range(t)).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(a, b), (lo, hi)| (a.min(lo), b.max(hi)),
        );
        Self { mode, global }
    }

    fn tile(&self, values: &[f64]) -> Vec<u8> {
        match self.mode {
            NormMode::Global => values.iter().map(|&v| to_byte(v, self.global.0, self.global.1)).collect(),
            NormMode::Fixed { lo, hi } => values.iter().map(|&v| to_byte(v, lo, hi)).collect(),
            NormMode::PerTileSymmetric => {
                let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                values.iter().map(|&v| symmetric_byte(v, m)).collect()
            }
        }
    }
}

/// Tile of `T` frames laid side by side (frame `t` occupies columns
/// `t*W..(t+1)*W`).
fn blit(img: &mut Image, ox: usize, oy: usize, dims: InputDims, bytes: &[u8]) {
    let c_out = img.channels;
    for t in 0..dims.frames {
        for y in 0..dims.height {
            for x in 0..dims.width {
                let px = (oy + y) * img.width + ox + t * dims.width + x;
                for c in 0..c_out {
                    let src = dims.index(t, y, x, c.min(dims.channels - 1));
                    img.bytes[px * c_out + c] = bytes[src];
                }
            }
        }
    }
}

fn image_channels(dims: InputDims) -> Result<usize> {
    match dims.channels {
        1 => Ok(1),
        3 => Ok(3),
        c => Err(Error::invalid(format!("cannot render {c} channels (need 1 or 3)"))),
    }
}

#[derive(Debug, Clone)]
pub struct GridOptions {
    pub rows: usize,
    pub cols: usize,
    /// Elements to show; `None` fills the grid.
    pub top_k: Option<usize>,
    pub pad: usize,
    pub norm: NormMode,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            rows: 8,
            cols: 8,
            top_k: None,
            pad: 1,
            norm: NormMode::PerTileSymmetric,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DictionaryGrid {
    pub image: Image,
    /// Element shown in each filled cell, row-major.
    pub shown: Vec<usize>,
    /// True when no activity ranking was given and index order was used.
    pub ranking_fallback: bool,
}

/// Indices sorted by descending activity, ties by index.
pub fn rank_by_activity(activity: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..activity.len()).collect();
    idx.sort_by(|&a, &b| activity[b].total_cmp(&activity[a]).then(a.cmp(&b)));
    idx
}

/// Renders the `top_k` most active elements (index order without a
/// ranking). Each cell is `(H + pad) x (T*W + pad)` with black padding on
/// the right and bottom.
pub fn render_dictionary_grid(dict: &Dictionary, activity: Option<&[f64]>, opts: &GridOptions) -> Result<DictionaryGrid> {
    if opts.rows == 0 || opts.cols == 0 {
        return Err(Error::invalid("grid needs at least one row and column"));
    }
    let cells = opts.rows * opts.cols;
    let top_k = match opts.top_k {
        Some(k) if k == 0 || k > dict.element_count() => {
            return Err(Error::invalid(format!("top_k = {k} outside 1..={}", dict.element_count())))
        }
        Some(k) if k > cells => return Err(Error::invalid(format!("top_k = {k} exceeds {cells} grid cells"))),
        Some(k) => k,
        None => cells,
    };
    let dims = dict.dims();
    let channels = image_channels(dims)?;
    let (order, ranking_fallback) = match activity {
        Some(a) if a.len() == dict.element_count() => (rank_by_activity(a), false),
        Some(a) => {
            return Err(Error::invalid(format!(
                "activity has {} entries for {} elements",
                a.len(),
                dict.element_count()
            )))
        }
        None => ((0..dict.element_count()).collect(), true),
    };
    let shown: Vec<usize> = order.into_iter().take(top_k).collect();
    let tile_w = dims.frames * dims.width + opts.pad;
    let tile_h = dims.height + opts.pad;
    let mut image = Image::black(opts.cols * tile_w, opts.rows * tile_h, channels);
    let tiles: Vec<&[f64]> = shown.iter().map(|&i| dict.element(i)).collect();
    let q = Quantizer::new(opts.norm, &tiles);
    for (k, tile) in tiles.iter().enumerate() {
        let (r, c) = (k / opts.cols, k % opts.cols);
        blit(&mut image, c * tile_w, r * tile_h, dims, &q.tile(tile));
    }
    Ok(DictionaryGrid {
        image,
        shown,
        ranking_fallback,
    })
}

/// Originals in the top row, reconstructions below, one column per pair.
pub fn render_reconstruction_strip(
    originals: &[Vec<f64>],
    reconstructions: &[Vec<f64>],
    dims: InputDims,
    pad: usize,
    norm: NormMode,
) -> Result<Image> {
    if originals.is_empty() {
        return Err(Error::invalid("no images to render"));
    }
    if originals.len() != reconstructions.len() {
        return Err(Error::invalid(format!(
            "{} originals but {} reconstructions",
            originals.len(),
            reconstructions.len()
        )));
    }
    if let Some(v) = originals.iter().chain(reconstructions).find(|v| v.len() != dims.len()) {
        return Err(Error::invalid(format!("image of length {} for shape of length {}", v.len(), dims.len())));
    }
    let channels = image_channels(dims)?;
    let tile_w = dims.frames * dims.width + pad;
    let tile_h = dims.height + pad;
    let mut image = Image::black(originals.len() * tile_w, 2 * tile_h, channels);
    let all: Vec<&[f64]> = originals.iter().chain(reconstructions).map(|v| v.as_slice()).collect();
    let q = Quantizer::new(norm, &all);
    for (k, (o, r)) in originals.iter().zip(reconstructions).enumerate() {
        blit(&mut image, k * tile_w, 0, dims, &q.tile(o));
        blit(&mut image, k * tile_w, tile_h, dims, &q.tile(r));
    }
    Ok(image)
}

/// One multi-frame input as a single row of frames.
pub fn render_sequence(values: &[f64], dims: InputDims, norm: NormMode) -> Result<Image> {
    if values.len() != dims.len() || dims.is_empty() {
        return Err(Error::invalid(format!("sequence of length {} for shape of length {}", values.len(), dims.len())));
    }
    let channels = image_channels(dims)?;
    let mut image = Image::black(dims.frames * dims.width, dims.height, channels);
    let q = Quantizer::new(norm, &[values]);
    blit(&mut image, 0, 0, dims, &q.tile(values));
    Ok(image)
}

/// Spike raster: one column per step, one row per neuron, brightness
/// proportional to the spike count (white = busiest cell).
pub fn render_raster(raster: &[RasterEntry], neurons: usize, steps: usize) -> Result<Image> {
    if neurons == 0 || steps == 0 {
        return Err(Error::invalid("raster needs neurons and steps"));
    }
    let mut image = Image::black(steps, neurons, 1);
    let max = raster.iter().map(|e| e.count).max().unwrap_or(0);
    for e in raster {
        if e.neuron >= neurons || e.step >= steps {
            return Err(Error::invalid(format!("raster entry ({}, {}) outside {neurons}x{steps}", e.neuron, e.step)));
        }
        let v = (255.0 * e.count as f64 / max as f64).round().max(1.0);
        image.bytes[e.neuron * steps + e.step] = v as u8;
    }
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict(rows: Vec<Vec<f64>>, dims: InputDims) -> Dictionary {
        Dictionary::from_rows(&rows, dims).unwrap()
    }

    #[test]
    fn pnm_header() {
        let img = Image::black(3, 2, 1);
        let bytes = img.to_pnm();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(bytes.len(), 11 + 6);
        assert!(Image::black(1, 1, 3).to_pnm().starts_with(b"P6\n1 1\n255\n"));
    }

    #[test]
    fn symmetric_mapping() {
        assert_eq!(symmetric_byte(0.0, 1.0), 128);
        assert_eq!(symmetric_byte(1.0, 1.0), 255);
        assert_eq!(symmetric_byte(-1.0, 1.0), 1);
        assert_eq!(symmetric_byte(0.5, 1.0), 192);
        assert_eq!(symmetric_byte(0.3, 0.0), 128);
    }

    #[test]
    fn grid_layout_and_padding() {
        let dims = InputDims::new(2, 2, 1, 1);
        let d = dict(vec![vec![1.0, 0.0, 0.0, -1.0], vec![0.0, 2.0, 0.0, 0.0]], dims);
        let g = render_dictionary_grid(&d, None, &GridOptions { rows: 1, cols: 3, pad: 1, ..Default::default() }).unwrap();
        assert!(g.ranking_fallback);
        assert_eq!(g.shown, vec![0, 1]);
        assert_eq!((g.image.width, g.image.height), (9, 3));
        assert_eq!(g.image.pixel(0, 0), &[255]);
        assert_eq!(g.image.pixel(1, 1), &[1]);
        assert_eq!(g.image.pixel(1, 0), &[128]);
        assert_eq!(g.image.pixel(2, 0), &[0]);
        assert_eq!(g.image.pixel(4, 0), &[255]);
        assert_eq!(g.image.pixel(7, 0), &[0]);
    }

    #[test]
    fn ranking_orders_cells() {
        let dims = InputDims::flat(2);
        let d = dict(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], dims);
        let g = render_dictionary_grid(&d, Some(&[0.1, 5.0, 2.0]), &GridOptions { rows: 1, cols: 2, pad: 0, norm: NormMode::Global, top_k: None }).unwrap();
        assert_eq!(g.shown, vec![1, 2]);
        assert!(!g.ranking_fallback);
        assert!(render_dictionary_grid(&d, Some(&[1.0]), &GridOptions::default()).is_err());
        assert_eq!(rank_by_activity(&[1.0, 3.0, 3.0, 0.0]), vec![1, 2, 0, 3]);
    }

    #[test]
    fn multi_frame_elements_sit_side_by_side() {
        let dims = InputDims::new(1, 1, 1, 3);
        let d = dict(vec![vec![-1.0, 0.0, 1.0]], dims);
        let g = render_dictionary_grid(&d, None, &GridOptions { rows: 1, cols: 1, pad: 0, ..Default::default() }).unwrap();
        assert_eq!(g.image.bytes, vec![1, 128, 255]);
    }

    #[test]
    fn rgb_and_fixed_norm() {
        let dims = InputDims::new(1, 1, 3, 1);
        let img = render_reconstruction_strip(&[vec![0.0, 0.5, 1.0]], &[vec![2.0, -1.0, 0.25]], dims, 0, NormMode::Fixed { lo: 0.0, hi: 1.0 }).unwrap();
        assert_eq!((img.width, img.height, img.channels), (1, 2, 3));
        assert_eq!(img.bytes, vec![0, 128, 255, 255, 0, 64]);
    }

    #[test]
    fn top_one_is_the_most_active_element() {
        let dims = InputDims::flat(3);
        let d = dict(vec![vec![1.0, 0.0, 0.0], vec![0.0, -2.0, 1.0]], dims);
        let opts = GridOptions { rows: 2, cols: 2, pad: 1, top_k: Some(1), ..Default::default() };
        let g = render_dictionary_grid(&d, Some(&[1.0, 4.0]), &opts).unwrap();
        assert_eq!(g.shown, vec![1]);
        let expected = Quantizer::new(NormMode::PerTileSymmetric, &[]).tile(d.element(1));
        assert_eq!(&g.image.bytes[..3], &expected[..]);
        assert!(g.image.bytes[4..].iter().all(|b| *b == 0));
        for k in [0, 3, 5] {
            let bad = GridOptions { top_k: Some(k), rows: 1, cols: 2, ..Default::default() };
            assert!(render_dictionary_grid(&d, None, &bad).is_err(), "top_k {k}");
        }
    }

    #[test]
    fn zero_tile_is_mid_gray() {
        let q = Quantizer::new(NormMode::PerTileSymmetric, &[]);
        assert_eq!(q.tile(&[0.0; 4]), vec![128; 4]);
    }

    #[test]
    fn full_grid_dimensions() {
        let dims = InputDims::new(4, 4, 1, 1);
        let d = Dictionary::init_random(1, 256, dims).unwrap();
        let opts = GridOptions { rows: 16, cols: 16, pad: 1, ..Default::default() };
        let g = render_dictionary_grid(&d, None, &opts).unwrap();
        assert_eq!((g.image.width, g.image.height), (16 * 5, 16 * 5));
        assert_eq!(g.shown.len(), 256);
        let again = render_dictionary_grid(&d, None, &opts).unwrap();
        assert_eq!(g.image.to_pnm(), again.image.to_pnm());
    }

    #[test]
    fn identical_rows_for_perfect_reconstruction() {
        let dims = InputDims::new(2, 2, 3, 1);
        let imgs: Vec<Vec<f64>> = (0..10).map(|k| (0..12).map(|i| ((i + k) % 5) as f64 / 4.0).collect()).collect();
        let strip = render_reconstruction_strip(&imgs, &imgs, dims, 0, NormMode::Global).unwrap();
        assert_eq!(strip.width, 10 * 2);
        let half = strip.bytes.len() / 2;
        assert_eq!(strip.bytes[..half], strip.bytes[half..]);
    }

    #[test]
    fn raster_image() {
        let raster = [
            RasterEntry { step: 0, neuron: 1, count: 2 },
            RasterEntry { step: 2, neuron: 0, count: 1 },
        ];
        let img = render_raster(&raster, 2, 3).unwrap();
        assert_eq!(img.bytes, vec![0, 0, 128, 255, 0, 0]);
        assert!(render_raster(&raster, 1, 3).is_err());
        assert!(render_raster(&[], 0, 3).is_err());
    }

    #[test]
    fn sequence_row() {
        let dims = InputDims::new(1, 2, 1, 2);
        let img = render_sequence(&[-1.0, 0.0, 0.5, 1.0], dims, NormMode::Fixed { lo: -1.0, hi: 1.0 }).unwrap();
        assert_eq!((img.width, img.height), (4, 1));
        assert_eq!(img.bytes, vec![0, 128, 191, 255]);
        assert!(render_sequence(&[0.0], dims, NormMode::Global).is_err());
    }

    #[test]
    fn strip_rejects_bad_input() {
        let dims = InputDims::flat(2);
        let norm = NormMode::Global;
        assert!(render_reconstruction_strip(&[], &[], dims, 1, norm).is_err());
        assert!(render_reconstruction_strip(&[vec![0.0; 2]], &[], dims, 1, norm).is_err());
        assert!(render_reconstruction_strip(&[vec![0.0; 3]], &[vec![0.0; 3]], dims, 1, norm).is_err());
        assert!(render_reconstruction_strip(&[vec![0.0; 2]], &[vec![0.0; 2]], InputDims::new(1, 1, 2, 1), 1, norm).is_err());
    }
}
