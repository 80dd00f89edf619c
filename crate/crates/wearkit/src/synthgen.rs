//! Deterministic procedural generator of worn-cutting-insert images with
//! pixel-exact ground truth.
//!
//! Every image shows a bright insert trapezoid on a dark background; the top
//! boundary of the trapezoid is the cutting edge. Wear is painted along that
//! edge: flank wear as a bright textured band of varying depth below the
//! edge, chipping as irregular notches biting into it. Built-up-edge
//! deposits are rendered as bright blobs on the edge but carry no class of
//! their own. Class prevalences are enforced by exact quota assignment, so
//! corpus-level label frequencies match the configured probabilities as
//! closely as rounding allows.
//!
//! Everything is a pure function of the corpus seed: sample `i` draws from
//! its own PRNG stream, which makes parallel generation byte-identical to
//! sequential generation.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{write_image, Raster};

/// Pixel-count threshold below which a wear region does not count as a label.
pub const DEFAULT_MIN_REGION_PX: usize = 30;

/// Smallest image dimension the renderer supports.
pub const MIN_RENDER_DIM: usize = 48;

// Margin above `DEFAULT_MIN_REGION_PX` the generator aims for, so quantization
// can never pull an assigned label under the counting threshold.
const AREA_TARGET: usize = DEFAULT_MIN_REGION_PX + 6;

/// Per-pixel class map over background / tool / flank wear / chipping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMap {
    width: usize,
    height: usize,
    classes: Vec<u8>,
}

impl SegMap {
    pub const BACKGROUND: u8 = 0;
    pub const TOOL: u8 = 1;
    pub const FLANK_WEAR: u8 = 2;
    pub const CHIPPING: u8 = 3;
    pub const N_CLASSES: usize = 4;

    pub fn new(width: usize, height: usize, classes: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidData("segmap dimensions must be at least 1x1".into()));
        }
        if classes.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "segmap data length {} != {width}x{height}",
                classes.len()
            )));
        }
        if let Some(&bad) = classes.iter().find(|&&v| v > 3) {
            return Err(Error::InvalidData(format!(
                "segmap class value {bad} outside 0..=3"
            )));
        }
        Ok(SegMap {
            width,
            height,
            classes,
        })
    }

    pub fn filled(width: usize, height: usize, class: u8) -> Result<Self> {
        Self::new(width, height, vec![class; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn class_at(&self, x: usize, y: usize) -> u8 {
        self.classes[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, class: u8) {
        debug_assert!(class <= 3);
        self.classes[y * self.width + x] = class;
    }

    /// Pixel count per class.
    pub fn counts(&self) -> [usize; Self::N_CLASSES] {
        let mut c = [0usize; Self::N_CLASSES];
        for &v in &self.classes {
            c[v as usize] += 1;
        }
        c
    }

    /// Reads a segmap stored as binary PGM with class indices as pixel values.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let r = crate::raster::read_image(&path)?;
        if r.channels() != 1 {
            return Err(Error::InvalidData(format!(
                "{}: segmap must be single-channel",
                path.as_ref().display()
            )));
        }
        Self::new(r.width(), r.height(), r.as_u8().unwrap().to_vec())
    }

    /// Writes the segmap as binary PGM with class indices as pixel values 0-3.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let r = Raster::from_u8(self.width, self.height, 1, self.classes.clone())?;
        write_image(&r, path)
    }
}

/// Image-level wear labels, as recorded in the corpus manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WearLabels {
    pub flank_wear: bool,
    pub chipping: bool,
    pub no_wear: bool,
    pub built_up_edge: bool,
}

impl WearLabels {
    pub fn new(flank_wear: bool, chipping: bool, built_up_edge: bool) -> Self {
        WearLabels {
            flank_wear,
            chipping,
            no_wear: !flank_wear && !chipping,
            built_up_edge,
        }
    }
}

/// Derives image-level labels from a ground-truth map: a wear mechanism is
/// present when its pixel count reaches `min_region_px`. Built-up edge is not
/// a map class and therefore always reports false here.
pub fn labels_from_segmap(m: &SegMap, min_region_px: usize) -> WearLabels {
    let counts = m.counts();
    WearLabels::new(
        counts[SegMap::FLANK_WEAR as usize] >= min_region_px,
        counts[SegMap::CHIPPING as usize] >= min_region_px,
        false,
    )
}

/// Controls noise amplitude, wear contrast, and minimum wear-region size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

/// Configuration of a synthetic corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_images: usize,
    pub img_w: usize,
    pub img_h: usize,
    pub p_flank: f64,
    pub p_chip: f64,
    pub p_bue: f64,
    pub difficulty: Difficulty,
    pub seed: u64,
    /// Pixels per millimetre, used when converting wear widths to mm.
    pub px_per_mm: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_images: 648,
            img_w: 640,
            img_h: 480,
            p_flank: 0.8272,
            p_chip: 0.5540,
            p_bue: 0.1389,
            difficulty: Difficulty::Easy,
            seed: 42,
            px_per_mm: 100.0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 {
            return Err(Error::InvalidConfig("n_images must be at least 1".into()));
        }
        if self.img_w < MIN_RENDER_DIM || self.img_h < MIN_RENDER_DIM {
            return Err(Error::InvalidConfig(format!(
                "corpus images must be at least {MIN_RENDER_DIM}x{MIN_RENDER_DIM}, got {}x{}",
                self.img_w, self.img_h
            )));
        }
        for (name, p) in [
            ("p_flank", self.p_flank),
            ("p_chip", self.p_chip),
            ("p_bue", self.p_bue),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name}={p} outside [0,1]")));
            }
        }
        if !self.px_per_mm.is_finite() || self.px_per_mm <= 0.0 {
            return Err(Error::InvalidConfig("px_per_mm must be positive".into()));
        }
        Ok(())
    }
}

/// One generated sample: id, image, ground truth, labels.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Raster,
    pub segmap: SegMap,
    pub labels: WearLabels,
}

// ---------------------------------------------------------------------------
// Per-image draw recipe
// ---------------------------------------------------------------------------

/// Flank-wear band over edge columns `[x0, x1)` with a per-column depth.
#[derive(Debug, Clone)]
pub struct FlankBand {
    pub x0: usize,
    pub x1: usize,
    pub widths: Vec<usize>,
}

/// Irregular notch biting into the cutting edge at column `cx`.
#[derive(Debug, Clone)]
pub struct ChipNotch {
    pub cx: usize,
    pub radius: f64,
    pub wobble_amp: f64,
    pub lobes: u32,
    pub phase: f64,
}

/// Bright built-up-edge deposit sitting on the cutting edge.
#[derive(Debug, Clone)]
pub struct BueBlob {
    pub cx: usize,
    pub cy: usize,
    pub radius: f64,
}

/// Fully explicit draw recipe for one insert image. `InsertParams::sample`
/// randomizes one from a [`CorpusConfig`]; tests may construct it directly.
#[derive(Debug, Clone)]
pub struct InsertParams {
    pub width: usize,
    pub height: usize,
    /// Cutting-edge row; the insert body extends downward from here.
    pub edge_y: usize,
    /// Edge column range, half-open.
    pub edge_x0: usize,
    pub edge_x1: usize,
    /// Bottom boundary of the insert; wider than the edge so that every
    /// column under the edge stays inside the body all the way down.
    pub bottom_y: usize,
    pub bottom_x0: usize,
    pub bottom_x1: usize,
    pub background_level: f32,
    pub tool_level: f32,
    pub flank_level: f32,
    pub chip_level: f32,
    pub bue_level: f32,
    pub texture_amp: f32,
    pub texture_freq: f32,
    pub texture_phase: f32,
    /// Illumination gradient slopes per pixel (x, y), centered on the image.
    pub grad: (f32, f32),
    pub noise_sigma: f64,
    pub flank: Option<FlankBand>,
    pub chips: Vec<ChipNotch>,
    pub bue: Vec<BueBlob>,
}

impl InsertParams {
    /// True when `(x, y)` lies inside the insert trapezoid.
    pub fn tool_contains(&self, x: usize, y: usize) -> bool {
        if y < self.edge_y || y > self.bottom_y {
            return false;
        }
        let t = (y - self.edge_y) as f64 / (self.bottom_y - self.edge_y).max(1) as f64;
        let xl = self.edge_x0 as f64 + t * (self.bottom_x0 as f64 - self.edge_x0 as f64);
        let xr = self.edge_x1 as f64 + t * (self.bottom_x1 as f64 - self.edge_x1 as f64);
        (x as f64) >= xl && (x as f64) < xr
    }

    /// Randomizes a draw recipe for the given label assignment.
    pub fn sample(cfg: &CorpusConfig, labels: WearLabels, rng: &mut ChaCha8Rng) -> Self {
        let (w, h) = (cfg.img_w, cfg.img_h);
        let wf = w as f64;
        let hf = h as f64;
        let edge_y = (hf * rng.gen_range(0.26..0.38)) as usize;
        let edge_x0 = (wf * rng.gen_range(0.05..0.12)) as usize;
        let edge_x1 = (wf * rng.gen_range(0.88..0.95)) as usize;
        let bottom_y = (hf * rng.gen_range(0.88..0.95)) as usize;
        let bottom_x0 = edge_x0.saturating_sub((wf * rng.gen_range(0.02..0.05)) as usize);
        let bottom_x1 = (edge_x1 + (wf * rng.gen_range(0.02..0.05)) as usize).min(w);

        let easy = cfg.difficulty == Difficulty::Easy;
        // Easy mode keeps the built-up-edge deposits well away from the
        // flank-band intensity; hard mode lets them crowd it.
        let (tool_level, flank_level, chip_level, bue_level, noise_sigma, grad_span) = if easy {
            (130.0, 218.0, 48.0, 172.0, 3.0, 10.0)
        } else {
            (120.0, 178.0, 72.0, 196.0, 9.0, 25.0)
        };
        let background_level = if easy { 25.0 } else { 35.0 };

        let edge_len = edge_x1 - edge_x0;
        // When both mechanisms are present, flank wear takes the left part of
        // the edge and chipping the right, so their pixels never overlap.
        let flank_zone_frac = if labels.flank_wear && labels.chipping {
            rng.gen_range(0.52..0.62)
        } else {
            1.0
        };
        let flank_zone_end = edge_x0 + (edge_len as f64 * flank_zone_frac) as usize;

        let flank = if labels.flank_wear {
            let zone = flank_zone_end - edge_x0;
            let frac = if easy {
                rng.gen_range(0.70..0.98)
            } else {
                rng.gen_range(0.45..0.85)
            };
            let len = ((zone as f64 * frac) as usize).max(8).min(zone);
            let x0 = edge_x0 + rng.gen_range(0..=(zone - len));
            let base = hf * if easy {
                rng.gen_range(0.07..0.14)
            } else {
                rng.gen_range(0.035..0.08)
            };
            let amp1 = base * rng.gen_range(0.15..0.4);
            let f1 = rng.gen_range(0.08..0.3);
            let p1 = rng.gen_range(0.0..std::f64::consts::TAU);
            let min_width = if easy { 3 } else { 2 };
            let depth_cap = bottom_y - edge_y;
            let mut widths: Vec<usize> = (0..len)
                .map(|i| {
                    let v = base + amp1 * (f1 * i as f64 + p1).sin();
                    (v.round() as usize).clamp(min_width, depth_cap)
                })
                .collect();
            // Make sure quantization cannot pull the region under the
            // labelling threshold.
            while widths.iter().sum::<usize>() < AREA_TARGET {
                for v in &mut widths {
                    *v = (*v + 1).min(depth_cap);
                }
            }
            Some(FlankBand {
                x0,
                x1: x0 + len,
                widths,
            })
        } else {
            None
        };

        let chips = if labels.chipping {
            let zone_lo = if labels.flank_wear {
                flank_zone_end + 2
            } else {
                edge_x0
            };
            let zone_hi = edge_x1;
            sample_chips(cfg, zone_lo, zone_hi, edge_y, edge_x0, edge_x1, rng)
        } else {
            Vec::new()
        };

        let bue = if labels.built_up_edge {
            let n = rng.gen_range(2..=5);
            (0..n)
                .map(|_| BueBlob {
                    cx: rng.gen_range(edge_x0..edge_x1),
                    cy: (edge_y as i64 + rng.gen_range(-1i64..=1)).max(0) as usize,
                    radius: (hf * rng.gen_range(0.015..0.045)).clamp(1.5, 6.0),
                })
                .collect()
        } else {
            Vec::new()
        };

        InsertParams {
            width: w,
            height: h,
            edge_y,
            edge_x0,
            edge_x1,
            bottom_y,
            bottom_x0,
            bottom_x1,
            background_level,
            tool_level,
            flank_level,
            chip_level,
            bue_level,
            texture_amp: if easy { 10.0 } else { 16.0 },
            texture_freq: rng.gen_range(0.5..1.1) as f32,
            texture_phase: rng.gen_range(0.0..std::f32::consts::TAU),
            grad: (
                (rng.gen_range(-grad_span..grad_span) / (wf / 2.0)) as f32,
                (rng.gen_range(-grad_span..grad_span) / (hf / 2.0)) as f32,
            ),
            noise_sigma,
            flank,
            chips,
            bue,
        }
    }
}

fn sample_chips(
    cfg: &CorpusConfig,
    zone_lo: usize,
    zone_hi: usize,
    edge_y: usize,
    edge_x0: usize,
    edge_x1: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<ChipNotch> {
    let easy = cfg.difficulty == Difficulty::Easy;
    let hf = cfg.img_h as f64;
    let base_radius = hf * if easy {
        rng.gen_range(0.09..0.15)
    } else {
        rng.gen_range(0.055..0.095)
    };
    let wobble = if easy {
        rng.gen_range(0.12..0.25)
    } else {
        rng.gen_range(0.2..0.32)
    };
    let reach = (base_radius * (1.0 + wobble)).ceil() as usize + 1;
    let slot = 2 * reach + 3;
    let capacity = ((zone_hi.saturating_sub(zone_lo)) / slot).max(1);
    let n = rng.gen_range(1..=4usize).min(capacity);
    let mut notches: Vec<ChipNotch> = Vec::with_capacity(n);
    let span = (zone_hi - zone_lo) / n;
    for i in 0..n {
        let lo = zone_lo + i * span + reach;
        let hi = (zone_lo + (i + 1) * span).saturating_sub(reach);
        let cx = if lo < hi { rng.gen_range(lo..hi) } else { (zone_lo + i * span + span / 2).min(zone_hi - 1) };
        notches.push(ChipNotch {
            cx,
            radius: base_radius * rng.gen_range(0.8..1.2),
            wobble_amp: wobble,
            lobes: rng.gen_range(2..=5),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        });
    }
    // Exact area control: grow the notches until the union of their pixels
    // clears the labelling threshold with margin.
    loop {
        let total: usize = notches
            .iter()
            .map(|c| chip_pixels(c, edge_y, edge_x0, edge_x1, cfg.img_w, cfg.img_h).len())
            .sum();
        if total >= AREA_TARGET {
            break;
        }
        for c in &mut notches {
            c.radius += 0.5;
        }
    }
    notches
}

/// Pixels covered by one notch, clipped to the edge column range and image.
fn chip_pixels(
    notch: &ChipNotch,
    edge_y: usize,
    edge_x0: usize,
    edge_x1: usize,
    img_w: usize,
    img_h: usize,
) -> Vec<(usize, usize)> {
    let reach = (notch.radius * (1.0 + notch.wobble_amp)).ceil() as i64;
    let mut out = Vec::new();
    for dy in 0..=reach {
        let y = edge_y as i64 + dy;
        if y >= img_h as i64 {
            break;
        }
        for dx in -reach..=reach {
            let x = notch.cx as i64 + dx;
            if x < edge_x0 as i64 || x >= edge_x1.min(img_w) as i64 {
                continue;
            }
            let (fdx, fdy) = (dx as f64, dy as f64);
            let theta = fdy.atan2(fdx);
            let rr = notch.radius
                * (1.0 + notch.wobble_amp * (notch.lobes as f64 * theta + notch.phase).sin());
            if fdx * fdx + fdy * fdy <= rr * rr {
                out.push((x as usize, y as usize));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Renders one insert image and its ground truth. The PRNG is consumed only
/// by the additive Gaussian noise, so identical params and rng state produce
/// bit-identical output.
pub fn render_insert(params: &InsertParams, rng: &mut ChaCha8Rng) -> (Raster, SegMap) {
    let (w, h) = (params.width, params.height);
    let mut intensity = vec![params.background_level; w * h];
    let mut classes = vec![SegMap::BACKGROUND; w * h];

    // Insert body.
    for y in params.edge_y..=params.bottom_y.min(h - 1) {
        for x in 0..w {
            if params.tool_contains(x, y) {
                intensity[y * w + x] = params.tool_level;
                classes[y * w + x] = SegMap::TOOL;
            }
        }
    }

    // Built-up edge first: wear regions may overwrite it.
    for blob in &params.bue {
        let r = blob.radius;
        let reach = r.ceil() as i64;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let x = blob.cx as i64 + dx;
                let y = blob.cy as i64 + dy;
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                if (dx * dx + dy * dy) as f64 <= r * r {
                    intensity[y as usize * w + x as usize] = params.bue_level;
                    classes[y as usize * w + x as usize] = SegMap::TOOL;
                }
            }
        }
    }

    // Flank-wear band: bright, with a streaky per-column texture.
    if let Some(band) = &params.flank {
        for (i, &width) in band.widths.iter().enumerate() {
            let x = band.x0 + i;
            if x >= w {
                break;
            }
            let streak = params.texture_amp
                * (params.texture_freq * x as f32 + params.texture_phase).sin();
            for dy in 0..width {
                let y = params.edge_y + dy;
                if y >= h {
                    break;
                }
                intensity[y * w + x] = params.flank_level + streak;
                classes[y * w + x] = SegMap::FLANK_WEAR;
            }
        }
    }

    // Chipping notches: dark bites out of the edge.
    for notch in &params.chips {
        for (x, y) in chip_pixels(notch, params.edge_y, params.edge_x0, params.edge_x1, w, h) {
            intensity[y * w + x] = params.chip_level;
            classes[y * w + x] = SegMap::CHIPPING;
        }
    }

    // Illumination gradient and noise.
    let normal = Normal::new(0.0, params.noise_sigma).expect("sigma >= 0");
    let (cx, cy) = (w as f32 / 2.0, h as f32 / 2.0);
    let mut data = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut v = intensity[y * w + x]
                + params.grad.0 * (x as f32 - cx)
                + params.grad.1 * (y as f32 - cy);
            v += normal.sample(rng) as f32;
            data[y * w + x] = v.round().clamp(0.0, 255.0) as u8;
        }
    }

    let raster = Raster::from_u8(w, h, 1, data).expect("valid raster dims");
    let segmap = SegMap::new(w, h, classes).expect("valid segmap");
    (raster, segmap)
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

/// One manifest row of a generated corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub id: String,
    pub image: String,
    pub segmap: String,
    pub labels: WearLabels,
}

/// Label counts of a generated corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusSummary {
    pub n_images: usize,
    pub flank_wear: usize,
    pub chipping: usize,
    pub no_wear: usize,
    pub built_up_edge: usize,
}

pub const MANIFEST_NAME: &str = "manifest.csv";
const MANIFEST_HEADER: &str = "id,image,segmap,flank_wear,chipping,no_wear,built_up_edge";

/// Exact-quota boolean assignment: `round(n * p)` samples are true, shuffled
/// by the corpus PRNG.
fn quota_bools(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let count = ((n as f64) * p).round() as usize;
    let mut v: Vec<bool> = (0..n).map(|i| i < count.min(n)).collect();
    use rand::seq::SliceRandom;
    v.shuffle(rng);
    v
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + index as u64);
    rng
}

/// Renders sample `index` of the corpus described by `cfg`, given its label
/// assignment. Pure function of `(cfg.seed, index, labels)`.
pub fn render_sample(cfg: &CorpusConfig, index: usize, labels: WearLabels) -> Sample {
    let mut rng = sample_rng(cfg.seed, index);
    let params = InsertParams::sample(cfg, labels, &mut rng);
    let (image, segmap) = render_insert(&params, &mut rng);
    Sample {
        id: format!("{index:06}"),
        image,
        segmap,
        labels,
    }
}

/// Draws the per-sample label assignments for a whole corpus.
pub fn assign_labels(cfg: &CorpusConfig) -> Vec<WearLabels> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let flank = quota_bools(cfg.n_images, cfg.p_flank, &mut rng);
    let chip = quota_bools(cfg.n_images, cfg.p_chip, &mut rng);
    let bue = quota_bools(cfg.n_images, cfg.p_bue, &mut rng);
    (0..cfg.n_images)
        .map(|i| WearLabels::new(flank[i], chip[i], bue[i]))
        .collect()
}

/// Generates the full corpus under `out_dir`: `images/`, `segmaps/`, and a
/// manifest. Output bytes are a pure function of `cfg`.
pub fn generate_corpus(cfg: &CorpusConfig, out_dir: impl AsRef<Path>) -> Result<CorpusSummary> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let images_dir = out_dir.join("images");
    let segmaps_dir = out_dir.join("segmaps");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io_path(&images_dir, "create", e))?;
    std::fs::create_dir_all(&segmaps_dir).map_err(|e| Error::io_path(&segmaps_dir, "create", e))?;

    let labels = assign_labels(cfg);
    let mut rows = Vec::with_capacity(cfg.n_images);
    let mut summary = CorpusSummary {
        n_images: cfg.n_images,
        flank_wear: 0,
        chipping: 0,
        no_wear: 0,
        built_up_edge: 0,
    };

    // Render in bounded batches so peak memory stays flat at large sizes;
    // writes happen in index order, so output is thread-count independent.
    const BATCH: usize = 32;
    for batch_start in (0..cfg.n_images).step_by(BATCH) {
        let batch_end = (batch_start + BATCH).min(cfg.n_images);
        let samples: Vec<Sample> = (batch_start..batch_end)
            .into_par_iter()
            .map(|i| render_sample(cfg, i, labels[i]))
            .collect();
        for sample in samples {
            let derived = labels_from_segmap(&sample.segmap, DEFAULT_MIN_REGION_PX);
            if derived.flank_wear != sample.labels.flank_wear
                || derived.chipping != sample.labels.chipping
            {
                return Err(Error::InvalidData(format!(
                    "generator produced sample {} inconsistent with its labels",
                    sample.id
                )));
            }
            let image_rel = format!("images/{}.pgm", sample.id);
            let segmap_rel = format!("segmaps/{}.pgm", sample.id);
            write_image(&sample.image, out_dir.join(&image_rel))?;
            sample.segmap.write(out_dir.join(&segmap_rel))?;
            summary.flank_wear += sample.labels.flank_wear as usize;
            summary.chipping += sample.labels.chipping as usize;
            summary.no_wear += sample.labels.no_wear as usize;
            summary.built_up_edge += sample.labels.built_up_edge as usize;
            rows.push(ManifestRow {
                id: sample.id,
                image: image_rel,
                segmap: segmap_rel,
                labels: sample.labels,
            });
        }
    }

    write_manifest(&rows, out_dir.join(MANIFEST_NAME))?;
    Ok(summary)
}

pub fn write_manifest(rows: &[ManifestRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(rows.len() * 48 + 64);
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.id,
            r.image,
            r.segmap,
            r.labels.flank_wear as u8,
            r.labels.chipping as u8,
            r.labels.no_wear as u8,
            r.labels.built_up_edge as u8,
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io_path(path, "create", e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| Error::io_path(path, "write", e))?;
    Ok(())
}

pub fn read_manifest(corpus_dir: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = corpus_dir.as_ref().join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io_path(&path, "read", e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == MANIFEST_HEADER => {}
        other => {
            return Err(Error::InvalidData(format!(
                "{}: bad manifest header {other:?}",
                path.display()
            )))
        }
    }
    let parse_bool = |s: &str| -> Result<bool> {
        match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Error::InvalidData(format!(
                "{}: bad boolean field {s:?}",
                path.display()
            ))),
        }
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::InvalidData(format!(
                "{}: row {} has {} fields, expected 7",
                path.display(),
                i + 2,
                fields.len()
            )));
        }
        let labels = WearLabels {
            flank_wear: parse_bool(fields[3])?,
            chipping: parse_bool(fields[4])?,
            no_wear: parse_bool(fields[5])?,
            built_up_edge: parse_bool(fields[6])?,
        };
        if labels.no_wear && (labels.flank_wear || labels.chipping) {
            return Err(Error::InvalidData(format!(
                "{}: row {} marks no_wear together with a wear mechanism",
                path.display(),
                i + 2
            )));
        }
        rows.push(ManifestRow {
            id: fields[0].to_string(),
            image: fields[1].to_string(),
            segmap: fields[2].to_string(),
            labels,
        });
    }
    if rows.is_empty() {
        return Err(Error::InvalidData(format!(
            "{}: manifest has no rows",
            path.display()
        )));
    }
    Ok(rows)
}
