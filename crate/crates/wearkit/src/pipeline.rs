//! End-to-end orchestration: corpus generation, feature extraction with an
//! on-disk cache, cross-validated classification, full-data training and
//! prediction, a cell-wise segmentation baseline, wear-frequency heatmaps,
//! flank-wear width statistics, and a consolidated report.
//!
//! Every command is a pure function of `(PipelineConfig, seed)`: reruns and
//! different worker counts produce byte-identical artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{fit_gbm, Ensemble, GbmConfig};
use crate::convfeat::{extract_features, feature_map_at, BaseInit, ConvBase, FeatureMatrix};
use crate::error::{Error, Result};
use crate::evalkit::{
    cross_validate, train_val_test_split, CvReport, IouCounts, LearnerSpec,
};
use crate::raster::{normalize, read_image, resize_bilinear, write_image, Raster};
use crate::synthgen::{
    generate_corpus, read_manifest, CorpusConfig, CorpusSummary, ManifestRow, SegMap,
};

/// Flank-wear width at which a tool is considered spent (ISO tool-life rule).
pub const TOOL_LIFE_CRITERION_MM: f64 = 0.3;

/// Binary classification target of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    FlankWear,
    Chipping,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::FlankWear => "flank_wear",
            Target::Chipping => "chipping",
        }
    }

    pub fn label_of(&self, row: &ManifestRow) -> u8 {
        match self {
            Target::FlankWear => row.labels.flank_wear as u8,
            Target::Chipping => row.labels.chipping as u8,
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flank_wear" => Ok(Target::FlankWear),
            "chipping" => Ok(Target::Chipping),
            other => Err(Error::InvalidConfig(format!(
                "unknown target {other:?}, expected flank_wear or chipping"
            ))),
        }
    }
}

/// Artifact locations, resolved against the run's root directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelinePaths {
    pub corpus: PathBuf,
    pub cache: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
}

impl Default for PipelinePaths {
    fn default() -> Self {
        PipelinePaths {
            corpus: "corpus".into(),
            cache: "cache/features.wfc".into(),
            models: "models".into(),
            reports: "reports".into(),
        }
    }
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Declarative form of the whole pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    /// Input size handed to the feature extractor, (width, height).
    pub resize_to: (usize, usize),
    pub base_init: BaseInit,
    pub gbm: GbmConfig,
    pub k_folds: usize,
    /// Convolution block whose activations feed the segmentation baseline;
    /// cells cover `2^seg_block` pixels per side.
    pub seg_block: usize,
    pub paths: PipelinePaths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: CorpusConfig::default(),
            resize_to: (640, 480),
            base_init: BaseInit::Random { seed: 7 },
            gbm: GbmConfig::default(),
            k_folds: 3,
            seg_block: 2,
            paths: PipelinePaths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.gbm.validate()?;
        if self.resize_to.0 < 32 || self.resize_to.1 < 32 {
            return Err(Error::InvalidConfig(format!(
                "resize_to {}x{} below the network minimum of 32",
                self.resize_to.0, self.resize_to.1
            )));
        }
        if self.k_folds < 2 {
            return Err(Error::InvalidConfig("k_folds must be at least 2".into()));
        }
        if !(1..=5).contains(&self.seg_block) {
            return Err(Error::InvalidConfig(format!(
                "seg_block {} outside 1..=5",
                self.seg_block
            )));
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io_path(path, "read", e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn corpus_dir(&self, root: &Path) -> PathBuf {
        resolve(root, &self.paths.corpus)
    }

    pub fn cache_file(&self, root: &Path) -> PathBuf {
        resolve(root, &self.paths.cache)
    }

    pub fn model_file(&self, root: &Path, target: Target) -> PathBuf {
        resolve(root, &self.paths.models).join(format!("{}.wgbm", target.as_str()))
    }

    pub fn crossval_report_file(&self, root: &Path, target: Target) -> PathBuf {
        resolve(root, &self.paths.reports).join(format!("crossval_{}.json", target.as_str()))
    }

    pub fn seg_report_file(&self, root: &Path) -> PathBuf {
        resolve(root, &self.paths.reports).join("segmentation.json")
    }

    pub fn seg_maps_dir(&self, root: &Path) -> PathBuf {
        resolve(root, &self.paths.reports).join("segmaps")
    }

    pub fn build_base(&self, root: &Path) -> Result<ConvBase> {
        match &self.base_init {
            BaseInit::Random { seed } => Ok(ConvBase::random(*seed)),
            BaseInit::Load { path } => ConvBase::load(resolve(root, path)),
        }
    }
}

// ---------------------------------------------------------------------------
// generate / extract / crossval / train / predict
// ---------------------------------------------------------------------------

pub fn run_generate(cfg: &PipelineConfig, root: &Path) -> Result<CorpusSummary> {
    generate_corpus(&cfg.corpus, cfg.corpus_dir(root))
}

/// Table of label counts and relative frequencies.
pub fn format_summary(s: &CorpusSummary) -> String {
    let pct = |c: usize| 100.0 * c as f64 / s.n_images as f64;
    let mut out = String::new();
    out.push_str(&format!("{} images\n", s.n_images));
    out.push_str("wear mechanism   frequency (relative)\n");
    for (name, c) in [
        ("flank wear", s.flank_wear),
        ("chipping", s.chipping),
        ("no wear", s.no_wear),
        ("built-up edge", s.built_up_edge),
    ] {
        out.push_str(&format!("{name:<16} {c} ({:.2}%)\n", pct(c)));
    }
    out
}

fn manifest_or_missing(cfg: &PipelineConfig, root: &Path) -> Result<Vec<ManifestRow>> {
    let dir = cfg.corpus_dir(root);
    if !dir.join(crate::synthgen::MANIFEST_NAME).exists() {
        return Err(Error::MissingInput(format!(
            "corpus manifest at {}; run `wear generate` first",
            dir.display()
        )));
    }
    read_manifest(&dir)
}

/// Resizes, normalizes, and extracts features for every corpus image, in
/// manifest order, and saves the cache.
pub fn run_extract(cfg: &PipelineConfig, root: &Path) -> Result<(usize, usize)> {
    let rows = manifest_or_missing(cfg, root)?;
    let base = cfg.build_base(root)?;
    let corpus_dir = cfg.corpus_dir(root);
    let (rw, rh) = cfg.resize_to;

    let n_features = crate::convfeat::feature_len(rw, rh);
    let mut fm = FeatureMatrix::empty(n_features);
    // Bounded batches keep activation memory flat; order is preserved.
    const BATCH: usize = 16;
    for chunk in rows.chunks(BATCH) {
        let feats: Vec<Result<Vec<f32>>> = chunk
            .par_iter()
            .map(|row| {
                let img = read_image(corpus_dir.join(&row.image))?;
                let resized = resize_bilinear(&img, rw, rh)?;
                extract_features(&base, &normalize(&resized))
            })
            .collect();
        for (row, feat) in chunk.iter().zip(feats) {
            fm.push_row(row.id.clone(), feat?)?;
        }
    }

    let cache = cfg.cache_file(root);
    if let Some(parent) = cache.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io_path(parent, "create", e))?;
    }
    fm.save(&cache)?;
    Ok((fm.n_samples(), fm.n_features()))
}

fn load_cache(cfg: &PipelineConfig, root: &Path) -> Result<FeatureMatrix> {
    let cache = cfg.cache_file(root);
    if !cache.exists() {
        return Err(Error::MissingInput(format!(
            "feature cache at {}; run `wear extract` first",
            cache.display()
        )));
    }
    FeatureMatrix::load(&cache)
}

fn target_labels(rows: &[ManifestRow], fm: &FeatureMatrix, target: Target) -> Result<Vec<u8>> {
    if fm.n_samples() != rows.len()
        || fm.ids().iter().zip(rows).any(|(id, row)| id != &row.id)
    {
        return Err(Error::InvalidData(
            "feature cache ids do not match the manifest; re-run `wear extract`".into(),
        ));
    }
    Ok(rows.iter().map(|r| target.label_of(r)).collect())
}

/// Cross-validates the chosen target on the cached features and writes the
/// JSON report. `dummy_majority` swaps in the majority-class baseline.
pub fn run_crossval(
    cfg: &PipelineConfig,
    root: &Path,
    target: Target,
    dummy_majority: bool,
) -> Result<CvReport> {
    let rows = manifest_or_missing(cfg, root)?;
    let fm = load_cache(cfg, root)?;
    let labels = target_labels(&rows, &fm, target)?;
    let learner = if dummy_majority {
        LearnerSpec::Majority
    } else {
        LearnerSpec::Gbm(cfg.gbm.clone())
    };
    let report = cross_validate(&fm, &labels, cfg.k_folds, cfg.gbm.seed, &learner)?;
    let path = cfg.crossval_report_file(root, target);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io_path(parent, "create", e))?;
    }
    crate::evalkit::write_cv_report(&path, target.as_str(), cfg.k_folds, &report)?;
    Ok(report)
}

/// Fits the target's classifier on the full cached corpus and serializes it.
pub fn run_train(cfg: &PipelineConfig, root: &Path, target: Target) -> Result<PathBuf> {
    let rows = manifest_or_missing(cfg, root)?;
    let fm = load_cache(cfg, root)?;
    let labels = target_labels(&rows, &fm, target)?;
    let model = fit_gbm(&fm, &labels, &cfg.gbm)?;
    let path = cfg.model_file(root, target);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io_path(parent, "create", e))?;
    }
    model.save(&path)?;
    Ok(path)
}

/// Runs resize -> normalize -> extract -> predict for one image file.
pub fn run_predict(
    cfg: &PipelineConfig,
    root: &Path,
    model_path: &Path,
    image_path: &Path,
) -> Result<(u8, f64)> {
    if !model_path.exists() {
        return Err(Error::MissingInput(format!(
            "model file at {}; run `wear train` first",
            model_path.display()
        )));
    }
    let model = Ensemble::load(model_path)?;
    let base = cfg.build_base(root)?;
    let img = read_image(image_path)?;
    let resized = resize_bilinear(&img, cfg.resize_to.0, cfg.resize_to.1)?;
    let features = extract_features(&base, &normalize(&resized))?;
    let proba = model.predict_proba(&features)?;
    Ok(((proba >= 0.5) as u8, proba))
}

// ---------------------------------------------------------------------------
// Cell-wise segmentation baseline
// ---------------------------------------------------------------------------

/// One-vs-rest cell classifiers over block activations.
#[derive(Debug, Clone)]
pub struct CellModels {
    pub block: usize,
    pub flank: Ensemble,
    pub chip: Ensemble,
}

/// Majority class of a pixel block, wear classes winning ties. Equal counts
/// are resolved in the preference order flank wear, chipping, tool,
/// background.
fn cell_majority(map: &SegMap, cy: usize, cx: usize, scale: usize, hc: usize, wc: usize) -> u8 {
    let y_end = if cy + 1 == hc { map.height() } else { (cy + 1) * scale };
    let x_end = if cx + 1 == wc { map.width() } else { (cx + 1) * scale };
    let mut counts = [0usize; SegMap::N_CLASSES];
    for y in cy * scale..y_end {
        for x in cx * scale..x_end {
            counts[map.class_at(x, y) as usize] += 1;
        }
    }
    const PREFERENCE: [u8; 4] = [SegMap::FLANK_WEAR, SegMap::CHIPPING, SegMap::TOOL, SegMap::BACKGROUND];
    let mut best = PREFERENCE[0];
    for &cls in &PREFERENCE {
        if counts[cls as usize] > counts[best as usize] {
            best = cls;
        }
    }
    best
}

fn cell_features(fmap: &crate::raster::Tensor3, cy: usize, cx: usize) -> Vec<f32> {
    (0..fmap.channels()).map(|c| fmap.get(c, cy, cx)).collect()
}

/// Classifies each cell of the image's block activation map and upsamples
/// the result to the pixel grid by nearest neighbor. Cells where neither
/// wear probability reaches 0.5 are emitted as background.
pub fn segment_cellwise(base: &ConvBase, models: &CellModels, image: &Raster) -> Result<SegMap> {
    let t = normalize(image);
    let fmap = feature_map_at(base, &t, models.block)?;
    if models.flank.n_features() != fmap.channels() || models.chip.n_features() != fmap.channels()
    {
        return Err(Error::ShapeMismatch(format!(
            "cell models expect {} features, block {} yields {} channels",
            models.flank.n_features(),
            models.block,
            fmap.channels()
        )));
    }
    let (hc, wc) = (fmap.height(), fmap.width());
    let scale = 1usize << models.block;
    let mut cell_classes = vec![SegMap::BACKGROUND; hc * wc];
    for cy in 0..hc {
        for cx in 0..wc {
            let feats = cell_features(&fmap, cy, cx);
            let p_flank = models.flank.predict_proba(&feats)?;
            let p_chip = models.chip.predict_proba(&feats)?;
            let (p_best, cls) = if p_flank >= p_chip {
                (p_flank, SegMap::FLANK_WEAR)
            } else {
                (p_chip, SegMap::CHIPPING)
            };
            if p_best >= 0.5 {
                cell_classes[cy * wc + cx] = cls;
            }
        }
    }
    let (w, h) = (image.width(), image.height());
    let mut classes = vec![SegMap::BACKGROUND; w * h];
    for y in 0..h {
        let cy = (y / scale).min(hc - 1);
        for x in 0..w {
            let cx = (x / scale).min(wc - 1);
            classes[y * w + x] = cell_classes[cy * wc + cx];
        }
    }
    SegMap::new(w, h, classes)
}

/// Segmentation-baseline evaluation results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegReport {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub iou_flank_wear: f64,
    pub iou_chipping: f64,
    pub mean_iou: f64,
}

/// Trains the cell models on the train split, writes predicted maps for the
/// test split, and reports pixel-pooled IoU over the wear classes.
pub fn run_segment(cfg: &PipelineConfig, root: &Path) -> Result<SegReport> {
    let rows = manifest_or_missing(cfg, root)?;
    if cfg.resize_to != (cfg.corpus.img_w, cfg.corpus.img_h) {
        return Err(Error::InvalidConfig(format!(
            "segmentation requires resize_to == corpus dims so cells align with \
             ground truth; got {}x{} vs {}x{}",
            cfg.resize_to.0, cfg.resize_to.1, cfg.corpus.img_w, cfg.corpus.img_h
        )));
    }
    let base = cfg.build_base(root)?;
    let corpus_dir = cfg.corpus_dir(root);
    let scale = 1usize << cfg.seg_block;

    // Three disjoint sets, stratified on the flank-wear label. The
    // validation set is reserved for tuning and not consumed here.
    let labels: Vec<u8> = rows.iter().map(|r| r.labels.flank_wear as u8).collect();
    let [train_idx, val_idx, test_idx] =
        train_val_test_split(&labels, [0.6, 0.2, 0.2], cfg.corpus.seed)?;

    // Build the cell dataset from the training images.
    struct CellBatch {
        ids: Vec<String>,
        feats: Vec<f32>,
        y_flank: Vec<u8>,
        y_chip: Vec<u8>,
        n_channels: usize,
    }
    let batches: Vec<Result<CellBatch>> = train_idx
        .par_iter()
        .map(|&i| {
            let row = &rows[i];
            let img = read_image(corpus_dir.join(&row.image))?;
            let truth = SegMap::read(corpus_dir.join(&row.segmap))?;
            let fmap = feature_map_at(&base, &normalize(&img), cfg.seg_block)?;
            let (hc, wc) = (fmap.height(), fmap.width());
            let mut batch = CellBatch {
                ids: Vec::with_capacity(hc * wc),
                feats: Vec::with_capacity(hc * wc * fmap.channels()),
                y_flank: Vec::with_capacity(hc * wc),
                y_chip: Vec::with_capacity(hc * wc),
                n_channels: fmap.channels(),
            };
            for cy in 0..hc {
                for cx in 0..wc {
                    let cls = cell_majority(&truth, cy, cx, scale, hc, wc);
                    batch.ids.push(format!("{}:{cy}:{cx}", row.id));
                    batch.feats.extend(cell_features(&fmap, cy, cx));
                    batch.y_flank.push((cls == SegMap::FLANK_WEAR) as u8);
                    batch.y_chip.push((cls == SegMap::CHIPPING) as u8);
                }
            }
            Ok(batch)
        })
        .collect();

    let mut ids = Vec::new();
    let mut feats = Vec::new();
    let mut y_flank = Vec::new();
    let mut y_chip = Vec::new();
    let mut n_channels = 0;
    for b in batches {
        let b = b?;
        n_channels = b.n_channels;
        ids.extend(b.ids);
        feats.extend(b.feats);
        y_flank.extend(b.y_flank);
        y_chip.extend(b.y_chip);
    }
    let cells = FeatureMatrix::new(n_channels, ids, feats)?;

    let flank_model = fit_gbm(&cells, &y_flank, &cfg.gbm).map_err(|e| match e {
        Error::InvalidData(d) => Error::InvalidData(format!(
            "training flank-wear cell model: {d} (corpus too small or wear-free?)"
        )),
        e => e,
    })?;
    let chip_model = fit_gbm(&cells, &y_chip, &cfg.gbm).map_err(|e| match e {
        Error::InvalidData(d) => {
            Error::InvalidData(format!("training chipping cell model: {d}"))
        }
        e => e,
    })?;
    let models = CellModels {
        block: cfg.seg_block,
        flank: flank_model,
        chip: chip_model,
    };

    // Predict the held-out test set and pool pixel counts.
    let maps_dir = cfg.seg_maps_dir(root);
    std::fs::create_dir_all(&maps_dir).map_err(|e| Error::io_path(&maps_dir, "create", e))?;
    let predictions: Vec<Result<(usize, SegMap, SegMap)>> = test_idx
        .par_iter()
        .map(|&i| {
            let row = &rows[i];
            let img = read_image(corpus_dir.join(&row.image))?;
            let truth = SegMap::read(corpus_dir.join(&row.segmap))?;
            let pred = segment_cellwise(&base, &models, &img)?;
            Ok((i, truth, pred))
        })
        .collect();

    let mut flank_counts = IouCounts::default();
    let mut chip_counts = IouCounts::default();
    for p in predictions {
        let (i, truth, pred) = p?;
        flank_counts.add_pair(&truth, &pred, SegMap::FLANK_WEAR)?;
        chip_counts.add_pair(&truth, &pred, SegMap::CHIPPING)?;
        pred.write(maps_dir.join(format!("{}.pgm", rows[i].id)))?;
    }

    let report = SegReport {
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        n_test: test_idx.len(),
        iou_flank_wear: flank_counts.value(),
        iou_chipping: chip_counts.value(),
        mean_iou: (flank_counts.value() + chip_counts.value()) / 2.0,
    };

    let path = cfg.seg_report_file(root);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io_path(parent, "create", e))?;
    }
    let json = format!(
        "{{\n  \"block\": {},\n  \"cell_px\": {},\n  \"n_train\": {},\n  \"n_val\": {},\n  \"n_test\": {},\n  \"iou_flank_wear\": {:.6},\n  \"iou_chipping\": {:.6},\n  \"mean_iou\": {:.6}\n}}\n",
        cfg.seg_block,
        scale,
        report.n_train,
        report.n_val,
        report.n_test,
        report.iou_flank_wear,
        report.iou_chipping,
        report.mean_iou
    );
    std::fs::write(&path, json).map_err(|e| Error::io_path(&path, "write", e))?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Wear statistics and heatmaps
// ---------------------------------------------------------------------------

/// Flank-wear width statistics, measured perpendicular to the cutting edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WearStats {
    pub vb_max_mm: f64,
    pub vb_avg_mm: f64,
    pub exceeds_criterion: bool,
    pub columns_measured: usize,
}

/// Measures per-column flank-wear widths (class-2 pixel counts per column;
/// the cutting edge runs horizontally). `vb_max` is the widest column,
/// `vb_avg` the mean over wear-bearing columns; the criterion flag compares
/// `vb_max` against 0.3 mm.
pub fn wear_width_stats(m: &SegMap, px_per_mm: f64) -> WearStats {
    let mut widths = Vec::new();
    for x in 0..m.width() {
        let count = (0..m.height())
            .filter(|&y| m.class_at(x, y) == SegMap::FLANK_WEAR)
            .count();
        if count > 0 {
            widths.push(count);
        }
    }
    if widths.is_empty() {
        return WearStats {
            vb_max_mm: 0.0,
            vb_avg_mm: 0.0,
            exceeds_criterion: false,
            columns_measured: 0,
        };
    }
    let max_px = *widths.iter().max().unwrap();
    let sum_px: usize = widths.iter().sum();
    let vb_max_mm = max_px as f64 / px_per_mm;
    let vb_avg_mm = sum_px as f64 / widths.len() as f64 / px_per_mm;
    WearStats {
        vb_max_mm,
        vb_avg_mm,
        exceeds_criterion: vb_max_mm >= TOOL_LIFE_CRITERION_MM,
        columns_measured: widths.len(),
    }
}

/// Per-pixel frequency of `cls` across the maps, as a grayscale raster
/// (`round(fraction * 255)`).
pub fn heatmap(maps: &[SegMap], cls: u8) -> Result<Raster> {
    let Some(first) = maps.first() else {
        return Err(Error::InvalidData("heatmap needs at least one segmap".into()));
    };
    let (w, h) = (first.width(), first.height());
    let mut acc = vec![0u32; w * h];
    for m in maps {
        if m.width() != w || m.height() != h {
            return Err(Error::ShapeMismatch(format!(
                "segmap dims {}x{} differ from first map {}x{}",
                m.width(),
                m.height(),
                w,
                h
            )));
        }
        for (slot, &c) in acc.iter_mut().zip(m.classes()) {
            *slot += (c == cls) as u32;
        }
    }
    let n = maps.len() as f64;
    let data: Vec<u8> = acc
        .iter()
        .map(|&c| (c as f64 / n * 255.0).round() as u8)
        .collect();
    Raster::from_u8(w, h, 1, data)
}

/// Loads segmaps from paths (directories expand to their sorted `.pgm`
/// files) and writes the class-frequency heatmap.
pub fn run_heatmap(paths: &[PathBuf], cls: u8, out: &Path) -> Result<()> {
    if cls > 3 {
        return Err(Error::InvalidConfig(format!("class {cls} outside 0..=3")));
    }
    let files = expand_map_paths(paths)?;
    let maps = files
        .iter()
        .map(SegMap::read)
        .collect::<Result<Vec<_>>>()?;
    let hm = heatmap(&maps, cls)?;
    write_image(&hm, out)
}

/// Expands directories into their sorted `.pgm` members.
pub fn expand_map_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut members: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io_path(p, "read dir", e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
                .collect();
            members.sort();
            files.extend(members);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::InvalidData("no segmap files given".into()));
    }
    Ok(files)
}

/// Measures every given map; returns `(file stem, stats)` pairs in input order.
pub fn run_measure(paths: &[PathBuf], px_per_mm: f64) -> Result<Vec<(String, WearStats)>> {
    if !px_per_mm.is_finite() || px_per_mm <= 0.0 {
        return Err(Error::InvalidConfig("px_per_mm must be positive".into()));
    }
    let files = expand_map_paths(paths)?;
    files
        .iter()
        .map(|p| {
            let m = SegMap::read(p)?;
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            Ok((id, wear_width_stats(&m, px_per_mm)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Consolidated report
// ---------------------------------------------------------------------------

struct TaskResult {
    mcc: f64,
    tp: u64,
    fp: u64,
    fn_: u64,
    tn: u64,
}

fn read_crossval_json(path: &Path) -> Result<TaskResult> {
    if !path.exists() {
        return Err(Error::MissingInput(format!(
            "cross-validation report at {}; run `wear crossval`",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(path, "read", e))?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?;
    let pooled = &v["pooled"];
    let num = |k: &str| -> Result<f64> {
        pooled[k]
            .as_f64()
            .ok_or_else(|| Error::InvalidData(format!("{}: missing pooled.{k}", path.display())))
    };
    Ok(TaskResult {
        mcc: num("mcc")?,
        tp: num("tp")? as u64,
        fp: num("fp")? as u64,
        fn_: num("fn")? as u64,
        tn: num("tn")? as u64,
    })
}

fn read_seg_json(path: &Path) -> Result<(f64, f64, f64)> {
    if !path.exists() {
        return Err(Error::MissingInput(format!(
            "segmentation report at {}; run `wear segment`",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_path(path, "read", e))?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))?;
    let num = |k: &str| -> Result<f64> {
        v[k].as_f64()
            .ok_or_else(|| Error::InvalidData(format!("{}: missing {k}", path.display())))
    };
    Ok((num("iou_flank_wear")?, num("iou_chipping")?, num("mean_iou")?))
}

/// Builds the consolidated report from the artifacts on disk (manifest,
/// cross-validation reports, segmentation report, ground-truth wear maps),
/// writes `report.json` and `report.txt`, and returns the text form.
pub fn run_report(cfg: &PipelineConfig, root: &Path) -> Result<String> {
    let rows = manifest_or_missing(cfg, root)?;
    let n = rows.len();
    let count = |f: &dyn Fn(&ManifestRow) -> bool| rows.iter().filter(|r| f(r)).count();
    let flank_n = count(&|r| r.labels.flank_wear);
    let chip_n = count(&|r| r.labels.chipping);
    let none_n = count(&|r| r.labels.no_wear);
    let bue_n = count(&|r| r.labels.built_up_edge);

    let flank_cv = read_crossval_json(&cfg.crossval_report_file(root, Target::FlankWear))?;
    let chip_cv = read_crossval_json(&cfg.crossval_report_file(root, Target::Chipping))?;
    let (iou_f, iou_c, iou_m) = read_seg_json(&cfg.seg_report_file(root))?;

    // Flank-wear width statistics over the ground-truth maps.
    let corpus_dir = cfg.corpus_dir(root);
    let stats: Vec<WearStats> = rows
        .par_iter()
        .map(|r| {
            let m = SegMap::read(corpus_dir.join(&r.segmap))?;
            Ok(wear_width_stats(&m, cfg.corpus.px_per_mm))
        })
        .collect::<Result<Vec<_>>>()?;
    let worn: Vec<&WearStats> = stats.iter().filter(|s| s.columns_measured > 0).collect();
    let exceed_n = stats.iter().filter(|s| s.exceeds_criterion).count();
    let (vb_mean, vb_max) = if worn.is_empty() {
        (0.0, 0.0)
    } else {
        (
            worn.iter().map(|s| s.vb_max_mm).sum::<f64>() / worn.len() as f64,
            worn.iter().map(|s| s.vb_max_mm).fold(0.0, f64::max),
        )
    };
    let exceed_rate = exceed_n as f64 / n as f64;

    let pct = |c: usize| 100.0 * c as f64 / n as f64;
    let mut text = String::new();
    text.push_str(&format!("wear characterization report ({n} samples)\n\n"));
    text.push_str("label prevalence\n");
    text.push_str(&format!("  flank wear     {flank_n:>6} ({:.2}%)\n", pct(flank_n)));
    text.push_str(&format!("  chipping       {chip_n:>6} ({:.2}%)\n", pct(chip_n)));
    text.push_str(&format!("  no wear        {none_n:>6} ({:.2}%)\n", pct(none_n)));
    text.push_str(&format!("  built-up edge  {bue_n:>6} ({:.2}%)\n\n", pct(bue_n)));
    text.push_str("classification (pooled over folds)\n");
    for (name, r) in [("flank wear", &flank_cv), ("chipping", &chip_cv)] {
        text.push_str(&format!(
            "  {name:<12} mcc {:.3}  tp {} fp {} fn {} tn {}\n",
            r.mcc, r.tp, r.fp, r.fn_, r.tn
        ));
    }
    text.push_str("\nsegmentation baseline (held-out IoU)\n");
    text.push_str(&format!("  flank wear {iou_f:.3}  chipping {iou_c:.3}  mean {iou_m:.3}\n\n"));
    text.push_str("flank wear width (ground truth)\n");
    text.push_str(&format!(
        "  vb_max mean {:.3} mm, max {:.3} mm over {} worn samples\n",
        vb_mean,
        vb_max,
        worn.len()
    ));
    text.push_str(&format!(
        "  {exceed_n} of {n} samples ({:.2}%) exceed the {TOOL_LIFE_CRITERION_MM} mm tool-life criterion\n",
        100.0 * exceed_rate
    ));

    let json = format!(
        concat!(
            "{{\n",
            "  \"n\": {},\n",
            "  \"prevalence\": {{\"flank_wear\": {}, \"chipping\": {}, \"no_wear\": {}, \"built_up_edge\": {}}},\n",
            "  \"classification\": {{\n",
            "    \"flank_wear\": {{\"mcc\": {:.6}, \"tp\": {}, \"fp\": {}, \"fn\": {}, \"tn\": {}}},\n",
            "    \"chipping\": {{\"mcc\": {:.6}, \"tp\": {}, \"fp\": {}, \"fn\": {}, \"tn\": {}}}\n",
            "  }},\n",
            "  \"segmentation\": {{\"iou_flank_wear\": {:.6}, \"iou_chipping\": {:.6}, \"mean_iou\": {:.6}}},\n",
            "  \"wear_stats\": {{\"worn_samples\": {}, \"vb_max_mean_mm\": {:.6}, \"vb_max_max_mm\": {:.6}, \"exceedance_rate\": {:.6}}}\n",
            "}}\n"
        ),
        n,
        flank_n,
        chip_n,
        none_n,
        bue_n,
        flank_cv.mcc,
        flank_cv.tp,
        flank_cv.fp,
        flank_cv.fn_,
        flank_cv.tn,
        chip_cv.mcc,
        chip_cv.tp,
        chip_cv.fp,
        chip_cv.fn_,
        chip_cv.tn,
        iou_f,
        iou_c,
        iou_m,
        worn.len(),
        vb_mean,
        vb_max,
        exceed_rate
    );

    let reports_dir = resolve(root, &cfg.paths.reports);
    std::fs::create_dir_all(&reports_dir)
        .map_err(|e| Error::io_path(&reports_dir, "create", e))?;
    let json_path = reports_dir.join("report.json");
    std::fs::write(&json_path, json).map_err(|e| Error::io_path(&json_path, "write", e))?;
    let txt_path = reports_dir.join("report.txt");
    let mut f =
        std::fs::File::create(&txt_path).map_err(|e| Error::io_path(&txt_path, "create", e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| Error::io_path(&txt_path, "write", e))?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wear_stats_constant_band() {
        let mut m = SegMap::filled(40, 40, SegMap::TOOL).unwrap();
        for x in 5..25 {
            for y in 10..20 {
                m.set(x, y, SegMap::FLANK_WEAR);
            }
        }
        let s = wear_width_stats(&m, 100.0);
        assert_eq!(s.vb_max_mm, 0.1);
        assert_eq!(s.vb_avg_mm, 0.1);
        assert!(!s.exceeds_criterion);
        assert_eq!(s.columns_measured, 20);
    }

    #[test]
    fn wear_stats_35px_band_exceeds() {
        let mut m = SegMap::filled(60, 60, SegMap::TOOL).unwrap();
        // Varying widths, one column reaching 35 px.
        for x in 10..30 {
            let width = if x == 17 { 35 } else { 12 };
            for y in 5..5 + width {
                m.set(x, y, SegMap::FLANK_WEAR);
            }
        }
        let s = wear_width_stats(&m, 100.0);
        assert_eq!(s.vb_max_mm, 0.35);
        assert!(s.exceeds_criterion);
        assert!(s.vb_avg_mm <= s.vb_max_mm);
    }

    #[test]
    fn wear_stats_empty_map() {
        let m = SegMap::filled(10, 10, SegMap::TOOL).unwrap();
        let s = wear_width_stats(&m, 100.0);
        assert_eq!(
            s,
            WearStats {
                vb_max_mm: 0.0,
                vb_avg_mm: 0.0,
                exceeds_criterion: false,
                columns_measured: 0
            }
        );
    }

    #[test]
    fn wear_stats_flip_invariant() {
        let mut m = SegMap::filled(30, 30, SegMap::TOOL).unwrap();
        for (i, &w) in [3usize, 7, 4, 9, 2].iter().enumerate() {
            for y in 0..w {
                m.set(10 + i, y + 2, SegMap::FLANK_WEAR);
            }
        }
        let flipped = SegMap::new(
            30,
            30,
            (0..30 * 30)
                .map(|i| {
                    let (y, x) = (i / 30, i % 30);
                    m.class_at(29 - x, y)
                })
                .collect(),
        )
        .unwrap();
        assert_eq!(wear_width_stats(&m, 50.0), wear_width_stats(&flipped, 50.0));
    }

    #[test]
    fn heatmap_identical_maps_are_binary() {
        let mut m = SegMap::filled(8, 8, SegMap::TOOL).unwrap();
        m.set(2, 2, SegMap::CHIPPING);
        m.set(3, 2, SegMap::CHIPPING);
        let hm = heatmap(&[m.clone(), m.clone(), m.clone()], SegMap::CHIPPING).unwrap();
        let px = hm.as_u8().unwrap();
        assert_eq!(px[2 * 8 + 2], 255);
        assert_eq!(px[2 * 8 + 3], 255);
        assert_eq!(px[0], 0);
    }

    #[test]
    fn heatmap_half_frequency_is_128() {
        let mut a = SegMap::filled(6, 6, SegMap::TOOL).unwrap();
        let mut b = SegMap::filled(6, 6, SegMap::TOOL).unwrap();
        a.set(1, 1, SegMap::FLANK_WEAR);
        b.set(4, 4, SegMap::FLANK_WEAR);
        let hm = heatmap(&[a, b], SegMap::FLANK_WEAR).unwrap();
        let px = hm.as_u8().unwrap();
        assert_eq!(px[6 + 1], 128);
        assert_eq!(px[4 * 6 + 4], 128);
    }

    #[test]
    fn heatmap_single_map_is_indicator() {
        let mut m = SegMap::filled(5, 5, SegMap::BACKGROUND).unwrap();
        m.set(0, 0, SegMap::FLANK_WEAR);
        let hm = heatmap(&[m], SegMap::FLANK_WEAR).unwrap();
        let px = hm.as_u8().unwrap();
        assert_eq!(px[0], 255);
        assert!(px[1..].iter().all(|&v| v == 0));
    }

    #[test]
    fn heatmap_rejects_empty_and_mismatched() {
        assert!(heatmap(&[], SegMap::TOOL).is_err());
        let a = SegMap::filled(4, 4, SegMap::TOOL).unwrap();
        let b = SegMap::filled(5, 4, SegMap::TOOL).unwrap();
        assert!(heatmap(&[a, b], SegMap::TOOL).is_err());
    }

    #[test]
    fn cell_majority_prefers_wear_on_ties() {
        // 4x4 cell, half flank wear, half tool: wear must win.
        let mut m = SegMap::filled(4, 4, SegMap::TOOL).unwrap();
        for y in 0..2 {
            for x in 0..4 {
                m.set(x, y, SegMap::FLANK_WEAR);
            }
        }
        assert_eq!(cell_majority(&m, 0, 0, 4, 1, 1), SegMap::FLANK_WEAR);

        // Clear tool majority stays tool.
        let mut m = SegMap::filled(4, 4, SegMap::TOOL).unwrap();
        m.set(0, 0, SegMap::CHIPPING);
        assert_eq!(cell_majority(&m, 0, 0, 4, 1, 1), SegMap::TOOL);
    }

    #[test]
    fn config_defaults_validate_and_roundtrip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.resize_to, (640, 480));
        assert_eq!(cfg.k_folds, 3);
        assert_eq!(cfg.seg_block, 2);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        let loaded = PipelineConfig::from_file(&path).unwrap();
        assert_eq!(loaded.resize_to, cfg.resize_to);
        assert_eq!(loaded.corpus.n_images, cfg.corpus.n_images);

        // Partial configs take defaults for the rest.
        std::fs::write(&path, r#"{"k_folds": 4}"#).unwrap();
        let partial = PipelineConfig::from_file(&path).unwrap();
        assert_eq!(partial.k_folds, 4);
        assert_eq!(partial.seg_block, 2);

        std::fs::write(&path, r#"{"resize_to": [16, 16]}"#).unwrap();
        assert!(matches!(
            PipelineConfig::from_file(&path),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn missing_artifacts_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::default();
        match run_crossval(&cfg, dir.path(), Target::FlankWear, false) {
            Err(Error::MissingInput(msg)) => assert!(msg.contains("manifest")),
            other => panic!("expected missing input, got {other:?}"),
        }
        match run_report(&cfg, dir.path()) {
            Err(Error::MissingInput(msg)) => assert!(msg.contains("manifest")),
            other => panic!("expected missing input, got {other:?}"),
        }
    }

    #[test]
    fn target_parses_and_rejects() {
        assert_eq!(Target::from_str("flank_wear").unwrap(), Target::FlankWear);
        assert_eq!(Target::from_str("chipping").unwrap(), Target::Chipping);
        assert!(Target::from_str("cratering").is_err());
    }
}
