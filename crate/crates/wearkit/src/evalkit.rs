//! Evaluation machinery: confusion matrices with MCC, stratified k-fold
//! cross-validation, disjoint three-way splits, and pixelwise IoU.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::boost::{fit_gbm, GbmConfig};
use crate::convfeat::FeatureMatrix;
use crate::error::{Error, Result};
use crate::synthgen::SegMap;

/// Binary-outcome counts; the positive class is "wear present".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// `tp / (tp + fp)`, or 0 when undefined.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, or 0 when undefined.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, or 0 when undefined.
    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: u64, denom: u64) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

/// Counts the four outcome cells for equal-length binary label slices.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::InvalidData(format!(
            "label slices must be equal non-zero lengths, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t != 0, p != 0) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Matthews Correlation Coefficient:
/// `(tp*tn - fp*fn) / sqrt((tp+fp)(tp+fn)(tn+fp)(tn+fn))`.
/// Returns 0 when any factor of the denominator is zero.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let (tp, fp, fn_, tn) = (
        cm.tp as f64,
        cm.fp as f64,
        cm.fn_ as f64,
        cm.tn as f64,
    );
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0.0) {
        return 0.0;
    }
    let denom = factors.iter().product::<f64>().sqrt();
    (tp * tn - fp * fn_) / denom
}

/// Partition of samples into `k` folds with per-fold positive counts
/// differing by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }
}

/// Seeded shuffle within each class followed by round-robin assignment.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k must be at least 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::InvalidData(format!(
            "{} samples cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![usize::MAX; labels.len()];
    for class in [1u8, 0u8] {
        let mut members: Vec<usize> = (0..labels.len())
            .filter(|&i| (labels[i] != 0) == (class == 1))
            .collect();
        if members.len() < k {
            return Err(Error::InvalidData(format!(
                "class {class} has {} members, fewer than k = {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

/// What to fit inside cross-validation.
#[derive(Debug, Clone)]
pub enum LearnerSpec {
    Gbm(GbmConfig),
    /// Degenerate baseline: always predicts the training fold's majority
    /// class (ties go to the positive class).
    Majority,
}

enum FittedLearner {
    Gbm(crate::boost::Ensemble),
    Constant(u8),
}

impl FittedLearner {
    fn predict(&self, x: &[f32]) -> Result<u8> {
        match self {
            FittedLearner::Gbm(e) => e.predict_label(x),
            FittedLearner::Constant(c) => Ok(*c),
        }
    }
}

fn fit_learner(spec: &LearnerSpec, x: &FeatureMatrix, y: &[u8]) -> Result<FittedLearner> {
    match spec {
        LearnerSpec::Gbm(cfg) => Ok(FittedLearner::Gbm(fit_gbm(x, y, cfg)?)),
        LearnerSpec::Majority => {
            let pos = y.iter().filter(|&&v| v != 0).count();
            Ok(FittedLearner::Constant((pos * 2 >= y.len()) as u8))
        }
    }
}

/// Per-fold and pooled evaluation results.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub per_fold: Vec<(ConfusionMatrix, f64)>,
    pub pooled: ConfusionMatrix,
    pub pooled_mcc: f64,
}

/// K-fold cross-validation: each fold is predicted by a model trained on the
/// other folds; per-fold confusion matrices are summed into the pooled one.
pub fn cross_validate(
    features: &FeatureMatrix,
    labels: &[u8],
    k: usize,
    seed: u64,
    learner: &LearnerSpec,
) -> Result<CvReport> {
    if labels.len() != features.n_samples() {
        return Err(Error::ShapeMismatch(format!(
            "labels length {} != {} samples",
            labels.len(),
            features.n_samples()
        )));
    }
    let folds = stratified_kfold(labels, k, seed)?;
    let mut per_fold = Vec::with_capacity(k);
    let mut pooled = ConfusionMatrix::default();
    for fold in 0..k {
        let train_idx = folds.train_indices(fold);
        let test_idx = folds.fold_indices(fold);
        let train_x = features.subset(&train_idx);
        let train_y: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
        let model = fit_learner(learner, &train_x, &train_y)?;
        let mut y_true = Vec::with_capacity(test_idx.len());
        let mut y_pred = Vec::with_capacity(test_idx.len());
        for &i in &test_idx {
            y_true.push(labels[i]);
            y_pred.push(model.predict(features.row(i))?);
        }
        let cm = confusion(&y_true, &y_pred)?;
        pooled.add(&cm);
        per_fold.push((cm, mcc(&cm)));
    }
    let pooled_mcc = mcc(&pooled);
    Ok(CvReport {
        per_fold,
        pooled,
        pooled_mcc,
    })
}

/// Largest-remainder integer allocation of `total` across `fractions`.
fn largest_remainder(total: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let mut assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut it = order.iter().cycle();
    while assigned < total {
        alloc[*it.next().unwrap()] += 1;
        assigned += 1;
    }
    alloc
}

/// Stratified split into three disjoint, exhaustive index sets whose sizes
/// land within one sample of `n * fraction`.
pub fn train_val_test_split(
    labels: &[u8],
    fractions: [f64; 3],
    seed: u64,
) -> Result<[Vec<usize>; 3]> {
    if fractions.iter().any(|&f| f <= 0.0) {
        return Err(Error::InvalidConfig("split fractions must be positive".into()));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions sum to {sum}, expected 1.0"
        )));
    }
    let n = labels.len();
    let global = largest_remainder(n, &fractions);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut allocs: Vec<(Vec<usize>, Vec<usize>)> = Vec::new(); // (members, per-set counts)
    for class in [1u8, 0u8] {
        let mut members: Vec<usize> = (0..n)
            .filter(|&i| (labels[i] != 0) == (class == 1))
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            return Err(Error::InvalidData(format!(
                "class {class} has only {} members; cannot fill three sets",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let alloc = largest_remainder(members.len(), &fractions);
        allocs.push((members, alloc));
    }
    // Repair per-class rounding so set totals equal the global allocation;
    // move one sample at a time from an oversized set to an undersized one,
    // preferring the class with the most samples in the oversized set.
    loop {
        let totals: Vec<usize> = (0..3)
            .map(|s| allocs.iter().map(|(_, a)| a[s]).sum())
            .collect();
        let over = (0..3).find(|&s| totals[s] > global[s]);
        let under = (0..3).find(|&s| totals[s] < global[s]);
        match (over, under) {
            (Some(o), Some(u)) => {
                let donor = allocs
                    .iter_mut()
                    .filter(|(_, a)| a[o] > 1)
                    .max_by_key(|(_, a)| a[o])
                    .expect("some class can donate");
                donor.1[o] -= 1;
                donor.1[u] += 1;
            }
            _ => break,
        }
    }
    for (members, alloc) in &allocs {
        let mut offset = 0;
        for s in 0..3 {
            sets[s].extend_from_slice(&members[offset..offset + alloc[s]]);
            offset += alloc[s];
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    Ok(sets)
}

// ---------------------------------------------------------------------------
// IoU
// ---------------------------------------------------------------------------

/// Pixel counts for one class across one or more map pairs.
#[derive(Debug, Clone, Copy, Default)]
pub struct IouCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl IouCounts {
    pub fn add_pair(&mut self, truth: &SegMap, pred: &SegMap, cls: u8) -> Result<()> {
        if truth.width() != pred.width() || truth.height() != pred.height() {
            return Err(Error::ShapeMismatch(format!(
                "segmap dims {}x{} vs {}x{}",
                truth.width(),
                truth.height(),
                pred.width(),
                pred.height()
            )));
        }
        for (&t, &p) in truth.classes().iter().zip(pred.classes()) {
            match (t == cls, p == cls) {
                (true, true) => self.tp += 1,
                (false, true) => self.fp += 1,
                (true, false) => self.fn_ += 1,
                (false, false) => {}
            }
        }
        Ok(())
    }

    /// `tp / (tp + fp + fn)`; 1.0 when the class is absent from both sides.
    pub fn value(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            1.0
        } else {
            self.tp as f64 / union as f64
        }
    }
}

/// Intersection over union for one class over a single map pair.
pub fn iou(truth: &SegMap, pred: &SegMap, cls: u8) -> Result<f64> {
    let mut counts = IouCounts::default();
    counts.add_pair(truth, pred, cls)?;
    Ok(counts.value())
}

/// Mean IoU over the wear classes (flank wear and chipping).
pub fn mean_iou(truth: &SegMap, pred: &SegMap) -> Result<f64> {
    let f = iou(truth, pred, SegMap::FLANK_WEAR)?;
    let c = iou(truth, pred, SegMap::CHIPPING)?;
    Ok((f + c) / 2.0)
}

// ---------------------------------------------------------------------------
// Report file
// ---------------------------------------------------------------------------

/// Writes a cross-validation report as JSON with numbers at 6 decimal places.
pub fn write_cv_report(path: impl AsRef<Path>, task: &str, k: usize, report: &CvReport) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    s.push_str("{\n");
    s.push_str(&format!("  \"task\": \"{task}\",\n"));
    s.push_str(&format!("  \"k\": {k},\n"));
    s.push_str("  \"per_fold\": [\n");
    for (i, (cm, fold_mcc)) in report.per_fold.iter().enumerate() {
        s.push_str(&format!(
            "    {{\"fold\": {i}, \"tp\": {}, \"fp\": {}, \"fn\": {}, \"tn\": {}, \"mcc\": {:.6}}}{}\n",
            cm.tp,
            cm.fp,
            cm.fn_,
            cm.tn,
            fold_mcc,
            if i + 1 < report.per_fold.len() { "," } else { "" }
        ));
    }
    s.push_str("  ],\n");
    let p = &report.pooled;
    s.push_str(&format!(
        "  \"pooled\": {{\"tp\": {}, \"fp\": {}, \"fn\": {}, \"tn\": {}, \"mcc\": {:.6}, \"precision\": {:.6}, \"recall\": {:.6}, \"f1\": {:.6}}}\n",
        p.tp,
        p.fp,
        p.fn_,
        p.tn,
        report.pooled_mcc,
        p.precision(),
        p.recall(),
        p.f1()
    ));
    s.push_str("}\n");
    let mut f = std::fs::File::create(path).map_err(|e| Error::io_path(path, "create", e))?;
    f.write_all(s.as_bytes())
        .map_err(|e| Error::io_path(path, "write", e))?;
    Ok(())
}
