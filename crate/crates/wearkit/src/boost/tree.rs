//! Regression trees fit by exact greedy search: split candidates are the
//! midpoints between consecutive distinct sorted feature values, the best
//! split maximizes weighted-variance reduction, and leaves hold the Newton
//! step `sum(target) / sum(weight)`.
//!
//! Ties are broken toward the lower feature index, then the lower
//! threshold, which makes the result independent of how the per-feature
//! search is parallelized.

use rayon::prelude::*;

use crate::convfeat::FeatureMatrix;
use crate::error::{Error, Result};

use super::GbmConfig;

/// Splits with a gain at or below this are rejected; guards against
/// floating-point residue claiming a "gain" on constant targets.
pub(crate) const MIN_GAIN: f64 = 1e-12;

/// Floor applied to leaf-value denominators (the summed weights).
pub(crate) const MIN_LEAF_DENOM: f64 = 1e-12;

/// One node of a regression tree. Samples with `x[feature] <= threshold` go
/// left. `gain` records the split's variance reduction for feature
/// importances; it is not part of the serialized model.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f32]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if (x[*feature] as f64) <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_splits(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.n_splits() + right.n_splits(),
        }
    }

    /// Visits every split as `(feature, threshold, gain)`.
    pub fn for_each_split(&self, f: &mut impl FnMut(usize, f64, f64)) {
        if let TreeNode::Split {
            feature,
            threshold,
            gain,
            left,
            right,
        } = self
        {
            f(*feature, *threshold, *gain);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }
}

/// Per-feature sample orderings, precomputed once per matrix and cloned per
/// tree (node partitioning permutes them in place).
#[derive(Debug, Clone)]
pub(crate) struct SortedColumns {
    n: usize,
    /// Feature-major: `idx[f * n + i]` is the sample at sorted position `i`.
    idx: Vec<u32>,
    /// Feature values in the same order as `idx`.
    vals: Vec<f32>,
}

impl SortedColumns {
    pub fn build(x: &FeatureMatrix) -> Self {
        let n = x.n_samples();
        let d = x.n_features();
        let mut idx = vec![0u32; n * d];
        let mut vals = vec![0f32; n * d];
        idx.par_chunks_mut(n)
            .zip(vals.par_chunks_mut(n))
            .enumerate()
            .for_each(|(f, (icol, vcol))| {
                for (i, slot) in icol.iter_mut().enumerate() {
                    *slot = i as u32;
                }
                icol.sort_unstable_by(|&a, &b| {
                    x.row(a as usize)[f]
                        .total_cmp(&x.row(b as usize)[f])
                        .then(a.cmp(&b))
                });
                for (v, &s) in vcol.iter_mut().zip(icol.iter()) {
                    *v = x.row(s as usize)[f];
                }
            });
        SortedColumns { n, idx, vals }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    n_left: usize,
}

/// Total-order "better" relation implementing the tie-break rule.
fn better(a: &Candidate, b: &Candidate) -> bool {
    if a.gain != b.gain {
        return a.gain > b.gain;
    }
    if a.feature != b.feature {
        return a.feature < b.feature;
    }
    a.threshold < b.threshold
}

pub(crate) struct TreeFitter<'a> {
    x: &'a FeatureMatrix,
    targets: &'a [f64],
    weights: &'a [f64],
    max_depth: usize,
    min_samples_leaf: usize,
    /// Features eligible for splitting, ascending.
    features: &'a [usize],
    cols: SortedColumns,
    goes_left: Vec<bool>,
    scratch_idx: Vec<u32>,
    scratch_val: Vec<f32>,
}

impl<'a> TreeFitter<'a> {
    pub fn new(
        x: &'a FeatureMatrix,
        targets: &'a [f64],
        weights: &'a [f64],
        features: &'a [usize],
        base_cols: &SortedColumns,
        cfg: &GbmConfig,
    ) -> Self {
        let n = x.n_samples();
        TreeFitter {
            x,
            targets,
            weights,
            max_depth: cfg.max_depth,
            min_samples_leaf: cfg.min_samples_leaf,
            features,
            cols: base_cols.clone(),
            goes_left: vec![false; n],
            scratch_idx: vec![0; n],
            scratch_val: vec![0.0; n],
        }
    }

    pub fn fit(&mut self) -> TreeNode {
        self.grow(0, self.cols.n, 0)
    }

    fn leaf(&self, lo: usize, hi: usize) -> TreeNode {
        // Any feature's range holds the node's sample set; use the first.
        let f0 = self.features[0];
        let base = f0 * self.cols.n;
        let mut sum_t = 0.0;
        let mut sum_w = 0.0;
        for &s in &self.cols.idx[base + lo..base + hi] {
            sum_t += self.targets[s as usize];
            sum_w += self.weights[s as usize];
        }
        TreeNode::Leaf {
            value: sum_t / sum_w.max(MIN_LEAF_DENOM),
        }
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> TreeNode {
        let n_node = hi - lo;
        if depth >= self.max_depth || n_node < 2 * self.min_samples_leaf || n_node < 2 {
            return self.leaf(lo, hi);
        }
        let best = self.best_split(lo, hi);
        let Some(best) = best else {
            return self.leaf(lo, hi);
        };

        // Stable partition of every feature ordering by the split predicate.
        let n = self.cols.n;
        for (i, &s) in self.cols.idx[self.features[0] * n + lo..self.features[0] * n + hi]
            .iter()
            .enumerate()
        {
            let _ = i;
            self.goes_left[s as usize] =
                (self.x.row(s as usize)[best.feature] as f64) <= best.threshold;
        }
        for &f in self.features {
            let base = f * n;
            let (mut l, mut r) = (0, best.n_left);
            for k in lo..hi {
                let s = self.cols.idx[base + k];
                let v = self.cols.vals[base + k];
                if self.goes_left[s as usize] {
                    self.scratch_idx[l] = s;
                    self.scratch_val[l] = v;
                    l += 1;
                } else {
                    self.scratch_idx[r] = s;
                    self.scratch_val[r] = v;
                    r += 1;
                }
            }
            debug_assert_eq!(l, best.n_left);
            debug_assert_eq!(r, n_node);
            self.cols.idx[base + lo..base + hi].copy_from_slice(&self.scratch_idx[..n_node]);
            self.cols.vals[base + lo..base + hi].copy_from_slice(&self.scratch_val[..n_node]);
        }

        let left = self.grow(lo, lo + best.n_left, depth + 1);
        let right = self.grow(lo + best.n_left, hi, depth + 1);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            gain: best.gain,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(&self, lo: usize, hi: usize) -> Option<Candidate> {
        let n = self.cols.n;
        let f0 = self.features[0];
        let mut tot_w = 0.0;
        let mut tot_wt = 0.0;
        for &s in &self.cols.idx[f0 * n + lo..f0 * n + hi] {
            tot_w += self.weights[s as usize];
            tot_wt += self.weights[s as usize] * self.targets[s as usize];
        }
        let parent_term = sq_over(tot_wt, tot_w);

        let candidates: Vec<Candidate> = self
            .features
            .par_iter()
            .filter_map(|&f| self.scan_feature(f, lo, hi, tot_w, tot_wt, parent_term))
            .collect();
        let best_gain = candidates
            .iter()
            .map(|c| c.gain)
            .fold(f64::NEG_INFINITY, f64::max);
        // The prefix-sum gains derive one side by subtraction from the node
        // totals, so two candidates inducing the same partition on different
        // features can differ in the last ulp and dodge the tie-break. Near
        // ties are therefore re-scored with order-canonical sums, which make
        // identical partitions compare exactly equal.
        let tol = best_gain.abs() * 1e-9;
        let mut tied: Vec<(f64, Candidate)> = candidates
            .into_iter()
            .filter(|c| best_gain - c.gain <= tol)
            .map(|c| (c.gain, c))
            .collect();
        if tied.len() > 1 {
            for (score, c) in &mut tied {
                *score = self.canonical_score(c, lo, hi);
            }
        }
        tied.into_iter()
            .reduce(|a, b| {
                let pick_a = a.0 > b.0
                    || (a.0 == b.0
                        && (a.1.feature < b.1.feature
                            || (a.1.feature == b.1.feature && a.1.threshold < b.1.threshold)));
                if pick_a {
                    a
                } else {
                    b
                }
            })
            .map(|(_, c)| c)
    }

    /// Split score `S(L) + S(R)` with `S(X) = (sum w t)^2 / sum w`, both
    /// sides accumulated independently in ascending sample-id order; a pure
    /// function of the partition, independent of which feature induced it.
    fn canonical_score(&self, c: &Candidate, lo: usize, hi: usize) -> f64 {
        let n = self.cols.n;
        let base = c.feature * n;
        let mut left = self.cols.idx[base + lo..base + lo + c.n_left].to_vec();
        let mut right = self.cols.idx[base + lo + c.n_left..base + hi].to_vec();
        left.sort_unstable();
        right.sort_unstable();
        let side = |ids: &[u32]| -> f64 {
            let mut w = 0.0;
            let mut wt = 0.0;
            for &s in ids {
                w += self.weights[s as usize];
                wt += self.weights[s as usize] * self.targets[s as usize];
            }
            sq_over(wt, w)
        };
        side(&left) + side(&right)
    }

    fn scan_feature(
        &self,
        f: usize,
        lo: usize,
        hi: usize,
        tot_w: f64,
        tot_wt: f64,
        parent_term: f64,
    ) -> Option<Candidate> {
        let n = self.cols.n;
        let idx = &self.cols.idx[f * n + lo..f * n + hi];
        let vals = &self.cols.vals[f * n + lo..f * n + hi];
        let n_node = hi - lo;
        let mut best: Option<Candidate> = None;
        let mut w_l = 0.0;
        let mut wt_l = 0.0;
        for pos in 0..n_node - 1 {
            let s = idx[pos] as usize;
            w_l += self.weights[s];
            wt_l += self.weights[s] * self.targets[s];
            let (v, v_next) = (vals[pos], vals[pos + 1]);
            if v >= v_next {
                continue; // not a boundary between distinct values
            }
            let n_left = pos + 1;
            if n_left < self.min_samples_leaf || n_node - n_left < self.min_samples_leaf {
                continue;
            }
            let gain = sq_over(wt_l, w_l) + sq_over(tot_wt - wt_l, tot_w - w_l) - parent_term;
            if gain <= MIN_GAIN {
                continue;
            }
            let threshold = (v as f64 + v_next as f64) / 2.0;
            let cand = Candidate {
                gain,
                feature: f,
                threshold,
                n_left,
            };
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
        best
    }
}

fn sq_over(num: f64, denom: f64) -> f64 {
    if denom <= MIN_LEAF_DENOM {
        0.0
    } else {
        num * num / denom
    }
}

/// Fits one greedy depth-limited regression tree minimizing weighted squared
/// error; leaves hold `sum(targets) / sum(weights)` with the denominator
/// floored at 1e-12.
pub fn fit_tree(
    x: &FeatureMatrix,
    targets: &[f64],
    weights: &[f64],
    cfg: &GbmConfig,
) -> Result<TreeNode> {
    cfg.validate()?;
    let n = x.n_samples();
    if n == 0 {
        return Err(Error::InvalidData("cannot fit a tree on zero samples".into()));
    }
    if targets.len() != n || weights.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "targets/weights lengths {}/{} != {n} samples",
            targets.len(),
            weights.len()
        )));
    }
    if x.n_features() == 0 {
        return Err(Error::InvalidData("feature matrix has zero features".into()));
    }
    let features: Vec<usize> = (0..x.n_features()).collect();
    let cols = SortedColumns::build(x);
    let mut fitter = TreeFitter::new(x, targets, weights, &features, &cols, cfg);
    Ok(fitter.fit())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f32]]) -> FeatureMatrix {
        let d = rows[0].len();
        let ids = (0..rows.len()).map(|i| format!("{i}")).collect();
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        FeatureMatrix::new(d, ids, values).unwrap()
    }

    #[test]
    fn four_sample_newton_example() {
        let x = matrix(&[&[0.0], &[1.0], &[2.0], &[3.0]]);
        let cfg = GbmConfig {
            max_depth: 1,
            ..GbmConfig::default()
        };
        let tree = fit_tree(&x, &[-1.0, -1.0, 1.0, 1.0], &[0.25; 4], &cfg).unwrap();
        match &tree {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 1.5).abs() < 1e-12);
                assert!(matches!(**left, TreeNode::Leaf { value } if (value + 4.0).abs() < 1e-12));
                assert!(matches!(**right, TreeNode::Leaf { value } if (value - 4.0).abs() < 1e-12));
            }
            other => panic!("expected a split, got {other:?}"),
        }
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let x = matrix(&[&[0.0, 5.0], &[1.0, 4.0], &[2.0, 3.0]]);
        let tree = fit_tree(&x, &[0.7; 3], &[1.0; 3], &GbmConfig::default()).unwrap();
        // Leaf value = sum(targets) / sum(weights) = 2.1 / 3.
        assert!(matches!(tree, TreeNode::Leaf { value } if (value - 0.7).abs() < 1e-12));
    }

    #[test]
    fn empty_input_is_an_error() {
        let x = FeatureMatrix::empty(2);
        assert!(fit_tree(&x, &[], &[], &GbmConfig::default()).is_err());
    }

    #[test]
    fn min_samples_leaf_blocks_unbalanced_splits() {
        let x = matrix(&[&[0.0], &[1.0], &[2.0]]);
        let cfg = GbmConfig {
            max_depth: 3,
            min_samples_leaf: 2,
            ..GbmConfig::default()
        };
        // Any split would leave one side with < 2 samples.
        let tree = fit_tree(&x, &[-1.0, 0.0, 1.0], &[1.0; 3], &cfg).unwrap();
        assert!(matches!(tree, TreeNode::Leaf { .. }));
    }

    #[test]
    fn duplicate_values_never_split_apart() {
        let x = matrix(&[&[1.0], &[1.0], &[1.0], &[2.0]]);
        let cfg = GbmConfig {
            max_depth: 2,
            ..GbmConfig::default()
        };
        let tree = fit_tree(&x, &[-1.0, 1.0, -1.0, 1.0], &[1.0; 4], &cfg).unwrap();
        // Only one distinct boundary exists: threshold 1.5.
        tree.for_each_split(&mut |_, threshold, _| {
            assert!((threshold - 1.5).abs() < 1e-12);
        });
    }

    #[test]
    fn depth_limit_is_respected() {
        let x = matrix(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0], &[5.0], &[6.0], &[7.0]]);
        let targets = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        for depth in 1..=3 {
            let cfg = GbmConfig {
                max_depth: depth,
                ..GbmConfig::default()
            };
            let tree = fit_tree(&x, &targets, &[1.0; 8], &cfg).unwrap();
            assert!(tree.depth() <= depth);
        }
    }
}
