//! Gradient-boosted regression trees for binary classification with
//! logistic loss. The ensemble starts from the log-odds of the positive
//! class and adds shallow trees fit to the loss residuals, each leaf taking
//! a Newton step; shallow trees splitting on single features give the model
//! its implicit feature selection.

mod tree;

pub use tree::{fit_tree, TreeNode};

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convfeat::FeatureMatrix;
use crate::error::{Error, Result};
use tree::{SortedColumns, TreeFitter};

/// Hyperparameters of the boosted ensemble. Defaults mirror the common
/// reference implementation of binomial-deviance boosting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmConfig {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features each tree may split on, in (0, 1].
    pub feature_fraction: f64,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 1,
            feature_fraction: 1.0,
            seed: 0,
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stages == 0 {
            return Err(Error::InvalidConfig("n_stages must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidConfig("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig("min_samples_leaf must be at least 1".into()));
        }
        if !self.feature_fraction.is_finite()
            || self.feature_fraction <= 0.0
            || self.feature_fraction > 1.0
        {
            return Err(Error::InvalidConfig(format!(
                "feature_fraction {} outside (0, 1]",
                self.feature_fraction
            )));
        }
        Ok(())
    }
}

/// `1 / (1 + exp(-m))`.
pub fn sigmoid(margin: f64) -> f64 {
    1.0 / (1.0 + (-margin).exp())
}

/// A fitted boosted ensemble: initial margin plus scaled tree outputs.
/// Immutable after fitting; prediction is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    initial_margin: f64,
    learning_rate: f64,
    n_features: usize,
    trees: Vec<TreeNode>,
}

impl Ensemble {
    pub fn initial_margin(&self) -> f64 {
        self.initial_margin
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    fn check_dims(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::ShapeMismatch(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Raw margin `F0 + lr * sum(tree(x))`.
    pub fn predict_margin(&self, x: &[f32]) -> Result<f64> {
        self.check_dims(x)?;
        Ok(self.margin_after(x, self.trees.len()))
    }

    /// Margin using only the first `n_trees` stages (for staged diagnostics).
    /// Callers must have validated dimensions.
    pub fn margin_after(&self, x: &[f32], n_trees: usize) -> f64 {
        let mut m = self.initial_margin;
        for tree in &self.trees[..n_trees] {
            m += self.learning_rate * tree.predict(x);
        }
        m
    }

    pub fn predict_proba(&self, x: &[f32]) -> Result<f64> {
        Ok(sigmoid(self.predict_margin(x)?))
    }

    /// Label 1 iff the margin is non-negative (probability >= 0.5).
    pub fn predict_label(&self, x: &[f32]) -> Result<u8> {
        Ok((self.predict_margin(x)? >= 0.0) as u8)
    }

    /// Per-feature sum of split variance reduction, normalized to sum 1;
    /// all zeros when the ensemble contains no splits. Split gains are not
    /// serialized, so importances are only meaningful on freshly fitted
    /// ensembles.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_features];
        for tree in &self.trees {
            tree.for_each_split(&mut |feature, _, gain| {
                scores[feature] += gain;
            });
        }
        let total: f64 = scores.iter().sum();
        if total > 0.0 {
            for s in &mut scores {
                *s /= total;
            }
        }
        scores
    }

    const MAGIC: &'static [u8; 4] = b"WGBM";
    const VERSION: u32 = 1;
    const MAX_DECODE_DEPTH: usize = 512;

    /// Serializes the model: magic `WGBM`, version, F0, learning rate,
    /// feature count, tree count, then each tree pre-order with node tag 0
    /// (leaf value f64) or 1 (feature u32, threshold f64); little-endian.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        buf.extend_from_slice(Self::MAGIC);
        buf.extend_from_slice(&Self::VERSION.to_le_bytes());
        buf.extend_from_slice(&self.initial_margin.to_le_bytes());
        buf.extend_from_slice(&self.learning_rate.to_le_bytes());
        buf.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        buf.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        fn write_node(buf: &mut Vec<u8>, node: &TreeNode) {
            match node {
                TreeNode::Leaf { value } => {
                    buf.push(0);
                    buf.extend_from_slice(&value.to_le_bytes());
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    buf.push(1);
                    buf.extend_from_slice(&(*feature as u32).to_le_bytes());
                    buf.extend_from_slice(&threshold.to_le_bytes());
                    write_node(buf, left);
                    write_node(buf, right);
                }
            }
        }
        for tree in &self.trees {
            write_node(&mut buf, tree);
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io_path(path, "create", e))?;
        f.write_all(&buf)
            .map_err(|e| Error::io_path(path, "write", e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io_path(path, "read", e))?;
        let mut cur = crate::convfeat::Cursor::new(&bytes);
        if cur.take_bytes(4, "magic")? != Self::MAGIC {
            return Err(Error::bad_format("model", "magic mismatch"));
        }
        let version = cur.read_u32("version")?;
        if version != Self::VERSION {
            return Err(Error::bad_format(
                "model",
                format!("unsupported version {version}"),
            ));
        }
        let initial_margin = cur.read_f64("initial margin")?;
        let learning_rate = cur.read_f64("learning rate")?;
        let n_features = cur.read_u32("feature count")? as usize;
        let n_trees = cur.read_u32("tree count")? as usize;

        fn read_node(
            cur: &mut crate::convfeat::Cursor,
            n_features: usize,
            depth: usize,
        ) -> Result<TreeNode> {
            if depth > Ensemble::MAX_DECODE_DEPTH {
                return Err(Error::bad_format("model", "tree depth over decode limit"));
            }
            match cur.read_u8("node tag")? {
                0 => Ok(TreeNode::Leaf {
                    value: cur.read_f64("leaf value")?,
                }),
                1 => {
                    let feature = cur.read_u32("split feature")? as usize;
                    if feature >= n_features {
                        return Err(Error::bad_format(
                            "model",
                            format!("split feature {feature} >= {n_features} features"),
                        ));
                    }
                    let threshold = cur.read_f64("split threshold")?;
                    if !threshold.is_finite() {
                        return Err(Error::bad_format("model", "non-finite split threshold"));
                    }
                    let left = read_node(cur, n_features, depth + 1)?;
                    let right = read_node(cur, n_features, depth + 1)?;
                    Ok(TreeNode::Split {
                        feature,
                        threshold,
                        gain: 0.0,
                        left: Box::new(left),
                        right: Box::new(right),
                    })
                }
                tag => Err(Error::bad_format("model", format!("unknown node tag {tag}"))),
            }
        }

        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            trees.push(read_node(&mut cur, n_features, 0)?);
        }
        if cur.remaining() != 0 {
            return Err(Error::bad_format(
                "model",
                format!("{} trailing bytes", cur.remaining()),
            ));
        }
        Ok(Ensemble {
            initial_margin,
            learning_rate,
            n_features,
            trees,
        })
    }
}

/// Fits the boosted classifier: `F0 = ln(p/(1-p))` from the label mean, then
/// per stage fits a tree to the residuals `y - sigmoid(F)` with weights
/// `p(1-p)` and adds its scaled output to the margins.
pub fn fit_gbm(x: &FeatureMatrix, y: &[u8], cfg: &GbmConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let n = x.n_samples();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "labels length {} != {n} samples",
            y.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidData("cannot fit on zero samples".into()));
    }
    if let Some(&bad) = y.iter().find(|&&v| v > 1) {
        return Err(Error::InvalidData(format!("label {bad} is not binary")));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == n {
        return Err(Error::InvalidData(
            "labels are single-class; the initial log-odds margin is undefined".into(),
        ));
    }
    if x.n_features() == 0 {
        return Err(Error::InvalidData("feature matrix has zero features".into()));
    }

    let p_bar = pos as f64 / n as f64;
    let initial_margin = (p_bar / (1.0 - p_bar)).ln();
    let mut margins = vec![initial_margin; n];
    let mut targets = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];

    let cols = SortedColumns::build(x);
    let d = x.n_features();
    let all_features: Vec<usize> = (0..d).collect();
    let n_sub = ((d as f64) * cfg.feature_fraction).ceil() as usize;
    let n_sub = n_sub.clamp(1, d);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut trees = Vec::with_capacity(cfg.n_stages);
    for _stage in 0..cfg.n_stages {
        for ((m, t), (wt, &label)) in margins
            .iter()
            .zip(&mut targets)
            .zip(weights.iter_mut().zip(y))
        {
            let p = sigmoid(*m);
            *t = label as f64 - p;
            *wt = p * (1.0 - p);
        }
        let subset: Vec<usize>;
        let features: &[usize] = if n_sub < d {
            let mut pool = all_features.clone();
            pool.shuffle(&mut rng);
            let mut chosen = pool[..n_sub].to_vec();
            chosen.sort_unstable();
            subset = chosen;
            &subset
        } else {
            &all_features
        };
        let mut fitter = TreeFitter::new(x, &targets, &weights, features, &cols, cfg);
        let tree = fitter.fit();
        for (i, m) in margins.iter_mut().enumerate() {
            *m += cfg.learning_rate * tree.predict(x.row(i));
        }
        trees.push(tree);
    }

    Ok(Ensemble {
        initial_margin,
        learning_rate: cfg.learning_rate,
        n_features: d,
        trees,
    })
}
