//! Wear characterization for machining tools.
//!
//! The crate covers the full desk-scale chain for analyzing images of worn
//! cutting inserts:
//!
//! - [`synthgen`]: a deterministic generator of worn-insert images with
//!   pixel-exact ground truth and controllable label prevalences, standing in
//!   for proprietary shop-floor photographs.
//! - [`raster`]: netpbm image I/O, bilinear resizing, input normalization,
//!   and geometric augmentation.
//! - [`convfeat`]: a VGG-16-style convolutional base (inference only) used as
//!   a frozen feature extractor, with a binary weight format, seeded random
//!   initialization, and an on-disk feature cache.
//! - [`boost`]: gradient-boosted regression trees for binary classification
//!   with logistic loss and implicit feature selection.
//! - [`evalkit`]: confusion matrices, MCC, stratified k-fold
//!   cross-validation, three-way splits, and IoU.
//! - [`pipeline`]: orchestration of the stages above plus a cell-wise
//!   segmentation baseline, wear-frequency heatmaps, and flank-wear width
//!   statistics against the 0.3 mm tool-life criterion.
//!
//! The `examples/` directory shows one runnable program per capability; the
//! thin `wear` binary exposes the same steps as subcommands.

pub mod boost;
pub mod convfeat;
pub mod error;
pub mod evalkit;
pub mod pipeline;
pub mod raster;
pub mod synthgen;

pub use error::{Error, Result};
