//! Defect detection for images of 3D-printed cylinders.
//!
//! The crate is organised by stage:
//!
//! 1. [`imaging`] – ROI selection, histogram equalization, detail enhancement,
//!    standardization, resizing and the named pre-processing pipelines.
//! 2. [`nn`] – tensors, the layer kinds used by the backbone and classification
//!    head, hand-derived backpropagation, Adam, binary cross-entropy, parameter
//!    and FLOP accounting, checkpoints.
//! 3. [`augment`] – random affine/flip augmentation for training batches.
//! 4. [`train`] – stratified splitting, the training loop, grid search and
//!    confusion-matrix metrics.
//! 5. [`explain`] – Grad-CAM, LIME, bounding boxes and overlays.
//! 6. [`data`] – synthetic cylinder images with ground-truth defect boxes and
//!    directory ingestion.
//! 7. [`cli`] – the command-line front end.

pub mod augment;
pub mod cli;
pub mod data;
pub mod error;
pub mod explain;
pub mod imaging;
pub mod nn;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
