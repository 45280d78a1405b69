//! Pixel-relationship regularizers for binary image segmentation.
//!
//! Three loss terms act on a network's per-pixel foreground probabilities:
//!
//! - graph-based smoothing ([`regularizers::gbs_value_grad`]): Laplacian
//!   quadratic forms over the ground-truth foreground and background graphs;
//! - neighbor-difference Laplacian ([`regularizers::glrdn_value_grad`]):
//!   `(t - y)^T L (t - y)` over the pixel grid;
//! - Euler characteristic ([`regularizers::ec_regularizer`]): a multilinear
//!   soft count of vertices, edges and triangles averaged over both diagonal
//!   triangulations.
//!
//! Each is paired with binary cross-entropy through [`regularizers::objective`]
//! and returns a value together with its analytic gradient. The remaining
//! modules provide a small encoder-decoder network with a hand-written reverse
//! pass ([`segnet`]), Adam and step-decay training ([`optim`], [`trainer`]),
//! image I/O and patch sampling ([`data`]), and ROC/AUC evaluation
//! ([`metrics`]).

pub mod components;
pub mod data;
pub mod error;
pub mod grid_graph;
pub mod metrics;
pub mod optim;
pub mod regularizers;
pub mod segnet;
pub mod trainer;

pub use error::{Error, Result};
