//! Learned template updates for Siamese trackers.
//!
//! The crate bundles a deterministic synthetic tracking world, the linear,
//! weighted-fusion and UpdateNet update rules, multi-stage training of
//! UpdateNet, a cross-correlation tracker with OPE and VOT-style reset
//! protocols, and the evaluation metrics and diagnostics used to compare
//! update strategies.

pub mod bbox;
pub mod bench;
pub mod error;
pub mod eval;
pub mod net;
pub mod strategy;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod tracker;

pub use bbox::BBox;
pub use error::{Error, Result};
pub use tensor::{ResponseMap, TemplateTensor};
