//! Synthetic tracking world: rendered sequences, patch cropping and the fixed
//! feature extractor that stands in for a pretrained Siamese backbone.

mod crop;
mod features;
pub mod io;
mod scene;

pub use crop::crop_patch;
pub use features::{extract_features, FeatureExtractor, FeatureExtractorConfig, GRADIENT_CHANNELS};
pub use scene::{
    render_sequence, AppearanceEvent, EventKind, MotionConfig, ObjectConfig, ObjectShape, SceneConfig,
    SyntheticSequence, DRIFT_RATE,
};

use crate::error::{shape_err, Result};

/// Single-channel intensity image, row-major, values nominally in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return shape_err(format!("image data length {} does not match {width}x{height}", data.len()));
        }
        Ok(Self { width, height, data })
    }

    pub(crate) fn from_parts(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f32 {
        (self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64) as f32
    }
}
