//! Fixed, seeded filter-bank feature extractor.
//!
//! Channels `0..8` are rectified oriented derivative-of-Gaussian responses
//! (x, y and the two diagonals, each with both polarities). The remaining
//! channels use seeded random zero-mean 5×5 filters, orthonormalized in blocks.
//! Every filter has unit L2 norm. Responses are rectified and mean-pooled onto
//! a square grid of cells.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{shape_err, validation_err, Result};
use crate::tensor::TemplateTensor;

const TAPS: usize = 25;
/// Number of oriented-gradient channels at the front of the bank.
pub const GRADIENT_CHANNELS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractorConfig {
    pub out_spatial: usize,
    pub out_channels: usize,
    pub filter_bank_seed: u64,
    #[serde(default)]
    pub pooling: Pooling,
}

impl Default for FeatureExtractorConfig {
    fn default() -> Self {
        Self { out_spatial: 6, out_channels: 32, filter_bank_seed: 0x5eed, pooling: Pooling::Mean }
    }
}

impl FeatureExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.out_spatial < 1 {
            return validation_err("feature out_spatial must be >= 1");
        }
        if self.out_channels < 4 {
            return validation_err("feature out_channels must be >= 4");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    config: FeatureExtractorConfig,
    filters: Vec<[f32; TAPS]>,
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-8 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn gradient_filters() -> Vec<[f32; TAPS]> {
    let sigma = 1.0f64;
    let directions = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0)];
    let mut out = Vec::with_capacity(GRADIENT_CHANNELS);
    for (dx, dy) in directions {
        let len = f64::hypot(dx, dy);
        let (ux, uy) = (dx / len, dy / len);
        let mut f = vec![0.0f64; TAPS];
        for y in 0..5 {
            for x in 0..5 {
                let (px, py) = (x as f64 - 2.0, y as f64 - 2.0);
                let g = (-(px * px + py * py) / (2.0 * sigma * sigma)).exp();
                f[y * 5 + x] = -(px * ux + py * uy) * g;
            }
        }
        normalize(&mut f);
        for sign in [1.0, -1.0] {
            let mut arr = [0f32; TAPS];
            for (a, v) in arr.iter_mut().zip(&f) {
                *a = (sign * v) as f32;
            }
            out.push(arr);
        }
    }
    out
}

fn random_filters(count: usize, seed: u64) -> Vec<[f32; TAPS]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    // Zero-mean filters live in a 24-dimensional subspace.
    let block = TAPS - 1;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while out.len() < count {
        if basis.len() == block {
            basis.clear();
        }
        let mut v: Vec<f64> = (0..TAPS).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mean = v.iter().sum::<f64>() / TAPS as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
        }
        if !normalize(&mut v) {
            continue;
        }
        let mut arr = [0f32; TAPS];
        for (a, x) in arr.iter_mut().zip(&v) {
            *a = *x as f32;
        }
        out.push(arr);
        basis.push(v);
    }
    out
}

impl FeatureExtractor {
    pub fn new(config: FeatureExtractorConfig) -> Result<Self> {
        config.validate()?;
        let mut filters = gradient_filters();
        filters.truncate(config.out_channels);
        let extra = config.out_channels.saturating_sub(GRADIENT_CHANNELS);
        filters.extend(random_filters(extra, config.filter_bank_seed));
        Ok(Self { config, filters })
    }

    pub fn config(&self) -> &FeatureExtractorConfig {
        &self.config
    }

    pub fn channels(&self) -> usize {
        self.filters.len()
    }

    /// Features on the configured `out_spatial` grid.
    pub fn extract(&self, patch: &Image) -> Result<TemplateTensor> {
        if patch.width() != patch.height() {
            return shape_err(format!("patch must be square, got {}x{}", patch.width(), patch.height()));
        }
        if patch.width() % self.config.out_spatial != 0 {
            return shape_err(format!(
                "patch side {} is not a multiple of out_spatial {}",
                patch.width(),
                self.config.out_spatial
            ));
        }
        self.extract_cells(patch, patch.width() / self.config.out_spatial)
    }

    /// Features pooled over `cell`×`cell` pixel blocks, giving a (side / cell)² grid.
    pub fn extract_cells(&self, patch: &Image, cell: usize) -> Result<TemplateTensor> {
        let n = patch.width();
        if patch.height() != n {
            return shape_err(format!("patch must be square, got {}x{}", n, patch.height()));
        }
        if cell == 0 || n % cell != 0 {
            return shape_err(format!("patch side {n} is not a multiple of cell size {cell}"));
        }
        let grid = n / cell;
        let c = self.filters.len();
        let mut sums = vec![0f32; grid * grid * c];
        let clamp = |i: isize| i.clamp(0, n as isize - 1) as usize;
        let mut neighborhood = [0f32; TAPS];
        for y in 0..n {
            let rows = [clamp(y as isize - 2), clamp(y as isize - 1), y, clamp(y as isize + 1), clamp(y as isize + 2)];
            for x in 0..n {
                let cols =
                    [clamp(x as isize - 2), clamp(x as isize - 1), x, clamp(x as isize + 1), clamp(x as isize + 2)];
                for (r, &yy) in rows.iter().enumerate() {
                    for (k, &xx) in cols.iter().enumerate() {
                        neighborhood[r * 5 + k] = patch.get(xx, yy);
                    }
                }
                let base = ((y / cell) * grid + x / cell) * c;
                for (slot, f) in sums[base..base + c].iter_mut().zip(&self.filters) {
                    let resp: f32 = f.iter().zip(&neighborhood).map(|(a, b)| a * b).sum();
                    if resp > 0.0 {
                        *slot += resp;
                    }
                }
            }
        }
        let norm = 1.0 / (cell * cell) as f32;
        sums.iter_mut().for_each(|v| *v *= norm);
        TemplateTensor::new(grid, grid, c, sums)
    }
}

/// One-shot extraction; builds the filter bank from `config`.
pub fn extract_features(patch: &Image, config: &FeatureExtractorConfig) -> Result<TemplateTensor> {
    FeatureExtractor::new(config.clone())?.extract(patch)
}
