//! UpdateNet: two 1×1 convolutions with a ReLU in between.
//!
//! A 1×1 convolution acts independently at every spatial position, so the
//! network is a per-position two-layer perceptron over channels:
//! `out(p) = w2 · relu(w1 · x(p) + b1) + b2`, with `x(p)` the 3C-vector of
//! concatenated templates at position `p`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, validation_err, Error, Result};
use crate::tensor::{read_f32s, read_u32, TemplateTensor};

const PARAM_MAGIC: &[u8; 4] = b"UNET";
const PARAM_VERSION: u32 = 1;

/// Default width of the hidden layer.
pub const DEFAULT_HIDDEN: usize = 96;

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateNetParams {
    channels: usize,
    hidden: usize,
    /// hidden × 3C, row-major.
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    /// C × hidden, row-major.
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    Zeros,
    /// Uniform in ±1/√fan_in per layer.
    ScaledUniform { seed: u64 },
    /// Scaled-uniform first layer with a zero output layer: the untrained
    /// network returns its skip input unchanged.
    ResidualZero { seed: u64 },
    /// Like `ResidualZero`, but the first `min(hidden, 3C)` hidden units copy
    /// their input channel. Inputs are non-negative, so those units stay linear.
    PassThrough { seed: u64 },
}

/// Gradients with the same layout as [`UpdateNetParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub input: TemplateTensor,
    pub pre_activation: TemplateTensor,
    pub hidden: TemplateTensor,
}

pub fn init_params(channels: usize, hidden: usize, scheme: InitScheme) -> UpdateNetParams {
    let in_ch = 3 * channels;
    match scheme {
        InitScheme::Zeros => UpdateNetParams {
            channels,
            hidden,
            w1: vec![0.0; hidden * in_ch],
            b1: vec![0.0; hidden],
            w2: vec![0.0; channels * hidden],
            b2: vec![0.0; channels],
        },
        InitScheme::ScaledUniform { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut uniform = |n: usize, fan_in: usize| -> Vec<f32> {
                let bound = 1.0 / (fan_in as f32).sqrt();
                (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
            };
            let w1 = uniform(hidden * in_ch, in_ch);
            let b1 = uniform(hidden, in_ch);
            let w2 = uniform(channels * hidden, hidden);
            let b2 = uniform(channels, hidden);
            UpdateNetParams { channels, hidden, w1, b1, w2, b2 }
        }
        InitScheme::ResidualZero { seed } => {
            let mut p = init_params(channels, hidden, InitScheme::ScaledUniform { seed });
            p.w2.iter_mut().for_each(|v| *v = 0.0);
            p.b2.iter_mut().for_each(|v| *v = 0.0);
            p
        }
        InitScheme::PassThrough { seed } => {
            let mut p = init_params(channels, hidden, InitScheme::ResidualZero { seed });
            for j in 0..hidden.min(in_ch) {
                p.w1[j * in_ch..(j + 1) * in_ch].iter_mut().enumerate().for_each(|(i, v)| *v = if i == j { 1.0 } else { 0.0 });
                p.b1[j] = 0.0;
            }
            p
        }
    }
}

impl UpdateNetParams {
    pub fn from_parts(channels: usize, hidden: usize, w1: Vec<f32>, b1: Vec<f32>, w2: Vec<f32>, b2: Vec<f32>) -> Result<Self> {
        if channels == 0 || hidden == 0 {
            return shape_err("UpdateNet needs at least one channel and one hidden unit");
        }
        let p = Self { channels, hidden, w1, b1, w2, b2 };
        if p.w1.len() != hidden * 3 * channels || p.b1.len() != hidden || p.w2.len() != channels * hidden || p.b2.len() != channels {
            return shape_err("UpdateNet parameter lengths are inconsistent with their dimensions");
        }
        if !p.all_finite() {
            return validation_err("UpdateNet parameters contain non-finite values");
        }
        Ok(p)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn in_channels(&self) -> usize {
        3 * self.channels
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn slices(&self) -> [&[f32]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f32]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(PARAM_MAGIC)?;
        for v in [PARAM_VERSION, self.in_channels() as u32, self.hidden as u32, self.channels as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for s in self.slices() {
            for v in s {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != PARAM_MAGIC {
            return Err(Error::Format(format!("bad parameter magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != PARAM_VERSION {
            return Err(Error::Format(format!("unsupported parameter version {version}")));
        }
        let in_ch = read_u32(&mut r)? as usize;
        let hidden = read_u32(&mut r)? as usize;
        let channels = read_u32(&mut r)? as usize;
        if in_ch != 3 * channels {
            return Err(Error::Format(format!("in_channels {in_ch} != 3 x out_channels {channels}")));
        }
        let w1 = read_f32s(&mut r, hidden * in_ch)?;
        let b1 = read_f32s(&mut r, hidden)?;
        let w2 = read_f32s(&mut r, channels * hidden)?;
        let b2 = read_f32s(&mut r, channels)?;
        Self::from_parts(channels, hidden, w1, b1, w2, b2)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

impl ParamGrads {
    pub fn zeros_like(p: &UpdateNetParams) -> Self {
        Self { w1: vec![0.0; p.w1.len()], b1: vec![0.0; p.b1.len()], w2: vec![0.0; p.w2.len()], b2: vec![0.0; p.b2.len()] }
    }

    pub fn slices(&self) -> [&[f32]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn matches(&self, p: &UpdateNetParams) -> bool {
        self.w1.len() == p.w1.len() && self.b1.len() == p.b1.len() && self.w2.len() == p.w2.len() && self.b2.len() == p.b2.len()
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-position forward pass.
pub fn forward(params: &UpdateNetParams, x: &TemplateTensor) -> Result<(TemplateTensor, ForwardCache)> {
    let in_ch = params.in_channels();
    if x.channels() != in_ch {
        return shape_err(format!("UpdateNet expects {in_ch} input channels, got {}", x.channels()));
    }
    let (h, w) = (x.height(), x.width());
    let positions = h * w;
    let (hid, c) = (params.hidden, params.channels);
    let mut pre = Vec::with_capacity(positions * hid);
    let mut post = Vec::with_capacity(positions * hid);
    let mut out = Vec::with_capacity(positions * c);
    for px in x.data().chunks_exact(in_ch) {
        let start = post.len();
        for (row, b) in params.w1.chunks_exact(in_ch).zip(&params.b1) {
            let z = dot(row, px) + b;
            pre.push(z);
            post.push(if z > 0.0 { z } else { 0.0 });
        }
        let hidden = &post[start..];
        for (row, b) in params.w2.chunks_exact(hid).zip(&params.b2) {
            out.push(dot(row, hidden) + b);
        }
    }
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("UpdateNet output is non-finite at flat index {i}")));
    }
    let cache = ForwardCache {
        input: x.clone(),
        pre_activation: TemplateTensor::from_parts(h, w, hid, pre),
        hidden: TemplateTensor::from_parts(h, w, hid, post),
    };
    Ok((TemplateTensor::from_parts(h, w, c, out), cache))
}

/// Batch gradient accumulator with 64-bit buffers and a fixed summation order.
#[derive(Clone, Debug)]
pub struct GradAccumulator {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    samples: usize,
}

impl GradAccumulator {
    pub fn new(params: &UpdateNetParams) -> Self {
        Self {
            w1: vec![0.0; params.w1.len()],
            b1: vec![0.0; params.b1.len()],
            w2: vec![0.0; params.w2.len()],
            b2: vec![0.0; params.b2.len()],
            samples: 0,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Adds the gradient of `⟨grad_out, forward(x)⟩` for one sample.
    pub fn accumulate(&mut self, params: &UpdateNetParams, cache: &ForwardCache, grad_out: &TemplateTensor) -> Result<()> {
        let (hid, c, in_ch) = (params.hidden, params.channels, params.in_channels());
        if grad_out.shape() != (cache.input.height(), cache.input.width(), c) {
            return shape_err(format!(
                "grad_out shape {:?} does not match output {:?}",
                grad_out.shape(),
                (cache.input.height(), cache.input.width(), c)
            ));
        }
        if cache.input.channels() != in_ch || cache.hidden.channels() != hid || self.w1.len() != params.w1.len() {
            return shape_err("forward cache was produced with different parameters");
        }
        let mut d_hidden = vec![0f64; hid];
        for ((x, (pre, post)), g) in cache
            .input
            .data()
            .chunks_exact(in_ch)
            .zip(cache.pre_activation.data().chunks_exact(hid).zip(cache.hidden.data().chunks_exact(hid)))
            .zip(grad_out.data().chunks_exact(c))
        {
            d_hidden.iter_mut().for_each(|v| *v = 0.0);
            for (k, &gk) in g.iter().enumerate() {
                let gk = gk as f64;
                self.b2[k] += gk;
                if gk == 0.0 {
                    continue;
                }
                let w2_row = &params.w2[k * hid..(k + 1) * hid];
                let gw2 = &mut self.w2[k * hid..(k + 1) * hid];
                for j in 0..hid {
                    gw2[j] += gk * post[j] as f64;
                    d_hidden[j] += gk * w2_row[j] as f64;
                }
            }
            for j in 0..hid {
                // ReLU subgradient at exactly zero is zero.
                if pre[j] <= 0.0 {
                    continue;
                }
                let dj = d_hidden[j];
                self.b1[j] += dj;
                let gw1 = &mut self.w1[j * in_ch..(j + 1) * in_ch];
                for (gv, &xv) in gw1.iter_mut().zip(x) {
                    *gv += dj * xv as f64;
                }
            }
        }
        self.samples += 1;
        Ok(())
    }

    /// Scales the sums by `scale` and rounds to 32-bit.
    pub fn finish(&self, scale: f64) -> Result<ParamGrads> {
        let conv = |v: &[f64]| v.iter().map(|x| (x * scale) as f32).collect::<Vec<f32>>();
        let grads = ParamGrads { w1: conv(&self.w1), b1: conv(&self.b1), w2: conv(&self.w2), b2: conv(&self.b2) };
        if !grads.all_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        Ok(grads)
    }

    /// Mean gradient over the accumulated samples.
    pub fn mean(&self) -> Result<ParamGrads> {
        if self.samples == 0 {
            return Err(Error::Input("no samples accumulated".into()));
        }
        self.finish(1.0 / self.samples as f64)
    }
}

/// Exact gradient of the forward map contracted with `grad_out`.
pub fn backward(params: &UpdateNetParams, cache: &ForwardCache, grad_out: &TemplateTensor) -> Result<ParamGrads> {
    let mut acc = GradAccumulator::new(params);
    acc.accumulate(params, cache, grad_out)?;
    acc.finish(1.0)
}

/// Mean squared error between the network output and `target`, and the
/// output gradient `2(out − target)/E`.
pub fn mse_and_grad(out: &TemplateTensor, target: &TemplateTensor) -> Result<(f64, TemplateTensor)> {
    if out.shape() != target.shape() {
        return shape_err(format!("output {:?} vs target {:?}", out.shape(), target.shape()));
    }
    let n = out.data().len() as f64;
    let mut sq = 0f64;
    let grad: Vec<f32> = out
        .data()
        .iter()
        .zip(target.data())
        .map(|(&o, &t)| {
            let d = o as f64 - t as f64;
            sq += d * d;
            (2.0 * d / n) as f32
        })
        .collect();
    let (h, w, c) = out.shape();
    Ok((sq / n, TemplateTensor::from_parts(h, w, c, grad)))
}

/// Forward pass in 64-bit arithmetic that re-evaluates the loss after a
/// single-parameter perturbation without touching the other activations.
struct ReferenceNet {
    channels: usize,
    hidden: usize,
    params: Vec<f64>,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
}

enum Probe {
    W1 { unit: usize, input: usize },
    B1 { unit: usize },
    W2 { out: usize, unit: usize },
    B2 { out: usize },
}

impl ReferenceNet {
    fn new(params: &UpdateNetParams, x: &TemplateTensor, target: &TemplateTensor) -> Self {
        let (c, hid, in_ch) = (params.channels, params.hidden, params.in_channels());
        let flat: Vec<f64> = params.slices().iter().flat_map(|s| s.iter().map(|&v| v as f64)).collect();
        let inputs: Vec<Vec<f64>> = x.data().chunks_exact(in_ch).map(|p| p.iter().map(|&v| v as f64).collect()).collect();
        let target = target.data().chunks_exact(c).map(|p| p.iter().map(|&v| v as f64).collect()).collect();
        let mut net = Self { channels: c, hidden: hid, params: flat, inputs, pre: Vec::new(), out: Vec::new(), target };
        let (pre, out): (Vec<_>, Vec<_>) = (0..net.inputs.len()).map(|p| net.evaluate(p)).unzip();
        net.pre = pre;
        net.out = out;
        net
    }

    fn evaluate(&self, p: usize) -> (Vec<f64>, Vec<f64>) {
        let (c, hid) = (self.channels, self.hidden);
        let in_ch = 3 * c;
        let x = &self.inputs[p];
        let (w1, rest) = self.params.split_at(hid * in_ch);
        let (b1, rest) = rest.split_at(hid);
        let (w2, b2) = rest.split_at(c * hid);
        let pre: Vec<f64> = (0..hid).map(|j| b1[j] + (0..in_ch).map(|i| w1[j * in_ch + i] * x[i]).sum::<f64>()).collect();
        let out = (0..c).map(|k| b2[k] + (0..hid).map(|j| w2[k * hid + j] * pre[j].max(0.0)).sum::<f64>()).collect();
        (pre, out)
    }

    fn probe(&self, index: usize) -> Probe {
        let (c, hid) = (self.channels, self.hidden);
        let in_ch = 3 * c;
        let n_w1 = hid * in_ch;
        if index < n_w1 {
            Probe::W1 { unit: index / in_ch, input: index % in_ch }
        } else if index < n_w1 + hid {
            Probe::B1 { unit: index - n_w1 }
        } else if index < n_w1 + hid + c * hid {
            let r = index - n_w1 - hid;
            Probe::W2 { out: r / hid, unit: r % hid }
        } else {
            Probe::B2 { out: index - n_w1 - hid - c * hid }
        }
    }

    /// Loss with parameter `index` shifted by `delta`, plus the sign pattern of
    /// the affected hidden unit across positions.
    fn shifted_loss(&self, index: usize, delta: f64) -> (f64, Vec<bool>) {
        let hid = self.hidden;
        let probe = self.probe(index);
        let mut total = 0.0;
        let mut signs = Vec::new();
        for p in 0..self.inputs.len() {
            let mut out = self.out[p].clone();
            match probe {
                Probe::W1 { unit, .. } | Probe::B1 { unit } => {
                    let dz = match probe {
                        Probe::W1 { input, .. } => delta * self.inputs[p][input],
                        _ => delta,
                    };
                    let z = self.pre[p][unit];
                    let shifted = z + dz;
                    signs.push(shifted > 0.0);
                    let d_act = shifted.max(0.0) - z.max(0.0);
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += self.params[hid * 3 * self.channels + hid + k * hid + unit] * d_act;
                    }
                }
                Probe::W2 { out: k, unit } => out[k] += delta * self.pre[p][unit].max(0.0),
                Probe::B2 { out: k } => out[k] += delta,
            }
            total += out.iter().zip(&self.target[p]).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
        }
        (total / (self.inputs.len() * self.channels) as f64, signs)
    }
}

/// Central-difference gradient of `mean((forward(x) − target)²)` with respect to
/// every parameter, evaluated in 64-bit arithmetic.
///
/// The loss is piecewise quadratic along each coordinate. When a ±eps probe
/// crosses a ReLU kink the step is shrunk (up to ten times by 10×) until both
/// probes share one linear region.
pub fn finite_diff_grad(params: &UpdateNetParams, x: &TemplateTensor, target: &TemplateTensor, eps: f64) -> Result<ParamGrads> {
    if !(eps > 0.0) {
        return validation_err("finite-difference step must be positive");
    }
    if x.channels() != params.in_channels() {
        return shape_err(format!("expected {} input channels, got {}", params.in_channels(), x.channels()));
    }
    if target.shape() != (x.height(), x.width(), params.channels) {
        return shape_err("target shape does not match the network output");
    }
    let reference = ReferenceNet::new(params, x, target);
    let grad: Vec<f32> = (0..params.parameter_count())
        .map(|i| {
            let mut step = eps;
            let mut estimate = 0.0;
            for _ in 0..=10 {
                let (plus, s_plus) = reference.shifted_loss(i, step);
                let (minus, s_minus) = reference.shifted_loss(i, -step);
                estimate = (plus - minus) / (2.0 * step);
                if s_plus == s_minus {
                    break;
                }
                step /= 10.0;
            }
            estimate as f32
        })
        .collect();
    let mut it = grad.into_iter();
    let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<f32>>();
    Ok(ParamGrads {
        w1: take(params.w1.len()),
        b1: take(params.b1.len()),
        w2: take(params.w2.len()),
        b2: take(params.b2.len()),
    })
}

/// Largest elementwise relative error between two gradient sets, with
/// `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &ParamGrads, b: &ParamGrads, floor: f64) -> f64 {
    a.slices()
        .iter()
        .zip(b.slices())
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(&p, &q)| {
            let (p, q) = (p as f64, q as f64);
            (p - q).abs() / p.abs().max(q.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

/// Checks that `grads` can update `params`.
pub(crate) fn check_grads(params: &UpdateNetParams, grads: &ParamGrads) -> Result<()> {
    if !grads.matches(params) {
        return shape_err("gradient layout does not match parameters");
    }
    Ok(())
}
