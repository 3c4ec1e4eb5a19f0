//! Scene description and the deterministic renderer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Image;
use crate::bbox::BBox;
use crate::error::{validation_err, Result};

/// Keyframes traversed per frame by a drift event of magnitude 1.
pub const DRIFT_RATE: f32 = 1.0 / 20.0;

const BUMPS_PER_PATTERN: usize = 8;
const BACKGROUND_LEVEL: f32 = 0.5;
const OCCLUDER_LEVEL: f32 = 0.12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectShape {
    Square,
    Disc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectConfig {
    pub shape: ObjectShape,
    /// Side (or diameter) in pixels.
    pub base_size: f32,
    pub pattern_seed: u64,
    /// Multiplies the width of the texture blobs; larger is smoother.
    #[serde(default = "unit_scale")]
    pub texture_scale: f32,
}

fn unit_scale() -> f32 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    /// Upper bound on the per-axis speed in pixels per frame.
    pub max_speed: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Drift,
    Occlusion,
    Blur,
    Illumination,
    Scale,
}

/// An appearance change active on the inclusive frame range `[start_frame, end_frame]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppearanceEvent {
    pub start_frame: u32,
    pub end_frame: u32,
    pub kind: EventKind,
    pub magnitude: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub frame_size: u32,
    pub num_frames: u32,
    pub object: ObjectConfig,
    pub motion: MotionConfig,
    #[serde(default)]
    pub appearance_events: Vec<AppearanceEvent>,
    pub noise_sigma: f32,
    /// Contrast of the static textured background, 0 for a flat background.
    #[serde(default)]
    pub clutter: f32,
    pub rng_seed: u64,
}

impl SceneConfig {
    /// A flat, motionless scene with no events.
    pub fn still(frame_size: u32, num_frames: u32, base_size: f32, seed: u64) -> Self {
        Self {
            frame_size,
            num_frames,
            object: ObjectConfig { shape: ObjectShape::Square, base_size, pattern_seed: seed, texture_scale: 1.0 },
            motion: MotionConfig { max_speed: 0.0 },
            appearance_events: Vec::new(),
            noise_sigma: 0.0,
            clutter: 0.0,
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 {
            return validation_err("num_frames must be at least 1");
        }
        if !(self.object.base_size.is_finite() && self.object.base_size >= 2.0) {
            return validation_err("object.base_size must be at least 2 pixels");
        }
        if !(self.object.texture_scale.is_finite() && self.object.texture_scale > 0.0) {
            return validation_err("object.texture_scale must be positive");
        }
        if (self.frame_size as f32) < 4.0 * self.object.base_size {
            return validation_err(format!(
                "frame_size {} must be at least 4 x object.base_size ({})",
                self.frame_size, self.object.base_size
            ));
        }
        if !(self.motion.max_speed.is_finite() && self.motion.max_speed >= 0.0) {
            return validation_err("motion.max_speed must be finite and non-negative");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return validation_err("noise_sigma must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.clutter) {
            return validation_err("clutter must lie in [0, 1]");
        }
        for (i, ev) in self.appearance_events.iter().enumerate() {
            if ev.start_frame >= self.num_frames {
                return validation_err(format!(
                    "appearance_events[{i}].start_frame {} outside [0, {})",
                    ev.start_frame, self.num_frames
                ));
            }
            if ev.end_frame >= self.num_frames || ev.end_frame < ev.start_frame {
                return validation_err(format!(
                    "appearance_events[{i}].end_frame {} outside [{}, {})",
                    ev.end_frame, ev.start_frame, self.num_frames
                ));
            }
            if !(0.0..=1.0).contains(&ev.magnitude) {
                return validation_err(format!(
                    "appearance_events[{i}].magnitude {} outside [0, 1]",
                    ev.magnitude
                ));
            }
        }
        Ok(())
    }
}

/// Rendered frames with one ground-truth box per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSequence {
    pub frames: Vec<Image>,
    pub gt_boxes: Vec<BBox>,
}

impl SyntheticSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
struct Bump {
    cx: f32,
    cy: f32,
    inv_two_var: f32,
    amp: f32,
}

fn bump_value(bumps: &[Bump], x: f32, y: f32) -> f32 {
    bumps
        .iter()
        .map(|b| {
            let d2 = (x - b.cx).powi(2) + (y - b.cy).powi(2);
            b.amp * (-d2 * b.inv_two_var).exp()
        })
        .sum()
}

fn random_bumps(rng: &mut ChaCha8Rng, n: usize, extent: f32, sigma: (f32, f32), amp: (f32, f32)) -> Vec<Bump> {
    (0..n)
        .map(|_| {
            let s = rng.random_range(sigma.0..sigma.1);
            let a = rng.random_range(amp.0..amp.1);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Bump {
                cx: rng.random_range(0.0..extent),
                cy: rng.random_range(0.0..extent),
                inv_two_var: 1.0 / (2.0 * s * s),
                amp: sign * a,
            }
        })
        .collect()
}

/// Object texture keyframes; the pattern morphs along this chain under drift.
struct PatternChain {
    seed: u64,
    scale: f32,
    cache: Vec<Vec<Bump>>,
}

impl PatternChain {
    fn new(seed: u64, scale: f32) -> Self {
        Self { seed, scale, cache: Vec::new() }
    }

    fn keyframe(&mut self, k: usize) -> &[Bump] {
        while self.cache.len() <= k {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(1000 + self.cache.len() as u64);
            let sigma = (0.08 * self.scale, 0.2 * self.scale);
            self.cache.push(random_bumps(&mut rng, BUMPS_PER_PATTERN, 1.0, sigma, (0.15, 0.35)));
        }
        &self.cache[k]
    }

    /// Texture value at normalized object coordinates for drift phase `phase`.
    fn value(&mut self, phase: f32, u: f32, v: f32) -> f32 {
        let k = phase.floor().max(0.0) as usize;
        let frac = phase - k as f32;
        let a = bump_value(self.keyframe(k), u, v);
        let mixed = if frac > 0.0 {
            let b = bump_value(self.keyframe(k + 1), u, v);
            (1.0 - frac) * a + frac * b
        } else {
            a
        };
        (0.5 + mixed).clamp(0.05, 0.95)
    }
}

/// Smooth on/off envelope of an event, zero outside it.
fn event_profile(ev: &AppearanceEvent, t: u32) -> f32 {
    if t < ev.start_frame || t > ev.end_frame {
        return 0.0;
    }
    let span = (ev.end_frame - ev.start_frame + 2) as f32;
    let p = (t - ev.start_frame + 1) as f32 / span;
    (std::f32::consts::PI * p).sin()
}

fn drift_phase(events: &[AppearanceEvent], t: u32) -> f32 {
    events
        .iter()
        .filter(|e| e.kind == EventKind::Drift && t >= e.start_frame)
        .map(|e| {
            let active = (t.min(e.end_frame) - e.start_frame) as f32;
            e.magnitude * DRIFT_RATE * active
        })
        .sum()
}

fn transient(events: &[AppearanceEvent], kind: EventKind, t: u32) -> f32 {
    events
        .iter()
        .filter(|e| e.kind == kind)
        .map(|e| e.magnitude * event_profile(e, t))
        .fold(0.0, f32::max)
}

fn render_background(cfg: &SceneConfig) -> Image {
    let n = cfg.frame_size as usize;
    let mut data = vec![BACKGROUND_LEVEL; n * n];
    if cfg.clutter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(1);
        let size = cfg.object.base_size;
        let count = ((n * n) as f32 / (size * size) * BUMPS_PER_PATTERN as f32).ceil() as usize;
        let bumps = random_bumps(&mut rng, count, n as f32, (0.08 * size, 0.2 * size), (0.15, 0.35));
        // Bin bumps so each pixel only visits nearby ones.
        let cell = (0.2 * size * 4.0).max(1.0);
        let bins = (n as f32 / cell).ceil() as usize + 1;
        let mut grid: Vec<Vec<Bump>> = vec![Vec::new(); bins * bins];
        for b in &bumps {
            let bx = ((b.cx / cell) as usize).min(bins - 1);
            let by = ((b.cy / cell) as usize).min(bins - 1);
            grid[by * bins + bx].push(*b);
        }
        for y in 0..n {
            for x in 0..n {
                let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
                let gx = (px / cell) as isize;
                let gy = (py / cell) as isize;
                let mut v = 0.0;
                for by in (gy - 1).max(0)..=(gy + 1).min(bins as isize - 1) {
                    for bx in (gx - 1).max(0)..=(gx + 1).min(bins as isize - 1) {
                        v += bump_value(&grid[by as usize * bins + bx as usize], px, py);
                    }
                }
                data[y * n + x] = (BACKGROUND_LEVEL + cfg.clutter * v).clamp(0.05, 0.95);
            }
        }
    }
    Image::from_parts(n, n, data)
}

/// Object centers for every frame.
fn simulate_motion(cfg: &SceneConfig) -> Vec<(f32, f32, f32)> {
    let n = cfg.frame_size as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(2);
    let max_speed = cfg.motion.max_speed;
    let size_at = |t: u32| cfg.object.base_size * (1.0 + 0.5 * transient(&cfg.appearance_events, EventKind::Scale, t));
    let (mut cx, mut cy, mut vx, mut vy) = (n / 2.0, n / 2.0, 0.0f32, 0.0f32);
    if max_speed > 0.0 {
        let spread = n / 2.0 - cfg.object.base_size * 1.5;
        cx += rng.random_range(-spread..spread) * 0.5;
        cy += rng.random_range(-spread..spread) * 0.5;
        let angle = rng.random_range(0.0..std::f32::consts::TAU);
        let speed = max_speed * rng.random_range(0.4..1.0);
        vx = speed * angle.cos();
        vy = speed * angle.sin();
    }
    let jitter = Normal::new(0.0, 0.25 * max_speed.max(1e-6)).expect("positive sigma");
    let mut out = Vec::with_capacity(cfg.num_frames as usize);
    for t in 0..cfg.num_frames {
        let s = size_at(t);
        if t > 0 && max_speed > 0.0 {
            vx = (vx + jitter.sample(&mut rng)).clamp(-max_speed, max_speed);
            vy = (vy + jitter.sample(&mut rng)).clamp(-max_speed, max_speed);
            cx += vx;
            cy += vy;
        }
        let (lo, hi) = (s / 2.0 + 1.0, n - s / 2.0 - 1.0);
        if cx < lo || cx > hi {
            vx = -vx;
            cx = cx.clamp(lo, hi);
        }
        if cy < lo || cy > hi {
            vy = -vy;
            cy = cy.clamp(lo, hi);
        }
        out.push((cx, cy, s));
    }
    out
}

/// Fraction of the pixel `[x, x+1) × [y, y+1)` covered by the shape.
fn coverage(shape: ObjectShape, bx: &BBox, x: usize, y: usize) -> f32 {
    match shape {
        ObjectShape::Square => {
            let (x0, y0) = (x as f32, y as f32);
            let cx = ((x0 + 1.0).min(bx.x + bx.w) - x0.max(bx.x)).clamp(0.0, 1.0);
            let cy = ((y0 + 1.0).min(bx.y + bx.h) - y0.max(bx.y)).clamp(0.0, 1.0);
            cx * cy
        }
        ObjectShape::Disc => {
            let (cx, cy) = bx.center();
            let r = bx.w.min(bx.h) / 2.0;
            let d = (x as f32 + 0.5 - cx).hypot(y as f32 + 0.5 - cy);
            (r - d + 0.5).clamp(0.0, 1.0)
        }
    }
}

/// Renders the scene. Same configuration, same bits.
pub fn render_sequence(cfg: &SceneConfig) -> Result<SyntheticSequence> {
    cfg.validate()?;
    let n = cfg.frame_size as usize;
    let background = render_background(cfg);
    let centers = simulate_motion(cfg);
    let mut patterns = PatternChain::new(cfg.object.pattern_seed, cfg.object.texture_scale);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    noise_rng.set_stream(3);
    let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0f32, cfg.noise_sigma).expect("valid sigma"));
    let events = &cfg.appearance_events;

    let mut frames = Vec::with_capacity(centers.len());
    let mut boxes = Vec::with_capacity(centers.len());
    for (t, &(cx, cy, s)) in centers.iter().enumerate() {
        let t = t as u32;
        let bx = BBox::from_center(cx, cy, s, s);
        let phase = drift_phase(events, t);
        let gain = 1.0 - 0.5 * transient(events, EventKind::Illumination, t);
        let occluded = transient(events, EventKind::Occlusion, t);
        let occluder = BBox::new(bx.x, bx.y, bx.w * occluded, bx.h);
        let blur_radius = (3.0 * transient(events, EventKind::Blur, t)).round() as usize;

        let mut data = background.data().to_vec();
        let x_lo = bx.x.floor().max(0.0) as usize;
        let y_lo = bx.y.floor().max(0.0) as usize;
        let x_hi = ((bx.x + bx.w).ceil() as usize).min(n);
        let y_hi = ((bx.y + bx.h).ceil() as usize).min(n);
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let cov = coverage(cfg.object.shape, &bx, x, y);
                if cov <= 0.0 {
                    continue;
                }
                let u = ((x as f32 + 0.5 - bx.x) / bx.w).clamp(0.0, 1.0);
                let v = ((y as f32 + 0.5 - bx.y) / bx.h).clamp(0.0, 1.0);
                let obj = (patterns.value(phase, u, v) * gain).clamp(0.0, 1.0);
                let px = &mut data[y * n + x];
                *px = (1.0 - cov) * *px + cov * obj;
                if occluded > 0.0 {
                    let occ = coverage(ObjectShape::Square, &occluder, x, y);
                    *px = (1.0 - occ) * *px + occ * OCCLUDER_LEVEL;
                }
            }
        }
        if blur_radius > 0 {
            data = box_blur(&data, n, blur_radius);
        }
        if let Some(dist) = &noise {
            for px in data.iter_mut() {
                *px = (*px + dist.sample(&mut noise_rng)).clamp(0.0, 1.0);
            }
        }
        frames.push(Image::from_parts(n, n, data));
        boxes.push(bx);
    }
    Ok(SyntheticSequence { frames, gt_boxes: boxes })
}

fn box_blur(data: &[f32], n: usize, radius: usize) -> Vec<f32> {
    let r = radius as isize;
    let norm = 1.0 / (2 * radius + 1) as f32;
    let clamp = |i: isize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            tmp[y * n + x] = (-r..=r).map(|d| data[y * n + clamp(x as isize + d)]).sum::<f32>() * norm;
        }
    }
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            out[y * n + x] = (-r..=r).map(|d| tmp[clamp(y as isize + d) * n + x]).sum::<f32>() * norm;
        }
    }
    out
}
