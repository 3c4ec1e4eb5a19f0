//! Seeded drift benchmark: cluttered scenes whose object texture keeps
//! morphing, with noise, motion and occasional transient events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Result};
use crate::synth::{render_sequence, AppearanceEvent, EventKind, MotionConfig, ObjectConfig, ObjectShape, SceneConfig, SyntheticSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftBenchmark {
    pub sequences: usize,
    pub frames: u32,
    pub frame_size: u32,
    pub base_size: f32,
    pub max_speed: f32,
    /// Range of drift magnitudes drawn per sequence.
    pub drift: (f32, f32),
    /// Overlapping full-length drift events per sequence; their rates add up.
    pub drift_layers: usize,
    pub noise_sigma: f32,
    pub clutter: f32,
    pub texture_scale: f32,
    /// Probability that a sequence gets one transient event.
    pub transient_prob: f64,
    pub seed: u64,
}

impl Default for DriftBenchmark {
    fn default() -> Self {
        Self {
            sequences: 20,
            frames: 60,
            frame_size: 96,
            base_size: 16.0,
            max_speed: 1.5,
            drift: (0.6, 1.0),
            drift_layers: 4,
            noise_sigma: 0.01,
            clutter: 0.3,
            texture_scale: 1.0,
            transient_prob: 0.5,
            seed: 1,
        }
    }
}

impl DriftBenchmark {
    pub fn validate(&self) -> Result<()> {
        if self.sequences == 0 || self.frames < 3 {
            return validation_err("drift benchmark needs at least one sequence of three frames");
        }
        if !(0.0 <= self.drift.0 && self.drift.0 <= self.drift.1 && self.drift.1 <= 1.0) {
            return validation_err("drift range must satisfy 0 <= lo <= hi <= 1");
        }
        if !(0.0..=1.0).contains(&self.transient_prob) {
            return validation_err("transient_prob must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn scenes(&self) -> Result<Vec<SceneConfig>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let last = self.frames - 1;
        let scenes: Vec<SceneConfig> = (0..self.sequences)
            .map(|_| {
                let scene_seed: u64 = rng.random();
                let magnitude = if self.drift.1 > self.drift.0 { rng.random_range(self.drift.0..=self.drift.1) } else { self.drift.0 };
                let mut events =
                    vec![AppearanceEvent { start_frame: 1, end_frame: last, kind: EventKind::Drift, magnitude }; self.drift_layers];
                if rng.random_bool(self.transient_prob) && self.frames >= 12 {
                    let kind = [EventKind::Occlusion, EventKind::Illumination, EventKind::Blur][rng.random_range(0..3)];
                    let len = rng.random_range(4..=(self.frames / 4).max(4));
                    let start = rng.random_range(2..=last.saturating_sub(len).max(2));
                    events.push(AppearanceEvent {
                        start_frame: start,
                        end_frame: (start + len).min(last),
                        kind,
                        magnitude: rng.random_range(0.3f32..0.7),
                    });
                }
                let shape = if rng.random_bool(0.5) { ObjectShape::Square } else { ObjectShape::Disc };
                SceneConfig {
                    frame_size: self.frame_size,
                    num_frames: self.frames,
                    object: ObjectConfig { shape, base_size: self.base_size, pattern_seed: scene_seed ^ 0x9e37, texture_scale: self.texture_scale },
                    motion: MotionConfig { max_speed: self.max_speed },
                    appearance_events: events,
                    noise_sigma: self.noise_sigma,
                    clutter: self.clutter,
                    rng_seed: scene_seed,
                }
            })
            .collect();
        for s in &scenes {
            s.validate()?;
        }
        Ok(scenes)
    }

    /// Held-out companion: same settings, disjoint seed stream.
    pub fn held_out(&self, sequences: usize) -> Self {
        Self { sequences, seed: self.seed.wrapping_add(1), ..self.clone() }
    }

    pub fn render(&self) -> Result<Vec<SyntheticSequence>> {
        self.scenes()?.iter().map(render_sequence).collect()
    }
}
