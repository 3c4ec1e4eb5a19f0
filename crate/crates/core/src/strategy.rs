//! Template update rules: no update, linear running average, three-way
//! weighted fusion and the learned UpdateNet.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Error, Result};
use crate::net::{forward, UpdateNetParams};
use crate::tensor::{combine, concat_channels, TemplateTensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearUpdateConfig {
    pub gamma: f32,
}

impl LinearUpdateConfig {
    pub fn new(gamma: f32) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return validation_err(format!("update rate {gamma} outside [0, 1]"));
        }
        Ok(Self { gamma })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub alpha_init: f32,
    pub alpha_accu: f32,
    pub alpha_curr: f32,
}

impl FusionWeights {
    pub fn new(alpha_init: f32, alpha_accu: f32, alpha_curr: f32) -> Result<Self> {
        if ![alpha_init, alpha_accu, alpha_curr].iter().all(|v| v.is_finite()) {
            return validation_err("fusion weights must be finite");
        }
        Ok(Self { alpha_init, alpha_accu, alpha_curr })
    }

    /// The weights that reproduce a linear update with rate `gamma`.
    pub fn from_linear(gamma: f32) -> Self {
        Self { alpha_init: 0.0, alpha_accu: 1.0 - gamma, alpha_curr: gamma }
    }
}

/// Which input the UpdateNet residual is added to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipSource {
    /// No residual connection: the network output is the template.
    None,
    /// Residual on the current-frame template.
    Current,
    /// Residual on the previous accumulated template.
    Accumulated,
    /// Residual on the first-frame ground-truth template.
    #[default]
    Initial,
}

impl SkipSource {
    pub const ALL: [SkipSource; 4] = [SkipSource::None, SkipSource::Current, SkipSource::Accumulated, SkipSource::Initial];

    pub fn as_str(&self) -> &'static str {
        match self {
            SkipSource::None => "none",
            SkipSource::Current => "current",
            SkipSource::Accumulated => "accum",
            SkipSource::Initial => "t0",
        }
    }

    /// The tensor the residual is added to, if any.
    pub fn select<'a>(&self, t0: &'a TemplateTensor, prev_accum: &'a TemplateTensor, current: &'a TemplateTensor) -> Option<&'a TemplateTensor> {
        match self {
            SkipSource::None => None,
            SkipSource::Current => Some(current),
            SkipSource::Accumulated => Some(prev_accum),
            SkipSource::Initial => Some(t0),
        }
    }
}

impl fmt::Display for SkipSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SkipSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SkipSource::None),
            "current" => Ok(SkipSource::Current),
            "accum" => Ok(SkipSource::Accumulated),
            "t0" => Ok(SkipSource::Initial),
            other => validation_err(format!("unknown skip source '{other}' (expected none|current|accum|t0)")),
        }
    }
}

/// `(1 − γ)·prev_accum + γ·current`.
pub fn linear_update(prev_accum: &TemplateTensor, current: &TemplateTensor, cfg: LinearUpdateConfig) -> Result<TemplateTensor> {
    combine(1.0 - cfg.gamma, prev_accum, cfg.gamma, current)
}

/// `α_init·t0 + α_accu·prev_accum + α_curr·current`.
///
/// A zero `α_init` skips the first term, so weights `(0, 1 − γ, γ)` reproduce
/// [`linear_update`] bit for bit.
pub fn weighted_fusion(t0: &TemplateTensor, prev_accum: &TemplateTensor, current: &TemplateTensor, w: FusionWeights) -> Result<TemplateTensor> {
    let tail = combine(w.alpha_accu, prev_accum, w.alpha_curr, current)?;
    if w.alpha_init == 0.0 {
        if t0.shape() != tail.shape() {
            return Err(Error::Shape(format!("weighted_fusion: shapes {:?} and {:?} differ", t0.shape(), tail.shape())));
        }
        return Ok(tail);
    }
    combine(w.alpha_init, t0, 1.0, &tail)
}

/// UpdateNet output plus the selected skip input.
pub fn updatenet_update(
    params: &UpdateNetParams,
    skip: SkipSource,
    t0: &TemplateTensor,
    prev_accum: &TemplateTensor,
    current: &TemplateTensor,
) -> Result<TemplateTensor> {
    if t0.channels() != params.channels() {
        return Err(Error::Shape(format!(
            "UpdateNet has {} channels, templates have {}",
            params.channels(),
            t0.channels()
        )));
    }
    let x = concat_channels(t0, prev_accum, current)?;
    let (residual, _) = forward(params, &x)?;
    match skip.select(t0, prev_accum, current) {
        Some(base) => combine(1.0, base, 1.0, &residual),
        None => Ok(residual),
    }
}

/// The update rule a tracker applies after each frame.
#[derive(Clone, Debug, PartialEq)]
pub enum UpdateStrategy {
    /// Keep the first-frame template.
    None,
    Linear(LinearUpdateConfig),
    Fusion(FusionWeights),
    UpdateNet { params: Arc<UpdateNetParams>, skip: SkipSource },
}

impl UpdateStrategy {
    pub fn updatenet(params: UpdateNetParams) -> Self {
        UpdateStrategy::UpdateNet { params: Arc::new(params), skip: SkipSource::Initial }
    }

    pub fn linear(gamma: f32) -> Result<Self> {
        Ok(UpdateStrategy::Linear(LinearUpdateConfig::new(gamma)?))
    }

    pub fn apply(&self, t0: &TemplateTensor, prev_accum: &TemplateTensor, current: &TemplateTensor) -> Result<TemplateTensor> {
        match self {
            UpdateStrategy::None => {
                if t0.shape() != prev_accum.shape() || t0.shape() != current.shape() {
                    return Err(Error::Shape("update inputs differ in shape".into()));
                }
                Ok(t0.clone())
            }
            UpdateStrategy::Linear(cfg) => linear_update(prev_accum, current, *cfg),
            UpdateStrategy::Fusion(w) => weighted_fusion(t0, prev_accum, current, *w),
            UpdateStrategy::UpdateNet { params, skip } => updatenet_update(params, *skip, t0, prev_accum, current),
        }
    }

    /// Short label for reports.
    pub fn label(&self) -> String {
        match self {
            UpdateStrategy::None => "none".into(),
            UpdateStrategy::Linear(c) => format!("linear:{}", c.gamma),
            UpdateStrategy::Fusion(w) => format!("fusion:{},{},{}", w.alpha_init, w.alpha_accu, w.alpha_curr),
            UpdateStrategy::UpdateNet { skip, .. } => format!("updatenet[{skip}]"),
        }
    }
}

/// Anything that can produce the next accumulated template.
///
/// `frame` is the index of the frame whose template is `current`.
pub trait UpdateRule {
    fn update(&self, frame: usize, t0: &TemplateTensor, prev_accum: &TemplateTensor, current: &TemplateTensor) -> Result<TemplateTensor>;
}

impl UpdateRule for UpdateStrategy {
    fn update(&self, _frame: usize, t0: &TemplateTensor, prev_accum: &TemplateTensor, current: &TemplateTensor) -> Result<TemplateTensor> {
        self.apply(t0, prev_accum, current)
    }
}

/// Parsed form of the command-line strategy grammar
/// `none | linear:γ | fusion:a,b,c | updatenet:path`.
#[derive(Clone, Debug, PartialEq)]
pub enum StrategySpec {
    None,
    Linear(LinearUpdateConfig),
    Fusion(FusionWeights),
    UpdateNet(String),
}

pub const STRATEGY_GRAMMAR: &str = "none | linear:<gamma in [0,1]> | fusion:<a>,<b>,<c> | updatenet:<path>";

impl FromStr for StrategySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let usage = |why: &str| Error::Validation(format!("invalid strategy '{s}': {why}; expected {STRATEGY_GRAMMAR}"));
        let s = s.trim();
        if s == "none" {
            return Ok(StrategySpec::None);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(|| usage("missing ':'"))?;
        match kind {
            "linear" => {
                let gamma: f32 = arg.trim().parse().map_err(|_| usage("update rate is not a number"))?;
                LinearUpdateConfig::new(gamma).map(StrategySpec::Linear).map_err(|_| usage("update rate outside [0, 1]"))
            }
            "fusion" => {
                let parts: Vec<f32> = arg
                    .split(',')
                    .map(|p| p.trim().parse::<f32>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| usage("fusion weights are not numbers"))?;
                match parts[..] {
                    [a, b, c] => FusionWeights::new(a, b, c).map(StrategySpec::Fusion).map_err(|_| usage("fusion weights must be finite")),
                    _ => Err(usage("fusion needs exactly three weights")),
                }
            }
            "updatenet" if !arg.is_empty() => Ok(StrategySpec::UpdateNet(arg.to_string())),
            "updatenet" => Err(usage("missing parameter path")),
            _ => Err(usage("unknown strategy kind")),
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategySpec::None => write!(f, "none"),
            StrategySpec::Linear(c) => write!(f, "linear:{}", c.gamma),
            StrategySpec::Fusion(w) => write!(f, "fusion:{},{},{}", w.alpha_init, w.alpha_accu, w.alpha_curr),
            StrategySpec::UpdateNet(p) => write!(f, "updatenet:{p}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params, InitScheme};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, h: usize, w: usize, c: usize) -> TemplateTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TemplateTensor::new(h, w, c, (0..h * w * c).map(|_| rng.random_range(-2.0f32..2.0)).collect()).unwrap()
    }

    #[test]
    fn linear_examples() {
        let prev = random(1, 2, 2, 3);
        let cur = random(2, 2, 2, 3);
        assert_eq!(linear_update(&prev, &cur, LinearUpdateConfig::new(0.0).unwrap()).unwrap(), prev);
        assert_eq!(linear_update(&prev, &cur, LinearUpdateConfig::new(1.0).unwrap()).unwrap(), cur);
        let ones = TemplateTensor::filled(6, 6, 4, 1.0).unwrap();
        let zeros = TemplateTensor::zeros(6, 6, 4).unwrap();
        let out = linear_update(&ones, &zeros, LinearUpdateConfig::new(0.0102).unwrap()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.9898));
        assert!(LinearUpdateConfig::new(1.5).is_err());
    }

    #[test]
    fn fusion_examples() {
        let (t0, prev, cur) = (random(1, 3, 3, 2), random(2, 3, 3, 2), random(3, 3, 3, 2));
        let lin = linear_update(&prev, &cur, LinearUpdateConfig { gamma: 0.0102 }).unwrap();
        let fused = weighted_fusion(&t0, &prev, &cur, FusionWeights::new(0.0, 0.9898, 0.0102).unwrap()).unwrap();
        assert_eq!(lin, fused);
        assert_eq!(weighted_fusion(&t0, &prev, &cur, FusionWeights::new(1.0, 0.0, 0.0).unwrap()).unwrap(), t0);
        assert_eq!(weighted_fusion(&t0, &prev, &cur, FusionWeights::new(0.0, 0.0, 1.0).unwrap()).unwrap(), cur);
        let other = random(4, 3, 2, 2);
        assert!(matches!(weighted_fusion(&other, &prev, &cur, FusionWeights::from_linear(0.1)), Err(Error::Shape(_))));
    }

    #[test]
    fn updatenet_examples() {
        let (t0, prev, cur) = (random(1, 2, 2, 4), random(2, 2, 2, 4), random(3, 2, 2, 4));
        let zero = init_params(4, 8, InitScheme::Zeros);
        assert_eq!(updatenet_update(&zero, SkipSource::Initial, &t0, &prev, &cur).unwrap(), t0);
        assert_eq!(updatenet_update(&zero, SkipSource::Current, &t0, &prev, &cur).unwrap(), cur);
        assert_eq!(updatenet_update(&zero, SkipSource::Accumulated, &t0, &prev, &cur).unwrap(), prev);
        assert!(updatenet_update(&zero, SkipSource::None, &t0, &prev, &cur).unwrap().data().iter().all(|&v| v == 0.0));
        let wrong = init_params(3, 8, InitScheme::Zeros);
        assert!(matches!(updatenet_update(&wrong, SkipSource::Initial, &t0, &prev, &cur), Err(Error::Shape(_))));
    }

    #[test]
    fn updatenet_matches_matrix_oracle() {
        let c = 5;
        let p = init_params(c, 7, InitScheme::ScaledUniform { seed: 9 });
        for seed in 0..10 {
            let (t0, prev, cur) = (random(seed, 1, 1, c), random(seed + 100, 1, 1, c), random(seed + 200, 1, 1, c));
            let out = updatenet_update(&p, SkipSource::Initial, &t0, &prev, &cur).unwrap();
            let x: Vec<f64> = t0.data().iter().chain(prev.data()).chain(cur.data()).map(|&v| v as f64).collect();
            let hidden: Vec<f64> = (0..7)
                .map(|j| (p.b1[j] as f64 + (0..3 * c).map(|i| p.w1[j * 3 * c + i] as f64 * x[i]).sum::<f64>()).max(0.0))
                .collect();
            for k in 0..c {
                let expect = t0.data()[k] as f64 + p.b2[k] as f64 + (0..7).map(|j| p.w2[k * 7 + j] as f64 * hidden[j]).sum::<f64>();
                assert!((out.data()[k] as f64 - expect).abs() <= 1e-4 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn apply_dispatch() {
        let (t0, prev, cur) = (random(1, 2, 2, 4), random(2, 2, 2, 4), random(3, 2, 2, 4));
        assert_eq!(UpdateStrategy::None.apply(&t0, &prev, &cur).unwrap(), t0);
        let lin = UpdateStrategy::linear(0.0102).unwrap();
        assert_eq!(lin.apply(&t0, &prev, &cur).unwrap(), linear_update(&prev, &cur, LinearUpdateConfig { gamma: 0.0102 }).unwrap());
        let un = UpdateStrategy::updatenet(init_params(4, 6, InitScheme::Zeros));
        assert_eq!(un.apply(&t0, &prev, &cur).unwrap(), t0);
    }

    #[test]
    fn strategy_grammar() {
        assert_eq!("none".parse::<StrategySpec>().unwrap(), StrategySpec::None);
        assert_eq!("linear:0.0102".parse::<StrategySpec>().unwrap(), StrategySpec::Linear(LinearUpdateConfig { gamma: 0.0102 }));
        assert_eq!(
            "fusion:0,0.9898,0.0102".parse::<StrategySpec>().unwrap(),
            StrategySpec::Fusion(FusionWeights { alpha_init: 0.0, alpha_accu: 0.9898, alpha_curr: 0.0102 })
        );
        assert_eq!("updatenet:out/stage3.unet".parse::<StrategySpec>().unwrap(), StrategySpec::UpdateNet("out/stage3.unet".into()));
        for bad in ["linear:1.5", "linear:x", "fusion:1,2", "updatenet:", "momentum:3", "linear"] {
            let err = bad.parse::<StrategySpec>().unwrap_err().to_string();
            assert!(err.contains(STRATEGY_GRAMMAR), "{err}");
        }
        for s in ["none", "linear:0.5", "fusion:0,0.9898,0.0102", "updatenet:a/b.unet"] {
            assert_eq!(s.parse::<StrategySpec>().unwrap().to_string(), s);
        }
    }

    proptest! {
        #[test]
        fn linear_is_convex(seed in 0u64..1000, gamma in 0.0f32..=1.0) {
            let prev = random(seed, 2, 3, 2);
            let cur = random(seed + 1, 2, 3, 2);
            let out = linear_update(&prev, &cur, LinearUpdateConfig { gamma }).unwrap();
            for ((o, a), b) in out.data().iter().zip(prev.data()).zip(cur.data()) {
                prop_assert!(*o >= a.min(*b) - 1e-6 && *o <= a.max(*b) + 1e-6);
            }
        }

        #[test]
        fn fusion_reduces_to_linear(seed in 0u64..1000, gamma in 0.0f32..=1.0) {
            let (t0, prev, cur) = (random(seed, 2, 2, 3), random(seed + 7, 2, 2, 3), random(seed + 9, 2, 2, 3));
            let lin = linear_update(&prev, &cur, LinearUpdateConfig { gamma }).unwrap();
            let fused = weighted_fusion(&t0, &prev, &cur, FusionWeights::from_linear(gamma)).unwrap();
            let bits = |t: &TemplateTensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&lin), bits(&fused));
        }

        #[test]
        fn linear_fixed_point(seed in 0u64..1000, gamma in 0.0f32..=1.0) {
            let t = random(seed, 2, 2, 3);
            let out = linear_update(&t, &t, LinearUpdateConfig { gamma }).unwrap();
            for (o, v) in out.data().iter().zip(t.data()) {
                prop_assert!((o - v).abs() <= 1e-6 * v.abs().max(1.0));
            }
        }

        #[test]
        fn zero_updatenet_returns_t0(seed in 0u64..1000) {
            let (t0, prev, cur) = (random(seed, 2, 2, 3), random(seed + 1, 2, 2, 3), random(seed + 2, 2, 2, 3));
            let out = updatenet_update(&init_params(3, 5, InitScheme::Zeros), SkipSource::Initial, &t0, &prev, &cur).unwrap();
            prop_assert_eq!(out, t0);
        }
    }
}
