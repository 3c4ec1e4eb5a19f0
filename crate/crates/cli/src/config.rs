use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use updatenet_core::bench::DriftBenchmark;
use updatenet_core::synth::SceneConfig;
use updatenet_core::tracker::TrackerConfig;
use updatenet_core::train::TrainConfig;

pub const WORKSPACE_ENV: &str = "UPDATENET_WORKSPACE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    /// Overlap at or below which a reset-protocol frame counts as a failure.
    pub fail_threshold: f32,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { fail_threshold: 0.0 }
    }
}

/// One JSON document drives every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub workspace: Option<PathBuf>,
    /// Replaces the benchmark and training seeds when set.
    pub rng_seed: Option<u64>,
    /// Explicit scenes; when empty, `benchmark` generates them.
    pub scenes: Vec<SceneConfig>,
    pub benchmark: DriftBenchmark,
    pub tracker: TrackerConfig,
    pub train: TrainConfig,
    pub strategies: Vec<String>,
    pub metrics: MetricOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            workspace: None,
            rng_seed: None,
            scenes: Vec::new(),
            benchmark: DriftBenchmark::default(),
            tracker: TrackerConfig::default(),
            train: TrainConfig::desk(),
            strategies: Vec::new(),
            metrics: MetricOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg: ExperimentConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut doc: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                // A partial train section fills in from the desk settings, not the struct defaults.
                if let Some(partial) = doc.get_mut("train") {
                    let mut merged = serde_json::to_value(TrainConfig::desk())?;
                    if let (Some(base), Some(over)) = (merged.as_object_mut(), partial.as_object()) {
                        base.extend(over.clone());
                    }
                    *partial = merged;
                }
                serde_json::from_value(doc).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if seed.is_some() {
            cfg.rng_seed = seed;
        }
        if let Some(s) = cfg.rng_seed {
            cfg.benchmark.seed = s;
            cfg.train.rng_seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.scenes.iter().enumerate() {
            s.validate().with_context(|| format!("scenes[{i}]"))?;
        }
        if self.scenes.is_empty() {
            self.benchmark.validate().context("benchmark")?;
        }
        self.tracker.validate().context("tracker")?;
        self.train.validate().context("train")?;
        if !(0.0..1.0).contains(&self.metrics.fail_threshold) {
            anyhow::bail!("metrics.fail_threshold must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn scene_list(&self) -> Result<Vec<SceneConfig>> {
        if self.scenes.is_empty() {
            Ok(self.benchmark.scenes()?)
        } else {
            Ok(self.scenes.clone())
        }
    }

    /// Config file entry, then the environment, then the current directory.
    pub fn workspace(&self) -> PathBuf {
        self.workspace
            .clone()
            .or_else(|| std::env::var_os(WORKSPACE_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
