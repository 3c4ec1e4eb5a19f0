use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use updatenet_core::eval::{channel_dynamics, iou, next_frame_template_error_with};
use updatenet_core::net::UpdateNetParams;
use updatenet_core::strategy::{SkipSource, StrategySpec, UpdateStrategy};
use updatenet_core::synth::io::{encode_pgm, list_sequence_dirs, read_sequence, write_sequence};
use updatenet_core::synth::{render_sequence, SyntheticSequence};
use updatenet_core::tracker::{format_trajectory, vot_run, Localizer, SiameseTracker, TrajectoryRow};
use updatenet_core::train::{collect_stage0, format_loss_history, run_multistage, sequence_id, train_fusion};
use updatenet_core::TemplateTensor;

use crate::config::ExperimentConfig;
use crate::manifest::{Outputs, MANIFEST_FILE};

pub const TRACK_SUMMARY: &str = "track.json";
pub const TRAIN_SUMMARY: &str = "train.json";
pub const LOSS_FILE: &str = "loss_history.csv";
pub const FUSION_FILE: &str = "fusion.json";
/// Side length in PGM pixels of one template cell in channel filmstrips.
const CELL_PX: usize = 4;

/// Bad invocation rather than a failed run; the binary exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ope,
    Vot,
}

/// What `track` leaves next to its trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub strategy: String,
    pub protocol: Protocol,
    pub ground_truth_locations: bool,
    pub skip: Option<SkipSource>,
    pub data: String,
    pub fail_threshold: f32,
    pub sequences: Vec<String>,
    pub next_frame_error: f64,
    pub templates_dumped: bool,
}

pub fn load_sequences(data: &Path) -> Result<Vec<(String, SyntheticSequence)>> {
    let dirs = list_sequence_dirs(data).with_context(|| format!("listing sequences in {}", data.display()))?;
    if dirs.is_empty() {
        bail!("no sequences found in {}", data.display());
    }
    dirs.iter()
        .map(|d| {
            let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let seq = read_sequence(d).with_context(|| format!("reading {}", d.display()))?;
            Ok((name, seq))
        })
        .collect()
}

pub fn gen(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let scenes = cfg.scene_list()?;
    let mut outs = Outputs::new(out)?;
    for (i, scene) in scenes.iter().enumerate() {
        let seq = render_sequence(scene)?;
        let dir = out.join(sequence_id(i));
        outs.ensure_dir(&dir)?;
        for p in write_sequence(&dir, &seq, Some(scene))? {
            outs.track(p);
        }
    }
    outs.commit(MANIFEST_FILE, "gen", &cfg.sha256())?;
    eprintln!("wrote {} sequences to {}", scenes.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct StageSummary {
    stage: usize,
    best_epoch: usize,
    best_mean_mse: f64,
    file: String,
}

#[derive(Serialize, Deserialize)]
pub struct FusionSummary {
    pub strategy: String,
    pub alpha_init: f32,
    pub alpha_accu: f32,
    pub alpha_curr: f32,
    pub best_epoch: usize,
}

pub fn train(cfg: &ExperimentConfig, data: &Path, stages: Option<usize>, out: &Path, fusion: bool) -> Result<()> {
    let mut tc = cfg.train.clone();
    if let Some(k) = stages {
        tc.stage_count = k;
    }
    tc.validate().context("train")?;
    let seqs: Vec<SyntheticSequence> = load_sequences(data)?.into_iter().map(|(_, s)| s).collect();
    let tracker = SiameseTracker::new(cfg.tracker.clone())?;
    let mut outs = Outputs::new(out)?;
    let outcomes = run_multistage(&seqs, &tracker, &tc, |o| {
        eprintln!("stage {}: best epoch {} of {}", o.stage, o.best_epoch, o.history.len());
        Ok(())
    })?;
    let mut history = Vec::new();
    let mut stages_out = Vec::new();
    for o in &outcomes {
        let file = format!("stage{}.unet", o.stage);
        let mut bytes = Vec::new();
        o.best.params.write_to(&mut bytes)?;
        outs.write(&file, &bytes)?;
        history.extend(o.history.iter().cloned());
        stages_out.push(StageSummary { stage: o.stage, best_epoch: o.best_epoch, best_mean_mse: o.history[o.best_epoch].mean_mse, file });
    }
    outs.write(LOSS_FILE, format_loss_history(&history).as_bytes())?;
    if fusion {
        let tuples = collect_stage0(&seqs, &tracker, tc.stage0_gamma)?;
        let f = train_fusion(&tuples.tuples, &tc)?;
        let w = f.best.to_weights()?;
        let summary = FusionSummary {
            strategy: StrategySpec::Fusion(w).to_string(),
            alpha_init: w.alpha_init,
            alpha_accu: w.alpha_accu,
            alpha_curr: w.alpha_curr,
            best_epoch: f.best_epoch,
        };
        outs.write(FUSION_FILE, pretty(&summary)?.as_bytes())?;
    }
    let summary = serde_json::json!({ "skip": tc.skip, "hidden": tc.hidden, "stages": stages_out });
    outs.write(TRAIN_SUMMARY, pretty(&summary)?.as_bytes())?;
    outs.commit(MANIFEST_FILE, "train", &cfg.sha256())?;
    Ok(())
}

pub fn pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_strategy(text: &str) -> Result<StrategySpec> {
    text.parse::<StrategySpec>().or_else(|e| usage(e.to_string()))
}

/// Turns a spec into a runnable strategy; UpdateNet parameters use `skip`.
pub fn build_strategy(spec: &StrategySpec, skip: SkipSource, channels: usize) -> Result<UpdateStrategy> {
    Ok(match spec {
        StrategySpec::None => UpdateStrategy::None,
        StrategySpec::Linear(c) => UpdateStrategy::Linear(*c),
        StrategySpec::Fusion(w) => UpdateStrategy::Fusion(*w),
        StrategySpec::UpdateNet(path) => {
            let params = UpdateNetParams::load(path).with_context(|| format!("loading UpdateNet parameters {path}"))?;
            if params.channels() != channels {
                bail!("parameters in {path} expect {} channels, the tracker produces {channels}", params.channels());
            }
            UpdateStrategy::UpdateNet { params: params.into(), skip }
        }
    })
}

/// File-name-safe form of a strategy spec.
pub fn slug(spec: &str) -> String {
    spec.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

pub struct TrackArgs<'a> {
    pub data: &'a Path,
    pub data_label: String,
    pub strategy: &'a str,
    pub out: &'a Path,
    pub protocol: Protocol,
    pub dump_templates: bool,
    pub gt_locations: bool,
}

pub fn track(cfg: &ExperimentConfig, args: &TrackArgs) -> Result<()> {
    let spec = parse_strategy(args.strategy)?;
    if args.protocol == Protocol::Vot && (args.dump_templates || args.gt_locations) {
        return usage("--dump-templates and --gt-locations need the one-pass (ope) protocol");
    }
    let tracker = SiameseTracker::new(cfg.tracker.clone())?;
    let strategy = build_strategy(&spec, cfg.train.skip, tracker.channels())?;
    let seqs = load_sequences(args.data)?;
    let localizer = if args.gt_locations { Localizer::GroundTruth } else { Localizer::Predicted };
    let thr = cfg.metrics.fail_threshold;
    let mut outs = Outputs::new(args.out)?;
    let mut gts_all = Vec::with_capacity(seqs.len());
    for (name, seq) in &seqs {
        let gts = tracker.gt_templates(seq)?;
        let rows: Vec<TrajectoryRow> = match args.protocol {
            Protocol::Vot => (&vot_run(seq, &strategy, &tracker, thr)?).into(),
            Protocol::Ope => {
                let mut accums: Vec<TemplateTensor> = Vec::new();
                let boxes = tracker.run(seq, &strategy, localizer, |rec| {
                    if args.dump_templates {
                        accums.push(rec.accum.clone());
                    }
                    Ok(())
                })?;
                if args.dump_templates {
                    dump_templates(&mut outs, name, &accums, &gts)?;
                }
                let overlaps = boxes.iter().zip(&seq.gt_boxes).map(|(b, g)| iou(b, g)).collect::<updatenet_core::Result<Vec<f32>>>()?;
                let result = updatenet_core::tracker::TrackResult { boxes, overlaps, change_rates: vec![], frame_seconds: vec![] };
                (&result).into()
            }
        };
        outs.write(format!("trajectories/{name}.csv"), format_trajectory(&rows).as_bytes())?;
        gts_all.push(gts);
    }
    let plain: Vec<SyntheticSequence> = seqs.iter().map(|(_, s)| s.clone()).collect();
    let nfe = next_frame_template_error_with(&strategy, &plain, &gts_all, &tracker)?;
    let summary = TrackSummary {
        strategy: spec.to_string(),
        protocol: args.protocol,
        ground_truth_locations: args.gt_locations,
        skip: matches!(spec, StrategySpec::UpdateNet(_)).then_some(cfg.train.skip),
        data: args.data_label.clone(),
        fail_threshold: thr,
        sequences: seqs.iter().map(|(n, _)| n.clone()).collect(),
        next_frame_error: nfe,
        templates_dumped: args.dump_templates,
    };
    outs.write(TRACK_SUMMARY, pretty(&summary)?.as_bytes())?;
    outs.commit(MANIFEST_FILE, "track", &cfg.sha256())?;
    eprintln!("{}: next-frame template error {nfe:.4}", summary.strategy);
    Ok(())
}

pub fn template_file(seq: &str, role: &str, frame: usize) -> PathBuf {
    PathBuf::from(format!("templates/{seq}/{role}_{frame:05}.ttns"))
}

/// Per-frame tensors plus, for the four most dynamic ground-truth channels, a
/// filmstrip PGM per role with one tile per frame.
fn dump_templates(outs: &mut Outputs, seq: &str, accums: &[TemplateTensor], gts: &[TemplateTensor]) -> Result<()> {
    for (role, list) in [("accum", accums), ("gt", gts)] {
        for (i, t) in list.iter().enumerate() {
            let mut bytes = Vec::new();
            t.write_to(&mut bytes)?;
            outs.write(template_file(seq, role, i), &bytes)?;
        }
    }
    let dynamics = channel_dynamics(gts)?;
    for &ch in dynamics.top(4) {
        for (role, list) in [("accum", accums), ("gt", gts)] {
            let (img_w, img_h, pixels) = filmstrip(list, ch)?;
            outs.write(format!("templates/{seq}/{role}_channel{ch:02}.pgm"), &encode_pgm(img_w, img_h, &pixels))?;
        }
    }
    Ok(())
}

fn filmstrip(list: &[TemplateTensor], ch: usize) -> Result<(usize, usize, Vec<f32>)> {
    let (h, w, _) = list[0].shape();
    let planes: Vec<Vec<f32>> = list.iter().map(|t| t.channel_plane(ch)).collect::<updatenet_core::Result<_>>()?;
    let peak = planes.iter().flatten().fold(0f32, |m, v| m.max(v.abs())).max(1e-12);
    let (tile_w, tile_h) = (w * CELL_PX, h * CELL_PX);
    let img_w = tile_w * planes.len();
    let mut pixels = vec![0f32; img_w * tile_h];
    for (f, plane) in planes.iter().enumerate() {
        for y in 0..tile_h {
            for x in 0..tile_w {
                pixels[y * img_w + f * tile_w + x] = plane[(y / CELL_PX) * w + x / CELL_PX] / peak;
            }
        }
    }
    Ok((img_w, tile_h, pixels))
}
