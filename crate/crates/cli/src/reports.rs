use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use updatenet_core::eval::{change_rate, default_gamma_grid, gamma_sweep, ope_metrics, vot_metrics, ChannelDynamics, TemplateSource};
use updatenet_core::synth::io::{read_annotations, ANNOTATION_FILE};
use updatenet_core::tracker::{parse_trajectory, SiameseTracker, VotResult};
use updatenet_core::TemplateTensor;

use crate::commands::{load_sequences, pretty, template_file, usage, Protocol, TrackSummary, TRACK_SUMMARY};
use crate::config::ExperimentConfig;
use crate::manifest::Outputs;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    #[serde(rename = "A")]
    pub accuracy: Option<f64>,
    #[serde(rename = "R")]
    pub robustness: Option<f64>,
    pub eao_lite: Option<f64>,
    pub success_auc: Option<f64>,
    pub precision: Option<f64>,
    pub norm_precision: Option<f64>,
    pub next_frame_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub protocol: Protocol,
    pub rows: Vec<ReportRow>,
}

pub const REPORT_HEADER: &str = "strategy,A,R,eao_lite,success_auc,precision,norm_precision,next_frame_error";

/// Quotes a CSV field when it holds a comma or a quote.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Report {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                csv_field(&r.strategy),
                opt(r.accuracy),
                opt(r.robustness),
                opt(r.eao_lite),
                opt(r.success_auc),
                opt(r.precision),
                opt(r.norm_precision),
                r.next_frame_error
            ));
        }
        out
    }
}

/// Track directories under `inputs`: each input is a run or a parent of runs.
fn run_dirs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut runs = Vec::new();
    for input in inputs {
        if input.join(TRACK_SUMMARY).is_file() {
            runs.push(input.clone());
            continue;
        }
        let mut children: Vec<PathBuf> = fs::read_dir(input)
            .with_context(|| format!("reading {}", input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(TRACK_SUMMARY).is_file())
            .collect();
        children.sort();
        if children.is_empty() {
            bail!("no trajectories under {}", input.display());
        }
        runs.extend(children);
    }
    Ok(runs)
}

fn read_summary(run: &Path) -> Result<TrackSummary> {
    let text = fs::read_to_string(run.join(TRACK_SUMMARY)).with_context(|| format!("reading {}", run.join(TRACK_SUMMARY).display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn read_rows(run: &Path, seq: &str) -> Result<Vec<updatenet_core::tracker::TrajectoryRow>> {
    let p = run.join(format!("trajectories/{seq}.csv"));
    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    Ok(parse_trajectory(&text)?)
}

fn evaluate_run(run: &Path, protocol: Protocol, data_override: Option<&Path>) -> Result<ReportRow> {
    let summary = read_summary(run)?;
    if summary.protocol != protocol {
        return usage(format!(
            "{} was tracked with the {:?} protocol, not {:?}",
            run.display(),
            summary.protocol,
            protocol
        ));
    }
    let mut row = ReportRow {
        strategy: summary.strategy.clone(),
        accuracy: None,
        robustness: None,
        eao_lite: None,
        success_auc: None,
        precision: None,
        norm_precision: None,
        next_frame_error: summary.next_frame_error,
    };
    match protocol {
        Protocol::Vot => {
            let results = summary
                .sequences
                .iter()
                .map(|s| Ok(VotResult::from_rows(&read_rows(run, s)?)?))
                .collect::<Result<Vec<_>>>()?;
            let m = vot_metrics(&results)?;
            row.accuracy = Some(m.accuracy);
            row.robustness = Some(m.robustness);
            row.eao_lite = Some(m.eao_lite);
        }
        Protocol::Ope => {
            let data = data_override.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&summary.data));
            let (mut predicted, mut gt) = (Vec::new(), Vec::new());
            for s in &summary.sequences {
                let rows = read_rows(run, s)?;
                let boxes = read_annotations(data.join(s).join(ANNOTATION_FILE)).with_context(|| format!("ground truth of {s}"))?;
                if boxes.len() != rows.len() {
                    bail!("{s}: {} trajectory rows for {} annotated frames", rows.len(), boxes.len());
                }
                for r in &rows {
                    predicted.push(r.bbox.with_context(|| format!("{s}: one-pass trajectory has a skipped frame"))?);
                }
                gt.extend(boxes);
            }
            let m = ope_metrics(&predicted, &gt)?;
            row.success_auc = Some(m.success_auc);
            row.precision = Some(m.precision_at_20px);
            row.norm_precision = Some(m.normalized_precision_auc);
        }
    }
    Ok(row)
}

/// Rows sorted best first by eao_lite (vot) or success (ope); ties by name.
pub fn eval(cfg: &ExperimentConfig, protocol: Protocol, inputs: &[PathBuf], data_override: Option<&Path>, out: &Path) -> Result<Report> {
    let runs = run_dirs(inputs)?;
    let mut rows = runs.iter().map(|r| evaluate_run(r, protocol, data_override)).collect::<Result<Vec<_>>>()?;
    let key = |r: &ReportRow| match protocol {
        Protocol::Vot => r.eao_lite.unwrap_or(f64::NEG_INFINITY),
        Protocol::Ope => r.success_auc.unwrap_or(f64::NEG_INFINITY),
    };
    rows.sort_by(|a, b| key(b).total_cmp(&key(a)).then_with(|| a.strategy.cmp(&b.strategy)));
    let report = Report { protocol, rows };
    let mut outs = file_outputs(out)?;
    outs.write(file_name(out)?, pretty(&report)?.as_bytes())?;
    outs.write(file_name(&out.with_extension("csv"))?, report.to_csv().as_bytes())?;
    outs.commit(&manifest_name(out)?, "eval", &cfg.sha256())?;
    Ok(report)
}

fn file_outputs(out: &Path) -> Result<Outputs> {
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    Outputs::new(parent)
}

fn file_name(p: &Path) -> Result<String> {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).with_context(|| format!("{} is not a file path", p.display()))
}

fn manifest_name(out: &Path) -> Result<String> {
    let stem = out.file_stem().map(|n| n.to_string_lossy().into_owned()).with_context(|| format!("{} is not a file path", out.display()))?;
    Ok(format!("{stem}.manifest.json"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AnalysisKind {
    ChangeRate,
    Channels,
    GammaSweep,
}

fn load_templates(run: &Path, seq: &str, role: &str) -> Result<Vec<TemplateTensor>> {
    let mut out = Vec::new();
    loop {
        let p = run.join(template_file(seq, role, out.len()));
        if !p.is_file() {
            break;
        }
        out.push(TemplateTensor::load(&p)?);
    }
    Ok(out)
}

fn dumped_summary(run: &Path, kind: &str) -> Result<TrackSummary> {
    if !run.join(TRACK_SUMMARY).is_file() {
        return usage(format!("{kind} needs a track directory made with --dump-templates, got {}", run.display()));
    }
    let s = read_summary(run)?;
    if !s.templates_dumped {
        return usage(format!("{kind} needs templates; rerun track on {} with --dump-templates", run.display()));
    }
    Ok(s)
}

/// Mean over sequences at each frame index, skipping sequences that are too short.
fn mean_series(series: &[Vec<f64>]) -> Vec<f64> {
    let n = series.iter().map(Vec::len).max().unwrap_or(0);
    (0..n)
        .map(|i| {
            let vals: Vec<f64> = series.iter().filter_map(|s| s.get(i).copied()).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect()
}

pub fn analyze(cfg: &ExperimentConfig, kind: AnalysisKind, inputs: &[PathBuf], out: &Path) -> Result<()> {
    if inputs.is_empty() {
        return usage("analyze needs at least one --in");
    }
    let csv = match kind {
        AnalysisKind::ChangeRate => change_rate_csv(inputs)?,
        AnalysisKind::Channels => channels_csv(cfg, inputs)?,
        AnalysisKind::GammaSweep => gamma_sweep_csv(cfg, inputs)?,
    };
    let mut outs = file_outputs(out)?;
    outs.write(file_name(out)?, csv.as_bytes())?;
    outs.commit(&manifest_name(out)?, "analyze", &cfg.sha256())?;
    Ok(())
}

/// δ_i averaged over sequences: ground truth from the first input, then one
/// column per input strategy.
fn change_rate_csv(inputs: &[PathBuf]) -> Result<String> {
    let summaries = inputs.iter().map(|r| dumped_summary(r, "change-rate")).collect::<Result<Vec<_>>>()?;
    let mut columns = Vec::with_capacity(inputs.len() + 1);
    let mut headers = vec!["frame".to_string(), TemplateSource::GroundTruth.as_str().to_string()];
    let gt = summaries[0]
        .sequences
        .iter()
        .map(|s| Ok(change_rate(&load_templates(&inputs[0], s, "gt")?, TemplateSource::GroundTruth)?.values))
        .collect::<Result<Vec<_>>>()?;
    columns.push(mean_series(&gt));
    for (run, summary) in inputs.iter().zip(&summaries) {
        let per_seq = summary
            .sequences
            .iter()
            .map(|s| Ok(change_rate(&load_templates(run, s, "accum")?, TemplateSource::Linear)?.values))
            .collect::<Result<Vec<_>>>()?;
        columns.push(mean_series(&per_seq));
        headers.push(csv_field(&summary.strategy));
    }
    let rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = headers.join(",");
    out.push('\n');
    for i in 0..rows {
        out.push_str(&(i + 1).to_string());
        for c in &columns {
            out.push(',');
            if let Some(v) = c.get(i) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Channel dynamics of ground-truth templates, averaged over sequences, from
/// template dumps or straight from a data directory.
fn channels_csv(cfg: &ExperimentConfig, inputs: &[PathBuf]) -> Result<String> {
    let mut per_seq: Vec<Vec<f64>> = Vec::new();
    for input in inputs {
        if input.join(TRACK_SUMMARY).is_file() {
            let summary = dumped_summary(input, "channels")?;
            for s in &summary.sequences {
                per_seq.push(updatenet_core::eval::channel_dynamics(&load_templates(input, s, "gt")?)?.values);
            }
        } else {
            let seqs = load_sequences(input).or_else(|e| usage(format!("channels needs template dumps or sequences: {e:#}")))?;
            let tracker = SiameseTracker::new(cfg.tracker.clone())?;
            for (_, seq) in &seqs {
                per_seq.push(updatenet_core::eval::channel_dynamics(&tracker.gt_templates(seq)?)?.values);
            }
        }
    }
    let c = per_seq[0].len();
    if per_seq.iter().any(|v| v.len() != c) {
        bail!("inputs disagree on the channel count");
    }
    let mean: Vec<f64> = (0..c).map(|j| per_seq.iter().map(|v| v[j]).sum::<f64>() / per_seq.len() as f64).collect();
    let dynamics = ChannelDynamics::from_values(mean);
    let mut out = String::from("rank,channel,dynamics,top4\n");
    for (rank, &ch) in dynamics.ranking.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", rank + 1, ch, dynamics.values[ch], u8::from(rank < 4)));
    }
    Ok(out)
}

fn gamma_sweep_csv(cfg: &ExperimentConfig, inputs: &[PathBuf]) -> Result<String> {
    let mut seqs = Vec::new();
    for input in inputs {
        let loaded = load_sequences(input).or_else(|e| usage(format!("gamma-sweep needs sequence directories: {e:#}")))?;
        seqs.extend(loaded.into_iter().map(|(_, s)| s));
    }
    let tracker = SiameseTracker::new(cfg.tracker.clone())?;
    let sweep = gamma_sweep(&seqs, &tracker, &default_gamma_grid(), cfg.metrics.fail_threshold)?;
    let mut out = String::from("gamma,eao_lite,best\n");
    for (g, e) in &sweep.curve {
        out.push_str(&format!("{g},{e},{}\n", u8::from(*g == sweep.best_gamma)));
    }
    Ok(out)
}
