//! Tracking metrics and template diagnostics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{input_err, validation_err, Error, Result};
use crate::strategy::{LinearUpdateConfig, UpdateRule, UpdateStrategy};
use crate::tensor::{l2_distance, mean_abs_diff, TemplateTensor};
use crate::tracker::{vot_run, AnnotatedSequence, Localizer, SiameseTracker, VotResult};

/// Number of IoU thresholds on the success curve: 0, 0.01, ..., 1.
pub const SUCCESS_THRESHOLDS: usize = 101;
/// Normalized-precision thresholds: 0, 0.005, ..., 0.5.
pub const NORM_PRECISION_THRESHOLDS: usize = 101;
pub const NORM_PRECISION_STEP: f64 = 0.005;
pub const PRECISION_RADIUS_PX: f32 = 20.0;

/// Intersection over union. Zero when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> Result<f32> {
    for bx in [a, b] {
        if !(bx.w >= 0.0 && bx.h >= 0.0) || ![bx.x, bx.y, bx.w, bx.h].iter().all(|v| v.is_finite()) {
            return validation_err(format!("box {bx:?} has negative or non-finite extent"));
        }
    }
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw as f64 * ih as f64;
    let union = a.w as f64 * a.h as f64 + b.w as f64 * b.h as f64 - inter;
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0) as f32)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpeMetrics {
    pub success_auc: f64,
    pub precision_at_20px: f64,
    pub normalized_precision_auc: f64,
}

/// Mean over the 101-point IoU grid of the fraction of frames with IoU > t.
pub fn success_auc(overlaps: &[f32]) -> f64 {
    if overlaps.is_empty() {
        return 0.0;
    }
    let n = overlaps.len() as f64;
    let total: f64 = (0..SUCCESS_THRESHOLDS)
        .map(|k| {
            let t = k as f64 / (SUCCESS_THRESHOLDS - 1) as f64;
            overlaps.iter().filter(|&&o| o as f64 > t).count() as f64 / n
        })
        .sum();
    total / SUCCESS_THRESHOLDS as f64
}

/// One-pass metrics of predicted boxes against ground truth, pooled over frames.
pub fn ope_metrics(predicted: &[BBox], gt: &[BBox]) -> Result<OpeMetrics> {
    if predicted.len() != gt.len() {
        return input_err(format!("{} predictions for {} ground-truth boxes", predicted.len(), gt.len()));
    }
    if predicted.is_empty() {
        return input_err("no frames to evaluate");
    }
    let overlaps = predicted.iter().zip(gt).map(|(p, g)| iou(p, g)).collect::<Result<Vec<f32>>>()?;
    let n = gt.len() as f64;
    let errors: Vec<f32> = predicted.iter().zip(gt).map(|(p, g)| p.center_distance(g)).collect();
    let precision = errors.iter().filter(|&&e| e <= PRECISION_RADIUS_PX).count() as f64 / n;
    let normalized: Vec<f64> = errors
        .iter()
        .zip(gt)
        .map(|(&e, g)| {
            let d = g.diagonal() as f64;
            if d > 0.0 {
                e as f64 / d
            } else if e == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let norm_auc = (0..NORM_PRECISION_THRESHOLDS)
        .map(|k| {
            let t = k as f64 * NORM_PRECISION_STEP;
            normalized.iter().filter(|&&e| e <= t + 1e-12).count() as f64 / n
        })
        .sum::<f64>()
        / NORM_PRECISION_THRESHOLDS as f64;
    Ok(OpeMetrics { success_auc: success_auc(&overlaps), precision_at_20px: precision, normalized_precision_auc: norm_auc })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VotMetrics {
    pub accuracy: f64,
    /// Failures per 100 frames.
    pub robustness: f64,
    pub eao_lite: f64,
    pub failures: usize,
    pub frames: usize,
    pub sequences: usize,
}

/// Accuracy divided by one plus the mean failure count per sequence.
pub fn eao_lite(accuracy: f64, failures_per_sequence: f64) -> f64 {
    accuracy / (1.0 + failures_per_sequence)
}

pub fn vot_metrics(results: &[VotResult]) -> Result<VotMetrics> {
    if results.is_empty() {
        return input_err("no reset-protocol results to summarize");
    }
    let counted: Vec<f64> = results.iter().flat_map(|r| r.overlaps.iter().flatten().map(|&o| o as f64)).collect();
    let frames: usize = results.iter().map(VotResult::len).sum();
    let failures: usize = results.iter().map(VotResult::failures).sum();
    let accuracy = if counted.is_empty() { 0.0 } else { counted.iter().sum::<f64>() / counted.len() as f64 };
    let robustness = if frames == 0 { 0.0 } else { 100.0 * failures as f64 / frames as f64 };
    Ok(VotMetrics {
        accuracy,
        robustness,
        eao_lite: eao_lite(accuracy, failures as f64 / results.len() as f64),
        failures,
        frames,
        sequences: results.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateSource {
    GroundTruth,
    Linear,
    Updatenet,
}

impl TemplateSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateSource::GroundTruth => "ground_truth",
            TemplateSource::Linear => "linear",
            TemplateSource::Updatenet => "updatenet",
        }
    }
}

impl fmt::Display for TemplateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ground_truth" | "gt" => Ok(TemplateSource::GroundTruth),
            "linear" => Ok(TemplateSource::Linear),
            "updatenet" => Ok(TemplateSource::Updatenet),
            other => Err(Error::Input(format!("unknown template source '{other}'"))),
        }
    }
}

/// δ_i for i = 1..N-1; `values[0]` is δ_1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeRateSeries {
    pub source: TemplateSource,
    pub values: Vec<f64>,
}

impl ChangeRateSeries {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }
}

pub fn change_rate(templates: &[TemplateTensor], source: TemplateSource) -> Result<ChangeRateSeries> {
    if templates.len() < 2 {
        return input_err("change rate needs at least two templates");
    }
    let values = templates.windows(2).map(|w| mean_abs_diff(&w[1], &w[0])).collect::<Result<_>>()?;
    Ok(ChangeRateSeries { source, values })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelDynamics {
    pub values: Vec<f64>,
    /// Channel indices by descending value; ties go to the lower index.
    pub ranking: Vec<usize>,
}

impl ChannelDynamics {
    /// Ranks precomputed per-channel values, e.g. averages over sequences.
    pub fn from_values(values: Vec<f64>) -> Self {
        let mut ranking: Vec<usize> = (0..values.len()).collect();
        ranking.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        Self { values, ranking }
    }

    pub fn top(&self, k: usize) -> &[usize] {
        &self.ranking[..k.min(self.ranking.len())]
    }
}

pub fn channel_dynamics(templates: &[TemplateTensor]) -> Result<ChannelDynamics> {
    if templates.len() < 2 {
        return input_err("channel dynamics need at least two templates");
    }
    let (h, w, c) = templates[0].shape();
    let mut sums = vec![0f64; c];
    for pair in templates.windows(2) {
        if pair[1].shape() != (h, w, c) {
            return crate::error::shape_err(format!("template shape {:?} differs from {:?}", pair[1].shape(), (h, w, c)));
        }
        for (k, (a, b)) in pair[1].data().iter().zip(pair[0].data()).enumerate() {
            sums[k % c] += (*a as f64 - *b as f64).abs();
        }
    }
    let norm = ((templates.len() - 1) * h * w) as f64;
    Ok(ChannelDynamics::from_values(sums.iter().map(|s| s / norm).collect()))
}

/// Pearson correlation; zero when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return input_err("pearson needs two series of equal length >= 2");
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// The 21-point grid 0, 0.01, ..., 0.2.
pub fn default_gamma_grid() -> Vec<f32> {
    (0..=20).map(|k| k as f32 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSweep {
    pub best_gamma: f32,
    /// (γ, eao_lite) in ascending γ.
    pub curve: Vec<(f32, f64)>,
}

impl GammaSweep {
    pub fn best_eao(&self) -> f64 {
        self.curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn gamma_sweep<S: AnnotatedSequence>(
    sequences: &[S],
    tracker: &SiameseTracker,
    grid: &[f32],
    fail_threshold: f32,
) -> Result<GammaSweep> {
    if grid.is_empty() {
        return input_err("gamma grid is empty");
    }
    let mut gammas = grid.to_vec();
    for &g in &gammas {
        LinearUpdateConfig::new(g)?;
    }
    gammas.sort_by(f32::total_cmp);
    gammas.dedup();
    let mut curve = Vec::with_capacity(gammas.len());
    for g in gammas {
        let rule = UpdateStrategy::Linear(LinearUpdateConfig::new(g)?);
        let runs = sequences.iter().map(|s| vot_run(s, &rule, tracker, fail_threshold)).collect::<Result<Vec<_>>>()?;
        curve.push((g, vot_metrics(&runs)?.eao_lite));
    }
    // Strictly greater keeps the smaller γ on ties.
    let mut best = curve[0];
    for &p in &curve[1..] {
        if p.1 > best.1 {
            best = p;
        }
    }
    Ok(GammaSweep { best_gamma: best.0, curve })
}

/// Accumulated templates of one run, frame 0 included.
pub fn accumulated_templates<S: AnnotatedSequence + ?Sized>(
    seq: &S,
    rule: &dyn UpdateRule,
    tracker: &SiameseTracker,
    localizer: Localizer,
) -> Result<Vec<TemplateTensor>> {
    let mut out = Vec::with_capacity(seq.len());
    tracker.run(seq, rule, localizer, |rec| {
        out.push(rec.accum.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Mean of ‖T̃_i − T^GT_{i+1}‖₂ over the updated frames 1 ≤ i ≤ N−2 of all
/// sequences, tracking with predicted locations. `gt_templates[s]` holds the ground-truth
/// templates of sequence `s`.
pub fn next_frame_template_error_with<S: AnnotatedSequence>(
    rule: &dyn UpdateRule,
    sequences: &[S],
    gt_templates: &[Vec<TemplateTensor>],
    tracker: &SiameseTracker,
) -> Result<f64> {
    if sequences.len() != gt_templates.len() {
        return input_err("one ground-truth template list per sequence is required");
    }
    let (mut sum, mut count) = (0f64, 0usize);
    for (seq, gts) in sequences.iter().zip(gt_templates) {
        if gts.len() != seq.len() {
            return input_err("ground-truth template list does not match sequence length");
        }
        tracker.run(seq, rule, Localizer::Predicted, |rec| {
            if rec.index >= 1 && rec.index + 1 < gts.len() {
                sum += l2_distance(rec.accum, &gts[rec.index + 1])?;
                count += 1;
            }
            Ok(())
        })?;
    }
    if count == 0 {
        return input_err("sequences are too short for a next-frame error");
    }
    Ok(sum / count as f64)
}

pub fn next_frame_template_error<S: AnnotatedSequence>(
    rule: &dyn UpdateRule,
    sequences: &[S],
    tracker: &SiameseTracker,
) -> Result<f64> {
    let gts = sequences.iter().map(|s| tracker.gt_templates(s)).collect::<Result<Vec<_>>>()?;
    next_frame_template_error_with(rule, sequences, &gts, tracker)
}
