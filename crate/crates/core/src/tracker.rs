//! Siamese tracking loop: localize with the accumulated template, extract the
//! current template at the prediction, then update. Includes the one-pass and
//! the reset-based (VOT-style) evaluation protocols.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{input_err, validation_err, Error, Result};
use crate::eval::iou;
use crate::strategy::UpdateRule;
use crate::synth::{crop_patch, FeatureExtractor, FeatureExtractorConfig, Image, SyntheticSequence};
use crate::tensor::{argmax_response, cross_correlate, mean_abs_diff, ResponseMap, TemplateTensor};

/// Frames skipped after a failure before re-initialization.
pub const REINIT_DELAY: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub feature: FeatureExtractorConfig,
    pub exemplar_context: f32,
    pub search_context: f32,
    pub exemplar_px: usize,
    pub search_px: usize,
    pub cosine_window_weight: f32,
    pub scale_steps: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            feature: FeatureExtractorConfig::default(),
            exemplar_context: 1.0,
            search_context: 2.0,
            exemplar_px: 24,
            search_px: 48,
            cosine_window_weight: 0.3,
            scale_steps: 1,
        }
    }
}

impl TrackerConfig {
    /// Pixel side of one feature cell in crop coordinates.
    pub fn cell_px(&self) -> usize {
        self.exemplar_px / self.feature.out_spatial.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.feature.validate()?;
        if !(self.exemplar_context >= 1.0) || !(self.search_context > self.exemplar_context) {
            return validation_err("tracker needs 1 <= exemplar_context < search_context");
        }
        if !(0.0..=1.0).contains(&self.cosine_window_weight) {
            return validation_err("cosine_window_weight must lie in [0, 1]");
        }
        if self.scale_steps != 1 {
            return validation_err("only single-scale search (scale_steps = 1) is supported");
        }
        if self.exemplar_px == 0 || self.exemplar_px % self.feature.out_spatial != 0 {
            return validation_err("exemplar_px must be a positive multiple of feature.out_spatial");
        }
        let cell = self.cell_px();
        if self.search_px % cell != 0 || self.search_px <= self.exemplar_px {
            return validation_err("search_px must be a multiple of the cell size and larger than exemplar_px");
        }
        let ratio_px = self.search_px as f32 / self.exemplar_px as f32;
        let ratio_ctx = self.search_context / self.exemplar_context;
        if (ratio_px - ratio_ctx).abs() > 1e-4 * ratio_ctx {
            return validation_err("search_px / exemplar_px must equal search_context / exemplar_context");
        }
        Ok(())
    }
}

/// A sequence of frames with ground-truth boxes.
pub trait AnnotatedSequence {
    fn len(&self) -> usize;
    fn frame(&self, index: usize) -> &Image;
    fn gt_box(&self, index: usize) -> BBox;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl AnnotatedSequence for SyntheticSequence {
    fn len(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, index: usize) -> &Image {
        &self.frames[index]
    }

    fn gt_box(&self, index: usize) -> BBox {
        self.gt_boxes[index]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerState {
    pub t0_gt: TemplateTensor,
    pub accum: TemplateTensor,
    pub last_box: BBox,
    pub frame_index: usize,
}

/// Result of correlating the accumulated template with a search region.
#[derive(Clone, Debug)]
pub struct Localization {
    /// Offset of the target centre from the search centre, in crop pixels.
    pub offset_px: (f32, f32),
    pub response: ResponseMap,
}

/// What the tracker produced at one frame.
pub struct FrameRecord<'a> {
    pub index: usize,
    pub predicted: BBox,
    pub prev_accum: &'a TemplateTensor,
    pub current: &'a TemplateTensor,
    pub accum: &'a TemplateTensor,
}

/// Where the current-frame template is extracted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Localizer {
    /// Use the tracker's own predictions.
    Predicted,
    /// Follow the ground-truth boxes (template analysis only).
    GroundTruth,
}

/// Siamese tracker with a cached filter bank and response window.
#[derive(Clone, Debug)]
pub struct SiameseTracker {
    config: TrackerConfig,
    extractor: FeatureExtractor,
    window: Vec<f32>,
    response_side: usize,
}

fn hann(n: usize) -> Vec<f32> {
    // Length n + 2 with the zero endpoints dropped.
    (1..=n)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f32::consts::PI * k as f32 / (n + 1) as f32).cos())
        .collect()
}

impl SiameseTracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        let extractor = FeatureExtractor::new(config.feature.clone())?;
        let response_side = config.search_px / config.cell_px() - config.feature.out_spatial + 1;
        let h = hann(response_side);
        let window = h.iter().flat_map(|a| h.iter().map(move |b| a * b)).collect();
        Ok(Self { config, extractor, window, response_side })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn channels(&self) -> usize {
        self.extractor.channels()
    }

    pub fn exemplar_features(&self, frame: &Image, bx: &BBox) -> Result<TemplateTensor> {
        let patch = crop_patch(frame, bx, self.config.exemplar_context, self.config.exemplar_px)?;
        self.extractor.extract(&patch)
    }

    pub fn search_features(&self, frame: &Image, bx: &BBox) -> Result<TemplateTensor> {
        let patch = crop_patch(frame, bx, self.config.search_context, self.config.search_px)?;
        self.extractor.extract_cells(&patch, self.config.cell_px())
    }

    /// Ground-truth templates of every frame.
    pub fn gt_templates<S: AnnotatedSequence + ?Sized>(&self, seq: &S) -> Result<Vec<TemplateTensor>> {
        (0..seq.len()).map(|i| self.exemplar_features(seq.frame(i), &seq.gt_box(i))).collect()
    }

    pub fn init_state(&self, frame: &Image, gt_box: BBox) -> Result<TrackerState> {
        let t0 = self.exemplar_features(frame, &gt_box)?;
        Ok(TrackerState { accum: t0.clone(), t0_gt: t0, last_box: gt_box, frame_index: 0 })
    }

    /// Windowed correlation peak as an offset from the search centre.
    pub fn locate(&self, accum: &TemplateTensor, search: &TemplateTensor) -> Result<Localization> {
        let raw = cross_correlate(accum, search)?;
        let w = self.config.cosine_window_weight;
        let response = if w > 0.0 && raw.height() == self.response_side && raw.width() == self.response_side {
            let side = self.response_side;
            raw.map_indexed(|r, c, v| (1.0 - w) * v + w * self.window[r * side + c] * v)?
        } else {
            raw
        };
        let peak = argmax_response(&response)?;
        let cell = self.config.cell_px() as f32;
        let cy = (response.height() as f32 - 1.0) / 2.0;
        let cx = (response.width() as f32 - 1.0) / 2.0;
        Ok(Localization { offset_px: ((peak.col as f32 - cx) * cell, (peak.row as f32 - cy) * cell), response })
    }

    /// Predicts the box in `frame` from the previous state, without updating.
    pub fn predict(&self, state: &TrackerState, frame: &Image) -> Result<(BBox, ResponseMap)> {
        let search = self.search_features(frame, &state.last_box)?;
        let loc = self.locate(&state.accum, &search)?;
        let scale = self.config.search_context * state.last_box.w.max(state.last_box.h) / self.config.search_px as f32;
        let moved = state.last_box.translated(loc.offset_px.0 * scale, loc.offset_px.1 * scale);
        // Keep the centre inside the frame so the next crops stay valid.
        let (cx, cy) = moved.center();
        let (fw, fh) = (frame.width() as f32, frame.height() as f32);
        let predicted = BBox::from_center(cx.clamp(0.0, fw), cy.clamp(0.0, fh), moved.w, moved.h);
        Ok((predicted, loc.response))
    }

    /// Locate, extract the current template at the prediction, update.
    pub fn step(&self, state: &TrackerState, frame: &Image, rule: &dyn UpdateRule) -> Result<(TrackerState, BBox)> {
        let (predicted, _) = self.predict(state, frame)?;
        let next = self.advance(state, frame, predicted, rule)?.0;
        Ok((next, predicted))
    }

    fn advance(&self, state: &TrackerState, frame: &Image, located: BBox, rule: &dyn UpdateRule) -> Result<(TrackerState, TemplateTensor)> {
        let current = self.exemplar_features(frame, &located)?;
        let index = state.frame_index + 1;
        let accum = rule.update(index, &state.t0_gt, &state.accum, &current)?;
        let next = TrackerState { t0_gt: state.t0_gt.clone(), accum, last_box: located, frame_index: index };
        Ok((next, current))
    }

    /// Runs the tracker over a whole sequence without resets, reporting every
    /// frame to `on_frame`. Ground truth is read only for frame 0, unless the
    /// localizer follows the ground truth.
    pub fn run<S, F>(&self, seq: &S, rule: &dyn UpdateRule, localizer: Localizer, mut on_frame: F) -> Result<Vec<BBox>>
    where
        S: AnnotatedSequence + ?Sized,
        F: FnMut(&FrameRecord<'_>) -> Result<()>,
    {
        if seq.is_empty() {
            return input_err("sequence has no frames");
        }
        let mut state = self.init_state(seq.frame(0), seq.gt_box(0))?;
        on_frame(&FrameRecord {
            index: 0,
            predicted: state.last_box,
            prev_accum: &state.t0_gt,
            current: &state.t0_gt,
            accum: &state.accum,
        })?;
        let mut boxes = vec![state.last_box];
        for i in 1..seq.len() {
            let frame = seq.frame(i);
            let located = match localizer {
                Localizer::Predicted => self.predict(&state, frame)?.0,
                Localizer::GroundTruth => seq.gt_box(i),
            };
            let (next, current) = self.advance(&state, frame, located, rule)?;
            on_frame(&FrameRecord { index: i, predicted: located, prev_accum: &state.accum, current: &current, accum: &next.accum })?;
            boxes.push(located);
            state = next;
        }
        Ok(boxes)
    }

    pub fn session<'a>(&'a self, rule: &'a dyn UpdateRule) -> TrackingSession<'a> {
        TrackingSession { tracker: self, rule, state: None }
    }
}

/// Per-frame outputs of a one-pass run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackResult {
    pub boxes: Vec<BBox>,
    pub overlaps: Vec<f32>,
    /// Change rate of the accumulated template; zero at frame 0.
    pub change_rates: Vec<f64>,
    pub frame_seconds: Vec<f64>,
}

impl TrackResult {
    pub fn mean_overlap(&self) -> f64 {
        self.overlaps.iter().map(|&v| v as f64).sum::<f64>() / self.overlaps.len().max(1) as f64
    }
}

/// One-pass evaluation: initialize on frame 0, never reset.
pub fn track_sequence<S: AnnotatedSequence + ?Sized>(seq: &S, rule: &dyn UpdateRule, tracker: &SiameseTracker) -> Result<TrackResult> {
    let mut change_rates = Vec::with_capacity(seq.len());
    let mut frame_seconds = Vec::with_capacity(seq.len());
    let mut clock = Instant::now();
    let boxes = tracker.run(seq, rule, Localizer::Predicted, |rec| {
        change_rates.push(if rec.index == 0 { 0.0 } else { mean_abs_diff(rec.accum, rec.prev_accum)? });
        frame_seconds.push(clock.elapsed().as_secs_f64());
        clock = Instant::now();
        Ok(())
    })?;
    let overlaps = boxes.iter().enumerate().map(|(i, b)| iou(b, &seq.gt_box(i))).collect::<Result<Vec<f32>>>()?;
    Ok(TrackResult { boxes, overlaps, change_rates, frame_seconds })
}

/// A tracker that can be (re-)initialized and queried frame by frame.
pub trait OnlineTracker {
    fn initialize(&mut self, frame: &Image, gt_box: BBox) -> Result<()>;
    fn track(&mut self, frame: &Image) -> Result<BBox>;
}

pub struct TrackingSession<'a> {
    tracker: &'a SiameseTracker,
    rule: &'a dyn UpdateRule,
    state: Option<TrackerState>,
}

impl OnlineTracker for TrackingSession<'_> {
    fn initialize(&mut self, frame: &Image, gt_box: BBox) -> Result<()> {
        self.state = Some(self.tracker.init_state(frame, gt_box)?);
        Ok(())
    }

    fn track(&mut self, frame: &Image) -> Result<BBox> {
        let state = self.state.as_ref().ok_or_else(|| Error::Input("tracker used before initialization".into()))?;
        let (next, predicted) = self.tracker.step(state, frame, self.rule)?;
        self.state = Some(next);
        Ok(predicted)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameEvent {
    Ok,
    Fail,
    Skip,
    Reinit,
}

impl FrameEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameEvent::Ok => "ok",
            FrameEvent::Fail => "fail",
            FrameEvent::Skip => "skip",
            FrameEvent::Reinit => "reinit",
        }
    }
}

impl fmt::Display for FrameEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameEvent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(FrameEvent::Ok),
            "fail" => Ok(FrameEvent::Fail),
            "skip" => Ok(FrameEvent::Skip),
            "reinit" => Ok(FrameEvent::Reinit),
            other => Err(Error::Format(format!("unknown frame event '{other}'"))),
        }
    }
}

/// Outcome of a reset-based run. Skipped frames carry no box and no overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct VotResult {
    pub boxes: Vec<Option<BBox>>,
    pub overlaps: Vec<Option<f32>>,
    pub events: Vec<FrameEvent>,
    pub failure_frames: Vec<usize>,
    pub reinit_frames: Vec<usize>,
}

impl VotResult {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn failures(&self) -> usize {
        self.failure_frames.len()
    }

    /// Rebuilds a run from its trajectory; rows must be in frame order.
    pub fn from_rows(rows: &[TrajectoryRow]) -> Result<Self> {
        let mut out = VotResult { boxes: vec![], overlaps: vec![], events: vec![], failure_frames: vec![], reinit_frames: vec![] };
        for (i, r) in rows.iter().enumerate() {
            if r.frame != i {
                return Err(Error::Format(format!("trajectory row {i} is labelled frame {}", r.frame)));
            }
            if (r.event == FrameEvent::Skip) != r.bbox.is_none() {
                return Err(Error::Format(format!("frame {i}: only skipped frames may lack a box")));
            }
            match r.event {
                FrameEvent::Fail => out.failure_frames.push(i),
                FrameEvent::Reinit => out.reinit_frames.push(i),
                _ => {}
            }
            out.boxes.push(r.bbox);
            out.overlaps.push(r.overlap);
            out.events.push(r.event);
        }
        Ok(out)
    }
}

/// Reset protocol: a frame whose overlap is at or below `fail_threshold` is a
/// failure; the next four frames are skipped and the tracker is re-initialized
/// from ground truth [`REINIT_DELAY`] frames after the failure.
pub fn vot_protocol<S, T>(seq: &S, tracker: &mut T, fail_threshold: f32) -> Result<VotResult>
where
    S: AnnotatedSequence + ?Sized,
    T: OnlineTracker + ?Sized,
{
    if !(0.0..1.0).contains(&fail_threshold) {
        return validation_err(format!("fail_threshold {fail_threshold} outside [0, 1)"));
    }
    let n = seq.len();
    if n == 0 {
        return input_err("sequence has no frames");
    }
    let mut result = VotResult {
        boxes: Vec::with_capacity(n),
        overlaps: Vec::with_capacity(n),
        events: Vec::with_capacity(n),
        failure_frames: Vec::new(),
        reinit_frames: Vec::new(),
    };
    let init = |t: &mut T, i: usize, result: &mut VotResult, event: FrameEvent| -> Result<()> {
        let gt = seq.gt_box(i);
        t.initialize(seq.frame(i), gt)?;
        result.boxes.push(Some(gt));
        result.overlaps.push(Some(iou(&gt, &gt)?));
        result.events.push(event);
        Ok(())
    };
    init(tracker, 0, &mut result, FrameEvent::Ok)?;
    let mut i = 1;
    while i < n {
        let predicted = tracker.track(seq.frame(i))?;
        let overlap = iou(&predicted, &seq.gt_box(i))?;
        result.boxes.push(Some(predicted));
        result.overlaps.push(Some(overlap));
        if overlap > fail_threshold {
            result.events.push(FrameEvent::Ok);
            i += 1;
            continue;
        }
        result.events.push(FrameEvent::Fail);
        result.failure_frames.push(i);
        let reinit = i + REINIT_DELAY;
        for _ in i + 1..reinit.min(n) {
            result.boxes.push(None);
            result.overlaps.push(None);
            result.events.push(FrameEvent::Skip);
        }
        if reinit < n {
            init(tracker, reinit, &mut result, FrameEvent::Reinit)?;
            result.reinit_frames.push(reinit);
        }
        i = reinit + 1;
    }
    Ok(result)
}

/// Reset-protocol run of the Siamese tracker with `rule`.
pub fn vot_run<S: AnnotatedSequence + ?Sized>(seq: &S, rule: &dyn UpdateRule, tracker: &SiameseTracker, fail_threshold: f32) -> Result<VotResult> {
    let mut session = tracker.session(rule);
    vot_protocol(seq, &mut session, fail_threshold)
}

pub const TRAJECTORY_HEADER: &str = "frame,x,y,w,h,overlap,event";

/// One trajectory row; skipped frames have neither box nor overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub frame: usize,
    pub bbox: Option<BBox>,
    pub overlap: Option<f32>,
    pub event: FrameEvent,
}

impl From<&TrackResult> for Vec<TrajectoryRow> {
    fn from(r: &TrackResult) -> Self {
        r.boxes
            .iter()
            .zip(&r.overlaps)
            .enumerate()
            .map(|(i, (b, o))| TrajectoryRow { frame: i, bbox: Some(*b), overlap: Some(*o), event: FrameEvent::Ok })
            .collect()
    }
}

impl From<&VotResult> for Vec<TrajectoryRow> {
    fn from(r: &VotResult) -> Self {
        (0..r.len())
            .map(|i| TrajectoryRow { frame: i, bbox: r.boxes[i], overlap: r.overlaps[i], event: r.events[i] })
            .collect()
    }
}

pub fn format_trajectory(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        match (r.bbox, r.overlap) {
            (Some(b), Some(o)) => out.push_str(&format!("{},{},{},{},{},{},{}\n", r.frame, b.x, b.y, b.w, b.h, o, r.event)),
            _ => out.push_str(&format!("{},,,,,,{}\n", r.frame, r.event)),
        }
    }
    out
}

pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TRAJECTORY_HEADER) {
        return Err(Error::Format(format!("trajectory must start with '{TRAJECTORY_HEADER}'")));
    }
    let bad = |n: usize| Error::Format(format!("malformed trajectory row {n}"));
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 7 {
                return Err(bad(n + 1));
            }
            let frame = f[0].parse().map_err(|_| bad(n + 1))?;
            let event = f[6].parse()?;
            let nums: Option<Vec<f32>> = f[1..6].iter().map(|v| v.parse().ok()).collect();
            let (bbox, overlap) = match nums {
                Some(v) => (Some(BBox::new(v[0], v[1], v[2], v[3])), Some(v[4])),
                None if f[1..6].iter().all(|v| v.is_empty()) => (None, None),
                None => return Err(bad(n + 1)),
            };
            Ok(TrajectoryRow { frame, bbox, overlap, event })
        })
        .collect()
}
