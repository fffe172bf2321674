//! Wire types for the task service.
//!
//! Every type here serializes to JSON with fields in declaration order; event
//! logs are NDJSON with one `EventRecord` per line. `docs/protocol.md` lists
//! the fields one by one.

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use perceptkit_core::cascade::{CascadePlan, OrderStrategy};
use perceptkit_core::corpus::{Item, RedundancyPlan, Stream, StreamConfig};
use perceptkit_core::decoder::{
    DecoderConfig, DelayModel, Evaluation, ItemScore, WorkerQuality, WorkerResponse,
};
use perceptkit_core::metrics::{
    AnovaResult, GuessPassProbability, HypeTaskConfig, JudgmentSet, PairwiseComparison, TTestResult,
    Tally,
};
use perceptkit_core::staircase::{EvaluatorTimeScore, StaircaseConfig, TrialRecord};
use perceptkit_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const API_PREFIX: &str = "/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    RsvpStream,
    Staircase,
    HypeInf,
    Qualification,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::RsvpStream => "rsvp_stream",
            TaskKind::Staircase => "staircase",
            TaskKind::HypeInf => "hype_inf",
            TaskKind::Qualification => "qualification",
        }
    }
}

/// An image shown in a real/fake judgment task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    pub item_id: String,
    pub media_ref: String,
    pub is_fake: bool,
}

/// What a session asks the participant to do. Frozen at session creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task_kind", rename_all = "snake_case")]
pub enum TaskSpec {
    RsvpStream {
        stream: Stream,
    },
    /// Trial `j` shows `images[j % images.len()]`.
    Staircase {
        #[serde(default)]
        config: StaircaseConfig,
        images: Vec<ImageRef>,
    },
    HypeInf {
        images: Vec<ImageRef>,
    },
    Qualification {
        stream: Stream,
    },
}

impl TaskSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::RsvpStream { .. } => TaskKind::RsvpStream,
            TaskSpec::Staircase { .. } => TaskKind::Staircase,
            TaskSpec::HypeInf { .. } => TaskKind::HypeInf,
            TaskSpec::Qualification { .. } => TaskKind::Qualification,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TaskSpec::RsvpStream { stream } => {
                stream.validate()?;
                if stream.stimulus_count() == 0 {
                    return Err(Error::EmptyItems);
                }
                Ok(())
            }
            TaskSpec::Qualification { stream } => {
                stream.validate()?;
                if !stream.has_ground_truth() {
                    return Err(Error::MissingGroundTruth);
                }
                if stream.positive_onsets().is_empty() {
                    return Err(Error::InvalidConfig("qualification stream has no positives".into()));
                }
                Ok(())
            }
            TaskSpec::Staircase { config, images } => {
                config.validate()?;
                validate_images(images, false)
            }
            TaskSpec::HypeInf { images } => validate_images(images, true),
        }
    }

    /// Number of judgments the task expects, if it is a judgment task.
    pub fn total_judgments(&self) -> Option<usize> {
        match self {
            TaskSpec::Staircase { config, .. } => Some(config.block_len * config.blocks_per_evaluator),
            TaskSpec::HypeInf { images } => Some(images.len()),
            _ => None,
        }
    }

    /// Image served at judgment index `j`.
    pub fn image_at(&self, j: usize) -> Option<&ImageRef> {
        match self {
            TaskSpec::Staircase { images, .. } if !images.is_empty() => Some(&images[j % images.len()]),
            TaskSpec::HypeInf { images } => images.get(j),
            _ => None,
        }
    }
}

fn validate_images(images: &[ImageRef], need_both: bool) -> Result<()> {
    if images.is_empty() {
        return Err(Error::EmptyItems);
    }
    let mut seen = HashSet::new();
    for im in images {
        if im.media_ref.is_empty() {
            return Err(Error::EmptyMediaRef(im.item_id.clone()));
        }
        if !seen.insert(im.item_id.as_str()) {
            return Err(Error::DuplicateItem(im.item_id.clone()));
        }
    }
    if need_both && (images.iter().all(|i| i.is_fake) || images.iter().all(|i| !i.is_fake)) {
        return Err(Error::InvalidConfig("judgment task needs both real and fake images".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Open,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub task_kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant_id: Option<String>,
    pub state: SessionState,
    pub created_at: DateTime<Utc>,
    pub event_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant_id: Option<String>,
    pub spec: TaskSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FrameOnset,
    Keypress,
    Judgment,
    BlockStart,
    MaskOnset,
}

/// Kind-specific event fields; absent fields are omitted on the wire.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judged_fake: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
    /// Set by the client when a frame missed its planned duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slip: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub session_id: String,
    pub seq: u64,
    pub t_ms: f64,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: EventPayload,
}

impl EventRecord {
    pub fn new(session_id: impl Into<String>, seq: u64, t_ms: f64, kind: EventKind, payload: EventPayload) -> Self {
        Self {
            session_id: session_id.into(),
            seq,
            t_ms,
            kind,
            payload,
        }
    }

    pub fn keypress(session_id: &str, seq: u64, t_ms: f64) -> Self {
        Self::new(session_id, seq, t_ms, EventKind::Keypress, EventPayload::default())
    }

    pub fn judgment(session_id: &str, seq: u64, t_ms: f64, item_id: &str, judged_fake: bool, exposure_ms: Option<f64>) -> Self {
        Self::new(
            session_id,
            seq,
            t_ms,
            EventKind::Judgment,
            EventPayload {
                item_id: Some(item_id.to_string()),
                exposure_ms,
                judged_fake: Some(judged_fake),
                ..EventPayload::default()
            },
        )
    }

    pub fn to_ndjson_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes") + "\n"
    }
}

pub fn events_to_ndjson(events: &[EventRecord]) -> String {
    events.iter().map(EventRecord::to_ndjson_line).collect()
}

pub fn events_from_ndjson(s: &str) -> Result<Vec<EventRecord>> {
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Malformed(format!("line {}: {e}", i + 1))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub session_id: String,
    pub last_seq: u64,
}

/// The next judgment the participant should see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextTrial {
    pub index: usize,
    pub item_id: String,
    pub media_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub last_seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_t_ms: Option<f64>,
    pub answered: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<NextTrial>,
}

/// Response of get-task-spec: the frozen spec plus where to resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub session: Session,
    pub spec: TaskSpec,
    pub progress: Progress,
}

/// A session's data in the formats the analysis modules read.
///
/// Exactly one of `worker_response`, `trials` and `judgments` is set, and
/// `ndjson` holds that dataset in its module's NDJSON format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub session: Session,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_response: Option<WorkerResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_quality: Option<WorkerQuality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<Vec<TrialRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_score: Option<EvaluatorTimeScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgments: Option<JudgmentSet>,
    pub ndjson: String,
    pub slipped_frames: usize,
}

/// Messages a client sends on the live channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LiveRequest {
    GetSpec,
    Append { events: Vec<EventRecord> },
    Finalize,
}

/// Messages the server sends on the live channel, one per request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LiveResponse {
    Spec { view: Box<TaskView> },
    Ack { ack: Ack, progress: Progress },
    Finalized { bundle: Box<ExportBundle> },
    Error { error: ErrorBody },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

// --- compute endpoints ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRequest {
    pub items: Vec<Item>,
    #[serde(default)]
    pub config: StreamConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub items: Vec<Item>,
    pub redundancy: u32,
    #[serde(default)]
    pub config: StreamConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPair {
    pub stream: Stream,
    pub response: WorkerResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateRequest {
    pub calibration: Vec<CalibrationPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_window_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRequest {
    pub plan: RedundancyPlan,
    pub responses: Vec<WorkerResponse>,
    #[serde(default)]
    pub delay_model: DelayModel,
    #[serde(default)]
    pub config: DecoderConfig,
    /// Ground-truth positives; enables evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<String>>,
    /// With `truth`, tunes the threshold for this precision instead of using the configured one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResponse {
    pub scores: Vec<ItemScore>,
    pub threshold: f64,
    pub predicted: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRequest {
    pub conv_time_s: f64,
    pub conv_redundancy: u32,
    pub exposure_s: f64,
    pub redundancy: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupResponse {
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypeScoreRequest {
    pub sets: Vec<JudgmentSet>,
    #[serde(default)]
    pub config: HypeTaskConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeScoreRequest {
    pub trials: Vec<TrialRecord>,
    #[serde(default)]
    pub config: StaircaseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualifyRequest {
    pub sets: Vec<JudgmentSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualifyResult {
    pub evaluator_id: String,
    pub pass: bool,
    pub tally: Tally,
    /// Chance that a coin flipper passes a task of this composition.
    pub chance_pass: GuessPassProbability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualifyResponse {
    pub threshold: f64,
    pub results: Vec<QualifyResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRequest {
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum StatsRequest {
    Anova { groups: Vec<Vec<f64>> },
    TTest { a: Vec<f64>, b: Vec<f64> },
    Pairwise { groups: Vec<Vec<f64>> },
    Spearman { x: Vec<f64>, y: Vec<f64> },
    Pearson { x: Vec<f64>, y: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum StatsResponse {
    Anova(AnovaResult),
    TTest(TTestResult),
    Pairwise { comparisons: Vec<PairwiseComparison> },
    Spearman { rho: f64 },
    Pearson { r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadePlanRequest {
    pub counts: BTreeMap<String, u64>,
    pub strategy: OrderStrategy,
    pub redundancy: u32,
    pub exposure_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadePlanResponse {
    pub plan: CascadePlan,
    /// Item views with a labeler that never errs.
    pub item_views: u64,
    pub worker_seconds: f64,
    pub dollars: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveCostRequest {
    pub n_items: u64,
    pub n_classes: u64,
    pub per_label_s: f64,
    pub redundancy: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostResponse {
    pub worker_seconds: f64,
    pub dollars: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_line_has_stable_field_order() {
        let e = EventRecord::judgment("s1", 4, 1250.5, "img-0001", true, Some(470.0));
        assert_eq!(
            e.to_ndjson_line(),
            "{\"session_id\":\"s1\",\"seq\":4,\"t_ms\":1250.5,\"kind\":\"judgment\",\
             \"payload\":{\"item_id\":\"img-0001\",\"exposure_ms\":470.0,\"judged_fake\":true}}\n"
        );
        assert_eq!(events_from_ndjson(&e.to_ndjson_line()).unwrap(), vec![e]);
    }

    #[test]
    fn unknown_payload_fields_rejected() {
        let line = r#"{"session_id":"s","seq":1,"t_ms":0,"kind":"keypress","payload":{"bogus":1}}"#;
        assert!(events_from_ndjson(line).is_err());
    }

    #[test]
    fn spec_is_tagged_by_kind() {
        let spec = TaskSpec::HypeInf {
            images: vec![
                ImageRef { item_id: "a".into(), media_ref: "a.png".into(), is_fake: true },
                ImageRef { item_id: "b".into(), media_ref: "b.png".into(), is_fake: false },
            ],
        };
        let v = serde_json::to_value(&spec).unwrap();
        assert_eq!(v["task_kind"], "hype_inf");
        spec.validate().unwrap();
        assert_eq!(spec.total_judgments(), Some(2));
    }

    #[test]
    fn one_class_hype_task_rejected() {
        let spec = TaskSpec::HypeInf {
            images: vec![ImageRef { item_id: "a".into(), media_ref: "a.png".into(), is_fake: true }],
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn staircase_spec_cycles_images() {
        let spec: TaskSpec = serde_json::from_str(
            r#"{"task_kind":"staircase","images":[{"item_id":"a","media_ref":"a","is_fake":true},{"item_id":"b","media_ref":"b","is_fake":false}]}"#,
        )
        .unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.total_judgments(), Some(450));
        assert_eq!(spec.image_at(3).unwrap().item_id, "b");
    }

    #[test]
    fn live_messages_are_tagged() {
        let m: LiveRequest = serde_json::from_str(r#"{"type":"get_spec"}"#).unwrap();
        assert_eq!(m, LiveRequest::GetSpec);
        let s = serde_json::to_string(&LiveRequest::Append { events: vec![] }).unwrap();
        assert_eq!(s, r#"{"type":"append","events":[]}"#);
    }
}
