//! Per-session event validation and resume state.

use perceptkit_core::staircase::StaircaseState;
use perceptkit_protocol::{EventKind, EventRecord, NextTrial, Progress, TaskSpec};

use crate::error::{Result, ServiceError};

/// Everything needed to validate the next event, rebuilt on load by
/// replaying the stored log.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub last_seq: u64,
    pub last_t_ms: Option<f64>,
    pub answered: usize,
    staircase: Option<StaircaseState>,
}

impl Tracker {
    pub fn new(spec: &TaskSpec) -> Result<Self> {
        let staircase = match spec {
            TaskSpec::Staircase { config, .. } => Some(config.init()?),
            _ => None,
        };
        Ok(Self {
            last_seq: 0,
            last_t_ms: None,
            answered: 0,
            staircase,
        })
    }

    pub fn replay<'a>(spec: &TaskSpec, events: impl IntoIterator<Item = &'a EventRecord>) -> Result<Self> {
        let mut t = Self::new(spec)?;
        for e in events {
            t = t.accept(spec, e)?;
        }
        Ok(t)
    }

    /// Exposure the staircase serves next, when the task is a staircase.
    pub fn next_exposure_ms(&self) -> Option<f64> {
        self.staircase.as_ref().map(|s| s.exposure_ms)
    }

    /// Validates `event` as the next one in the log and returns the advanced state.
    pub fn accept(&self, spec: &TaskSpec, event: &EventRecord) -> Result<Self> {
        let expected = self.last_seq + 1;
        if event.seq != expected {
            return Err(ServiceError::SeqGap {
                expected,
                got: event.seq,
            });
        }
        if !event.t_ms.is_finite() {
            return Err(ServiceError::InvalidEvent(format!("seq {}: t_ms is not finite", event.seq)));
        }
        if let Some(last) = self.last_t_ms {
            if event.t_ms < last {
                return Err(ServiceError::TimeRegression {
                    seq: event.seq,
                    t_ms: event.t_ms,
                    last_t_ms: last,
                });
            }
        }
        let mut next = self.clone();
        next.last_seq = event.seq;
        next.last_t_ms = Some(event.t_ms);
        let bad = |m: String| Err(ServiceError::InvalidEvent(format!("seq {}: {m}", event.seq)));
        let p = &event.payload;
        match event.kind {
            EventKind::FrameOnset if p.item_id.is_none() => return bad("frame_onset needs item_id".into()),
            EventKind::Judgment => {
                let Some(total) = spec.total_judgments() else {
                    return bad(format!("{} tasks take no judgments", spec.kind().as_str()));
                };
                if self.answered >= total {
                    return bad(format!("task already has all {total} judgments"));
                }
                let image = spec.image_at(self.answered).expect("index below total");
                if p.item_id.as_deref() != Some(image.item_id.as_str()) {
                    return bad(format!(
                        "judgment {} must be for `{}`, got {:?}",
                        self.answered, image.item_id, p.item_id
                    ));
                }
                let Some(judged_fake) = p.judged_fake else {
                    return bad("judgment needs judged_fake".into());
                };
                let correct = judged_fake == image.is_fake;
                if p.correct.is_some_and(|c| c != correct) {
                    return bad("reported correctness contradicts the image label".into());
                }
                if let TaskSpec::Staircase { config, .. } = spec {
                    let state = next.staircase.as_mut().expect("staircase tracker");
                    if p.exposure_ms != Some(state.exposure_ms) {
                        return bad(format!(
                            "exposure {:?} differs from the staircase's {}ms",
                            p.exposure_ms, state.exposure_ms
                        ));
                    }
                    // a new block restarts the staircase
                    let mut s = config.update(state, correct);
                    s.history.clear();
                    if (self.answered + 1) % config.block_len == 0 {
                        s = config.init()?;
                    }
                    *state = s;
                }
                next.answered += 1;
            }
            _ => {}
        }
        Ok(next)
    }

    pub fn progress(&self, spec: &TaskSpec) -> Progress {
        let total = spec.total_judgments();
        let complete = total.is_some_and(|t| self.answered >= t);
        let next = (!complete)
            .then(|| spec.image_at(self.answered))
            .flatten()
            .map(|image| {
                let (block, trial) = match spec {
                    TaskSpec::Staircase { config, .. } => (
                        Some(self.answered / config.block_len),
                        Some(self.answered % config.block_len),
                    ),
                    _ => (None, None),
                };
                NextTrial {
                    index: self.answered,
                    item_id: image.item_id.clone(),
                    media_ref: image.media_ref.clone(),
                    block,
                    trial,
                    exposure_ms: self.next_exposure_ms(),
                }
            });
        Progress {
            last_seq: self.last_seq,
            last_t_ms: self.last_t_ms,
            answered: self.answered,
            total,
            complete,
            next,
        }
    }
}
