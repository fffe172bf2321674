//! Turns a session's event log into the datasets the analysis modules read.

use perceptkit_core::decoder::{responses_to_ndjson, worker_precision_recall, WorkerResponse, QUALIFICATION_WINDOW_MS};
use perceptkit_core::metrics::{judgments_to_ndjson, Judgment, JudgmentSet};
use perceptkit_core::staircase::{blocks_from_records, hype_time_score, trials_to_ndjson, verify_replay, EvaluatorBlocks, TrialRecord};
use perceptkit_protocol::{EventKind, EventRecord, ExportBundle, Session, TaskSpec};

use crate::error::Result;

/// Participant label used in exported datasets.
pub fn participant(session: &Session) -> String {
    session.participant_id.clone().unwrap_or_else(|| session.id.clone())
}

pub fn build(session: &Session, spec: &TaskSpec, events: &[EventRecord]) -> Result<ExportBundle> {
    let slipped_frames = events
        .iter()
        .filter(|e| e.kind == EventKind::FrameOnset && e.payload.slip == Some(true))
        .count();
    let who = participant(session);
    let mut bundle = ExportBundle {
        session: session.clone(),
        worker_response: None,
        worker_quality: None,
        trials: None,
        time_score: None,
        judgments: None,
        ndjson: String::new(),
        slipped_frames,
    };
    let judgments = events.iter().filter(|e| e.kind == EventKind::Judgment);
    match spec {
        TaskSpec::RsvpStream { stream } | TaskSpec::Qualification { stream } => {
            let presses = events
                .iter()
                .filter(|e| e.kind == EventKind::Keypress)
                .map(|e| e.t_ms)
                .collect();
            let response = WorkerResponse::new(who, stream.id.clone(), presses);
            if matches!(spec, TaskSpec::Qualification { .. }) {
                bundle.worker_quality = Some(worker_precision_recall(stream, &response, QUALIFICATION_WINDOW_MS)?);
            }
            bundle.ndjson = responses_to_ndjson(std::slice::from_ref(&response));
            bundle.worker_response = Some(response);
        }
        TaskSpec::Staircase { config, .. } => {
            // the tracker admitted judgments in image order, so index j is trial j
            let records: Vec<TrialRecord> = judgments
                .enumerate()
                .map(|(j, e)| {
                    let image = spec.image_at(j).expect("staircase images are non-empty");
                    let judged_fake = e.payload.judged_fake.unwrap_or_default();
                    TrialRecord {
                        evaluator: who.clone(),
                        block: j / config.block_len,
                        trial: j % config.block_len,
                        exposure_ms: e.payload.exposure_ms.unwrap_or_default(),
                        is_fake: image.is_fake,
                        judged_fake,
                        correct: judged_fake == image.is_fake,
                    }
                })
                .collect();
            let blocks: Vec<EvaluatorBlocks> = blocks_from_records(&records);
            verify_replay(&blocks, config)?;
            if records.len() == config.block_len * config.blocks_per_evaluator {
                bundle.time_score = hype_time_score(&blocks, config)?.per_evaluator.into_iter().next();
            }
            bundle.ndjson = trials_to_ndjson(&records);
            bundle.trials = Some(records);
        }
        TaskSpec::HypeInf { .. } => {
            let set = JudgmentSet {
                evaluator_id: who,
                judgments: judgments
                    .enumerate()
                    .map(|(j, e)| {
                        let image = spec.image_at(j).expect("judgment count bounded by images");
                        Judgment::new(image.item_id.clone(), image.is_fake, e.payload.judged_fake.unwrap_or_default())
                    })
                    .collect(),
            };
            bundle.ndjson = judgments_to_ndjson(std::slice::from_ref(&set));
            bundle.judgments = Some(set);
        }
    }
    Ok(bundle)
}
