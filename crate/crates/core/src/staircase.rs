//! Adaptive-exposure staircase for time-limited real/fake judgments.
//!
//! Exposure starts at 500ms, drops 30ms after three consecutive correct
//! answers and rises 10ms after any incorrect one, clamped to [100, 1000].
//! The modal exposure of each 150-trial block estimates the evaluator's
//! perceptual threshold; the model score is the mean over evaluators of the
//! mean of their block modes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaircaseConfig {
    pub start_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub up_step_ms: f64,
    pub down_step_ms: f64,
    pub down_after_consecutive: u32,
    pub block_len: usize,
    pub blocks_per_evaluator: usize,
    pub fake_fraction: f64,
}

impl Default for StaircaseConfig {
    fn default() -> Self {
        Self {
            start_ms: 500.0,
            min_ms: 100.0,
            max_ms: 1000.0,
            up_step_ms: 10.0,
            down_step_ms: 30.0,
            down_after_consecutive: 3,
            block_len: 150,
            blocks_per_evaluator: 3,
            fake_fraction: 0.5,
        }
    }
}

impl StaircaseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.min_ms > 0.0 && self.min_ms <= self.max_ms) {
            return bad("require 0 < min_ms <= max_ms");
        }
        if !(self.start_ms >= self.min_ms && self.start_ms <= self.max_ms) {
            return bad("start_ms must lie within [min_ms, max_ms]");
        }
        if !(self.up_step_ms > 0.0 && self.down_step_ms > 0.0) {
            return bad("steps must be positive");
        }
        if self.down_after_consecutive == 0 || self.block_len == 0 || self.blocks_per_evaluator == 0 {
            return bad("counts must be positive");
        }
        if !(0.0..=1.0).contains(&self.fake_fraction) {
            return bad("fake_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn init(&self) -> Result<StaircaseState> {
        self.validate()?;
        Ok(StaircaseState {
            exposure_ms: self.start_ms,
            consecutive_correct: 0,
            trial_index: 0,
            history: Vec::new(),
        })
    }

    /// Records a trial at the current exposure and moves the staircase.
    pub fn update(&self, state: &StaircaseState, correct: bool) -> StaircaseState {
        let mut next = state.clone();
        next.history.push(Trial {
            exposure_ms: state.exposure_ms,
            correct,
        });
        next.trial_index += 1;
        if correct {
            next.consecutive_correct += 1;
            if next.consecutive_correct >= self.down_after_consecutive {
                next.exposure_ms -= self.down_step_ms;
                next.consecutive_correct = 0;
            }
        } else {
            next.exposure_ms += self.up_step_ms;
            next.consecutive_correct = 0;
        }
        next.exposure_ms = next.exposure_ms.clamp(self.min_ms, self.max_ms);
        next
    }

    /// Exposures served for a correctness sequence, one per answer.
    pub fn replay(&self, answers: impl IntoIterator<Item = bool>) -> Result<Vec<f64>> {
        let mut state = self.init()?;
        let mut served = Vec::new();
        for correct in answers {
            served.push(state.exposure_ms);
            state = self.update(&state, correct);
        }
        Ok(served)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub exposure_ms: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseState {
    pub exposure_ms: f64,
    pub consecutive_correct: u32,
    pub trial_index: usize,
    pub history: Vec<Trial>,
}

pub fn staircase_init(config: &StaircaseConfig) -> Result<StaircaseState> {
    config.init()
}

pub fn staircase_update(config: &StaircaseConfig, state: &StaircaseState, correct: bool) -> StaircaseState {
    config.update(state, correct)
}

/// Most frequent per-trial exposure; ties go to the smaller exposure.
pub fn block_mode(history: &[Trial]) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let mut xs: Vec<f64> = history.iter().map(|t| t.exposure_ms).collect();
    xs.sort_by(f64::total_cmp);
    let (mut best, mut best_count) = (xs[0], 0usize);
    let mut i = 0;
    while i < xs.len() {
        let v = xs[i];
        let run = xs[i..].iter().take_while(|&&x| x == v).count();
        // ascending scan: strict > keeps the smaller value on ties
        if run > best_count {
            best = v;
            best_count = run;
        }
        i += run;
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorTimeScore {
    pub evaluator_id: String,
    pub block_modes_ms: Vec<f64>,
    pub score_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypeTimeScore {
    pub per_evaluator: Vec<EvaluatorTimeScore>,
    pub model_score_ms: f64,
}

/// Completed blocks for one evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorBlocks {
    pub evaluator_id: String,
    pub blocks: Vec<Vec<Trial>>,
}

pub fn hype_time_score(evaluators: &[EvaluatorBlocks], config: &StaircaseConfig) -> Result<HypeTimeScore> {
    if evaluators.is_empty() {
        return Err(Error::IncompleteBlocks("no evaluators".into()));
    }
    let mut per_evaluator = Vec::with_capacity(evaluators.len());
    for ev in evaluators {
        if ev.blocks.len() != config.blocks_per_evaluator {
            return Err(Error::IncompleteBlocks(format!(
                "evaluator `{}` has {} of {} blocks",
                ev.evaluator_id,
                ev.blocks.len(),
                config.blocks_per_evaluator
            )));
        }
        if let Some((b, blk)) = ev.blocks.iter().enumerate().find(|(_, b)| b.len() != config.block_len) {
            return Err(Error::IncompleteBlocks(format!(
                "evaluator `{}` block {b} has {} of {} trials",
                ev.evaluator_id,
                blk.len(),
                config.block_len
            )));
        }
        let modes = ev.blocks.iter().map(|b| block_mode(b)).collect::<Result<Vec<_>>>()?;
        per_evaluator.push(score_from_modes(&ev.evaluator_id, modes));
    }
    let model_score_ms = per_evaluator.iter().map(|e| e.score_ms).sum::<f64>() / per_evaluator.len() as f64;
    Ok(HypeTimeScore {
        per_evaluator,
        model_score_ms,
    })
}

pub fn score_from_modes(evaluator_id: &str, block_modes_ms: Vec<f64>) -> EvaluatorTimeScore {
    let score_ms = block_modes_ms.iter().sum::<f64>() / block_modes_ms.len() as f64;
    EvaluatorTimeScore {
        evaluator_id: evaluator_id.to_string(),
        block_modes_ms,
        score_ms,
    }
}

/// One line of the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub evaluator: String,
    pub block: usize,
    pub trial: usize,
    pub exposure_ms: f64,
    pub is_fake: bool,
    pub judged_fake: bool,
    pub correct: bool,
}

pub fn trials_to_ndjson(records: &[TrialRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

pub fn trials_from_ndjson(s: &str) -> Result<Vec<TrialRecord>> {
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Malformed(format!("line {}: {e}", i + 1))))
        .collect()
}

/// Groups a trial log into per-evaluator blocks, ordered by evaluator id,
/// block and trial.
pub fn blocks_from_records(records: &[TrialRecord]) -> Vec<EvaluatorBlocks> {
    use std::collections::BTreeMap;
    let mut by_eval: BTreeMap<&str, BTreeMap<usize, Vec<&TrialRecord>>> = BTreeMap::new();
    for r in records {
        by_eval
            .entry(r.evaluator.as_str())
            .or_default()
            .entry(r.block)
            .or_default()
            .push(r);
    }
    by_eval
        .into_iter()
        .map(|(ev, blocks)| EvaluatorBlocks {
            evaluator_id: ev.to_string(),
            blocks: blocks
                .into_values()
                .map(|mut trials| {
                    trials.sort_by_key(|r| r.trial);
                    trials
                        .into_iter()
                        .map(|r| Trial {
                            exposure_ms: r.exposure_ms,
                            correct: r.correct,
                        })
                        .collect()
                })
                .collect(),
        })
        .collect()
}

/// Checks that every block's served exposures equal a fresh replay of its
/// correctness sequence.
pub fn verify_replay(blocks: &[EvaluatorBlocks], config: &StaircaseConfig) -> Result<()> {
    for ev in blocks {
        for (b, block) in ev.blocks.iter().enumerate() {
            let replayed = config.replay(block.iter().map(|t| t.correct))?;
            if let Some(k) = (0..block.len()).find(|&k| block[k].exposure_ms != replayed[k]) {
                return Err(Error::Malformed(format!(
                    "evaluator `{}` block {b} trial {k}: served {}ms, replay gives {}ms",
                    ev.evaluator_id, block[k].exposure_ms, replayed[k]
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(cfg: &StaircaseConfig, start: &StaircaseState, answers: &[bool]) -> StaircaseState {
        answers.iter().fold(start.clone(), |s, &c| cfg.update(&s, c))
    }

    #[test]
    fn init_uses_start() {
        let cfg = StaircaseConfig::default();
        assert_eq!(cfg.init().unwrap().exposure_ms, 500.0);
        let cfg = StaircaseConfig {
            start_ms: 200.0,
            ..Default::default()
        };
        assert_eq!(cfg.init().unwrap().exposure_ms, 200.0);
        let cfg = StaircaseConfig {
            start_ms: 50.0,
            ..Default::default()
        };
        assert!(cfg.init().is_err());
    }

    #[test]
    fn three_correct_then_one_wrong() {
        let cfg = StaircaseConfig::default();
        let s = run(&cfg, &cfg.init().unwrap(), &[true, true, true]);
        assert_eq!(s.exposure_ms, 470.0);
        assert_eq!(s.consecutive_correct, 0);
        let s = cfg.update(&s, false);
        assert_eq!(s.exposure_ms, 480.0);
        assert_eq!(s.history.len(), 4);
        assert_eq!(s.history[3].exposure_ms, 470.0);
    }

    #[test]
    fn wrong_answer_resets_the_counter() {
        let cfg = StaircaseConfig::default();
        let s = run(&cfg, &cfg.init().unwrap(), &[true, true, false, true, true]);
        assert_eq!(s.exposure_ms, 510.0);
        assert_eq!(s.consecutive_correct, 2);
    }

    #[test]
    fn clamps_at_the_floor() {
        let cfg = StaircaseConfig {
            start_ms: 100.0,
            ..Default::default()
        };
        let s = run(&cfg, &cfg.init().unwrap(), &[true, true, true]);
        assert_eq!(s.exposure_ms, 100.0);
    }

    #[test]
    fn mode_breaks_ties_low() {
        let h = |xs: &[f64]| -> Vec<Trial> {
            xs.iter()
                .map(|&x| Trial {
                    exposure_ms: x,
                    correct: true,
                })
                .collect()
        };
        assert_eq!(block_mode(&h(&[500., 500., 470., 470., 470., 480.])).unwrap(), 470.0);
        assert_eq!(block_mode(&h(&[500., 500., 470., 470.])).unwrap(), 470.0);
        assert_eq!(block_mode(&h(&[730.])).unwrap(), 730.0);
        assert_eq!(block_mode(&[]).unwrap_err(), Error::EmptyHistory);
    }

    #[test]
    fn model_score_is_mean_of_evaluator_means() {
        let a = score_from_modes("a", vec![400.0, 400.0, 400.0]);
        assert_eq!(a.score_ms, 400.0);
        let cfg = StaircaseConfig {
            block_len: 1,
            blocks_per_evaluator: 1,
            ..Default::default()
        };
        let evs = [300.0, 500.0].map(|x| EvaluatorBlocks {
            evaluator_id: format!("e{x}"),
            blocks: vec![vec![Trial {
                exposure_ms: x,
                correct: true,
            }]],
        });
        assert_eq!(hype_time_score(&evs, &cfg).unwrap().model_score_ms, 400.0);
    }

    #[test]
    fn incomplete_blocks_rejected() {
        let cfg = StaircaseConfig::default();
        let ev = EvaluatorBlocks {
            evaluator_id: "e".into(),
            blocks: vec![vec![]; 2],
        };
        assert!(matches!(hype_time_score(&[ev], &cfg), Err(Error::IncompleteBlocks(_))));
    }
}
