//! Synthetic workers and evaluators.
//!
//! Workers react to positive stream items after a Gaussian delay, miss more
//! often at short exposures and when positives crowd each other, and press
//! spuriously at a low Poisson rate. Evaluators answer real/fake questions
//! with a psychometric accuracy curve over log exposure.
//!
//! Every entity draws from its own generator seeded by
//! [`split_seed`](crate::seed::split_seed), so serial and parallel runs agree.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{RedundancyPlan, Stream};
use crate::decoder::WorkerResponse;
use crate::error::{Error, Result};
use crate::metrics::{Judgment, JudgmentSet};
use crate::numeric::{logistic, std_normal_cdf};
use crate::seed::{rng_from_seed, split_seed, Rng};
use crate::staircase::{EvaluatorBlocks, StaircaseConfig, Trial, TrialRecord};

/// Base miss probability as a decreasing logistic in exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissCurve {
    pub floor: f64,
    pub ceiling: f64,
    pub midpoint_ms: f64,
    pub slope_ms: f64,
}

impl MissCurve {
    pub fn at(&self, exposure_ms: f64) -> f64 {
        self.floor + (self.ceiling - self.floor) * logistic(-(exposure_ms - self.midpoint_ms) / self.slope_ms)
    }
}

impl Default for MissCurve {
    fn default() -> Self {
        Self {
            floor: 0.03,
            ceiling: 0.9,
            midpoint_ms: 50.0,
            slope_ms: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkerParams {
    pub delay_mu_ms: f64,
    pub delay_sigma_ms: f64,
    pub base_miss: MissCurve,
    /// Added to the miss probability when the previous positive began less
    /// than `crowding_gap_ms` earlier.
    pub crowding_extra_miss: f64,
    pub crowding_gap_ms: f64,
    pub false_alarm_rate_per_s: f64,
}

impl Default for WorkerParams {
    fn default() -> Self {
        Self {
            delay_mu_ms: 378.0,
            delay_sigma_ms: 92.0,
            base_miss: MissCurve::default(),
            crowding_extra_miss: 0.4,
            crowding_gap_ms: 400.0,
            false_alarm_rate_per_s: 0.01,
        }
    }
}

impl WorkerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delay_sigma_ms > 0.0) {
            return Err(Error::InvalidConfig("delay_sigma_ms must be positive".into()));
        }
        if !(self.false_alarm_rate_per_s >= 0.0) {
            return Err(Error::InvalidConfig("false_alarm_rate_per_s must be non-negative".into()));
        }
        if !(self.base_miss.slope_ms > 0.0) {
            return Err(Error::InvalidConfig("miss slope must be positive".into()));
        }
        Ok(())
    }
}

/// Miss probability for a positive shown for `exposure_ms`, whose previous
/// positive began `gap_to_prev_positive_ms` earlier (infinite if none).
pub fn miss_probability(exposure_ms: f64, gap_to_prev_positive_ms: f64, params: &WorkerParams) -> f64 {
    let crowded = gap_to_prev_positive_ms < params.crowding_gap_ms;
    let p = params.base_miss.at(exposure_ms) + if crowded { params.crowding_extra_miss } else { 0.0 };
    p.clamp(0.0, 1.0)
}

pub fn simulate_worker(stream: &Stream, worker_id: &str, params: &WorkerParams, seed: u64) -> Result<WorkerResponse> {
    params.validate()?;
    if !stream.has_ground_truth() {
        return Err(Error::MissingGroundTruth);
    }
    let mut rng = rng_from_seed(seed);
    let delay = Normal::new(params.delay_mu_ms, params.delay_sigma_ms)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut presses = Vec::new();
    let mut prev_positive = f64::NEG_INFINITY;
    for frame in stream.stimulus_frames() {
        if frame.is_positive != Some(true) {
            continue;
        }
        let miss = miss_probability(frame.exposure_ms, frame.onset_ms - prev_positive, params);
        prev_positive = frame.onset_ms;
        if rng.random::<f64>() < miss {
            continue;
        }
        presses.push(frame.onset_ms + delay.sample(&mut rng).max(0.0));
    }
    if params.false_alarm_rate_per_s > 0.0 {
        let gaps = Exp::new(params.false_alarm_rate_per_s / 1000.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let end = stream.duration_ms();
        let mut t = 0.0;
        loop {
            t += gaps.sample(&mut rng);
            if t >= end {
                break;
            }
            presses.push(t);
        }
    }
    Ok(WorkerResponse::new(worker_id, stream.id.clone(), presses))
}

/// One simulated worker per stream: worker `w` is `worker-{w:03}` and is
/// seeded with `split_seed(master_seed, w)`.
pub fn simulate_plan(plan: &RedundancyPlan, params: &WorkerParams, master_seed: u64) -> Result<Vec<WorkerResponse>> {
    plan.streams
        .par_iter()
        .enumerate()
        .map(|(w, s)| simulate_worker(s, &format!("worker-{w:03}"), params, split_seed(master_seed, w as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluatorParams {
    pub threshold_tau_ms: f64,
    pub slope: f64,
    pub guess_rate: f64,
    pub lapse_rate: f64,
    /// Overrides the untimed accuracy, which otherwise is the curve's ceiling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub untimed_accuracy: Option<f64>,
}

impl Default for EvaluatorParams {
    fn default() -> Self {
        Self {
            threshold_tau_ms: 300.0,
            slope: 0.3,
            guess_rate: 0.5,
            lapse_rate: 0.02,
            untimed_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exposure {
    Timed(f64),
    Untimed,
}

impl EvaluatorParams {
    pub fn with_threshold(threshold_tau_ms: f64) -> Self {
        Self {
            threshold_tau_ms,
            ..Self::default()
        }
    }

    /// Coin flipper at every exposure, timed or not.
    pub fn pure_guesser() -> Self {
        Self {
            threshold_tau_ms: f64::INFINITY,
            slope: 1.0,
            guess_rate: 0.5,
            lapse_rate: 0.0,
            untimed_accuracy: Some(0.5),
        }
    }

    /// Never wrong, at any exposure.
    pub fn oracle() -> Self {
        Self {
            threshold_tau_ms: 1e-9,
            slope: 1e-3,
            guess_rate: 0.5,
            lapse_rate: 0.0,
            untimed_accuracy: Some(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_tau_ms > 0.0 && self.slope > 0.0) {
            return Err(Error::InvalidConfig("tau and slope must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.guess_rate) || !(0.0..=0.1).contains(&self.lapse_rate) {
            return Err(Error::InvalidConfig("guess_rate in [0,1], lapse_rate in [0,0.1]".into()));
        }
        if let Some(a) = self.untimed_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidConfig("untimed_accuracy must lie in [0,1]".into()));
            }
        }
        Ok(())
    }

    /// `guess + (1 - guess - lapse) * Phi((ln t - ln tau) / slope)`.
    pub fn accuracy(&self, exposure: Exposure) -> f64 {
        let span = 1.0 - self.guess_rate - self.lapse_rate;
        match exposure {
            Exposure::Timed(t) => {
                let z = (t.ln() - self.threshold_tau_ms.ln()) / self.slope;
                self.guess_rate + span * std_normal_cdf(z)
            }
            Exposure::Untimed => self.untimed_accuracy.unwrap_or(self.guess_rate + span),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimJudgment {
    pub judged_fake: bool,
    pub correct: bool,
}

pub fn judge(exposure: Exposure, is_fake: bool, params: &EvaluatorParams, rng: &mut Rng) -> Result<SimJudgment> {
    if let Exposure::Timed(t) = exposure {
        if !(100.0..=1000.0).contains(&t) {
            return Err(Error::ExposureOutOfRange(t));
        }
    }
    let correct = rng.random::<f64>() < params.accuracy(exposure);
    Ok(SimJudgment {
        judged_fake: if correct { is_fake } else { !is_fake },
        correct,
    })
}

pub fn simulate_evaluator_judgment(
    exposure: Exposure,
    is_fake: bool,
    params: &EvaluatorParams,
    seed: u64,
) -> Result<SimJudgment> {
    judge(exposure, is_fake, params, &mut rng_from_seed(seed))
}

/// Balanced, shuffled fake flags: `round(n * fake_fraction)` fakes.
pub fn fake_schedule(n: usize, fake_fraction: f64, rng: &mut Rng) -> Vec<bool> {
    let n_fake = (n as f64 * fake_fraction).round() as usize;
    let mut flags: Vec<bool> = (0..n).map(|i| i < n_fake).collect();
    flags.shuffle(rng);
    flags
}

/// Runs one evaluator through `blocks_per_evaluator` fresh staircase blocks.
pub fn simulate_staircase_evaluator(
    evaluator_id: &str,
    config: &StaircaseConfig,
    params: &EvaluatorParams,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    params.validate()?;
    let mut records = Vec::with_capacity(config.block_len * config.blocks_per_evaluator);
    for block in 0..config.blocks_per_evaluator {
        let mut rng = rng_from_seed(split_seed(seed, block as u64));
        let fakes = fake_schedule(config.block_len, config.fake_fraction, &mut rng);
        let mut state = config.init()?;
        for (trial, &is_fake) in fakes.iter().enumerate() {
            let j = judge(Exposure::Timed(state.exposure_ms), is_fake, params, &mut rng)?;
            records.push(TrialRecord {
                evaluator: evaluator_id.to_string(),
                block,
                trial,
                exposure_ms: state.exposure_ms,
                is_fake,
                judged_fake: j.judged_fake,
                correct: j.correct,
            });
            state = config.update(&state, j.correct);
        }
    }
    Ok(records)
}

/// `n` evaluators sharing `params`; evaluator `e` is `eval-{e:03}`.
pub fn simulate_staircase_panel(
    n: usize,
    config: &StaircaseConfig,
    params: &EvaluatorParams,
    master_seed: u64,
) -> Result<Vec<TrialRecord>> {
    let per: Vec<Vec<TrialRecord>> = (0..n)
        .into_par_iter()
        .map(|e| simulate_staircase_evaluator(&format!("eval-{e:03}"), config, params, split_seed(master_seed, e as u64)))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Final exposure after one block, without keeping the history.
pub fn simulate_block_final_exposure(config: &StaircaseConfig, params: &EvaluatorParams, seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    let mut state = config.init()?;
    let fakes = fake_schedule(config.block_len, config.fake_fraction, &mut rng);
    for is_fake in fakes {
        let j = judge(Exposure::Timed(state.exposure_ms), is_fake, params, &mut rng)?;
        state = config.update(&state, j.correct);
    }
    Ok(state.exposure_ms)
}

pub fn records_to_blocks(records: &[TrialRecord]) -> Vec<EvaluatorBlocks> {
    crate::staircase::blocks_from_records(records)
}

pub fn trials_of(records: &[TrialRecord]) -> Vec<Trial> {
    records
        .iter()
        .map(|r| Trial {
            exposure_ms: r.exposure_ms,
            correct: r.correct,
        })
        .collect()
}

/// An untimed task of `n_images` judgments with `round(n * fake_fraction)` fakes.
pub fn simulate_judgment_set(
    evaluator_id: &str,
    n_images: usize,
    fake_fraction: f64,
    params: &EvaluatorParams,
    seed: u64,
) -> Result<JudgmentSet> {
    params.validate()?;
    let mut rng = rng_from_seed(seed);
    let fakes = fake_schedule(n_images, fake_fraction, &mut rng);
    let judgments = fakes
        .into_iter()
        .enumerate()
        .map(|(i, is_fake)| {
            let j = judge(Exposure::Untimed, is_fake, params, &mut rng)?;
            Ok(Judgment::new(format!("img-{i:04}"), is_fake, j.judged_fake))
        })
        .collect::<Result<_>>()?;
    Ok(JudgmentSet {
        evaluator_id: evaluator_id.to_string(),
        judgments,
    })
}

pub fn simulate_hype_panel(
    n: usize,
    n_images: usize,
    fake_fraction: f64,
    params: &EvaluatorParams,
    master_seed: u64,
) -> Result<Vec<JudgmentSet>> {
    (0..n)
        .into_par_iter()
        .map(|e| {
            simulate_judgment_set(&format!("eval-{e:03}"), n_images, fake_fraction, params, split_seed(master_seed, e as u64))
        })
        .collect()
}
