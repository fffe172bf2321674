//! Maximum-likelihood decoding of delayed worker keypresses.
//!
//! Each keypress is modeled as a reaction to some earlier positive item with
//! a Gaussian delay. For item `i` shown to worker `w` at onset `s`, a
//! keypress at `t` contributes
//!
//! ```text
//! log[(alpha * N(t - s; mu, sigma^2) + (1 - alpha) * u) / u]
//! ```
//!
//! to the item's log-likelihood ratio against the pure-background hypothesis,
//! where `u` is a uniform noise-floor density. The constant keypress
//! probability cancels in the ratio and lives in `u`. Per-item ratios are
//! summed over keypresses and workers and turned into posteriors with the
//! item prior.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{RedundancyPlan, Stream};
use crate::error::{Error, Result};
use crate::numeric::{logistic, logit, mean, normal_pdf, sample_std};

pub const SIGMA_FLOOR_MS: f64 = 1.0;
pub const MIN_CALIBRATION_MATCHES: usize = 30;
/// Keypresses further than this many sigmas from the mean delay contribute nothing.
pub const WINDOW_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerResponse {
    pub worker_id: String,
    pub stream_id: String,
    /// Offsets from the first stimulus onset, ascending.
    pub keypress_ms: Vec<f64>,
}

impl WorkerResponse {
    pub fn new(worker_id: impl Into<String>, stream_id: impl Into<String>, mut keypress_ms: Vec<f64>) -> Self {
        keypress_ms.sort_by(f64::total_cmp);
        Self {
            worker_id: worker_id.into(),
            stream_id: stream_id.into(),
            keypress_ms,
        }
    }
}

/// One line of the response log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypressRecord {
    pub worker: String,
    pub stream: String,
    pub t_ms: f64,
}

/// Renders responses as NDJSON, one keypress per line.
pub fn responses_to_ndjson(responses: &[WorkerResponse]) -> String {
    let mut out = String::new();
    for r in responses {
        for &t in &r.keypress_ms {
            let rec = KeypressRecord {
                worker: r.worker_id.clone(),
                stream: r.stream_id.clone(),
                t_ms: t,
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

/// Groups NDJSON keypress lines back into responses, keyed by (worker, stream)
/// in first-seen order.
///
/// A worker who pressed nothing leaves no lines, which is harmless for
/// decoding: silent workers contribute nothing.
pub fn responses_from_ndjson(s: &str) -> Result<Vec<WorkerResponse>> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut presses: HashMap<(String, String), Vec<f64>> = HashMap::new();
    for (lineno, line) in s.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: KeypressRecord = serde_json::from_str(line)
            .map_err(|e| Error::Malformed(format!("line {}: {e}", lineno + 1)))?;
        let key = (rec.worker, rec.stream);
        if !presses.contains_key(&key) {
            order.push(key.clone());
        }
        presses.entry(key).or_default().push(rec.t_ms);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let ts = presses.remove(&key).unwrap_or_default();
            WorkerResponse::new(key.0, key.1, ts)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub mu_ms: f64,
    pub sigma_ms: f64,
}

impl DelayModel {
    pub fn new(mu_ms: f64, sigma_ms: f64) -> Self {
        Self {
            mu_ms,
            sigma_ms: sigma_ms.max(SIGMA_FLOOR_MS),
        }
    }

    pub fn window(&self) -> (f64, f64) {
        let half = WINDOW_SIGMAS * self.sigma_ms;
        (self.mu_ms - half, self.mu_ms + half)
    }
}

impl Default for DelayModel {
    /// Reaction delay measured for crowd workers: 378ms mean, 92ms spread.
    fn default() -> Self {
        Self::new(378.0, 92.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    /// Prior probability that an item is positive.
    pub prior: f64,
    /// Mass on the Gaussian component of the keypress likelihood.
    pub signal_weight_alpha: f64,
    /// Uniform background density per ms.
    pub noise_floor_density: f64,
    /// Posterior cutoff for classification.
    pub threshold: f64,
    pub match_window_ms: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            prior: 0.05,
            signal_weight_alpha: 0.2,
            noise_floor_density: 2e-4,
            threshold: 0.5,
            match_window_ms: 1000.0,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return bad("prior must lie in (0, 1)");
        }
        if !(self.signal_weight_alpha > 0.0 && self.signal_weight_alpha <= 1.0) {
            return bad("signal_weight_alpha must lie in (0, 1]");
        }
        if !(self.noise_floor_density > 0.0 && self.noise_floor_density.is_finite()) {
            return bad("noise_floor_density must be positive");
        }
        if !(self.match_window_ms > 0.0) {
            return bad("match_window_ms must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub item_id: String,
    pub llr: f64,
    pub posterior: f64,
}

/// Fits the reaction-delay Gaussian from streams with known positives.
///
/// Keypresses are processed earliest-first; each is matched to the nearest
/// preceding unmatched positive onset no more than `match_window_ms` before
/// it. Unmatched keypresses are dropped.
pub fn fit_delay_model(
    calibration: &[(Stream, WorkerResponse)],
    match_window_ms: f64,
) -> Result<DelayModel> {
    let delays = matched_delays(calibration, match_window_ms)?;
    if delays.len() < MIN_CALIBRATION_MATCHES {
        return Err(Error::InsufficientCalibration {
            found: delays.len(),
            needed: MIN_CALIBRATION_MATCHES,
        });
    }
    Ok(DelayModel::new(mean(&delays), sample_std(&delays)))
}

/// The delays `fit_delay_model` would average, in processing order.
pub fn matched_delays(calibration: &[(Stream, WorkerResponse)], match_window_ms: f64) -> Result<Vec<f64>> {
    let mut delays = Vec::new();
    for (stream, response) in calibration {
        if !stream.has_ground_truth() {
            return Err(Error::MissingGroundTruth);
        }
        let onsets = stream.positive_onsets();
        let mut used = vec![false; onsets.len()];
        let mut presses = response.keypress_ms.clone();
        presses.sort_by(f64::total_cmp);
        for t in presses {
            // onsets[..end] are the positives at or before t
            let end = onsets.partition_point(|&s| s <= t);
            let candidate = (0..end)
                .rev()
                .take_while(|&j| t - onsets[j] <= match_window_ms)
                .find(|&j| !used[j]);
            if let Some(j) = candidate {
                used[j] = true;
                delays.push(t - onsets[j]);
            }
        }
    }
    Ok(delays)
}

/// Per-keypress log-likelihood ratio at a given delay, or zero outside the window.
pub fn keypress_llr(delay_ms: f64, model: &DelayModel, config: &DecoderConfig) -> f64 {
    let (lo, hi) = model.window();
    if delay_ms < lo || delay_ms > hi {
        return 0.0;
    }
    let u = config.noise_floor_density;
    let a = config.signal_weight_alpha;
    let signal = a * normal_pdf(delay_ms, model.mu_ms, model.sigma_ms);
    ((signal + (1.0 - a) * u) / u).ln()
}

/// Scores every item in `plan` from the workers' keypresses.
///
/// Output is sorted by item id. Per-worker contributions are reduced in
/// (worker id, stream id) order, so results do not depend on the order of
/// `responses` or on thread scheduling.
pub fn decode(
    plan: &RedundancyPlan,
    responses: &[WorkerResponse],
    model: &DelayModel,
    config: &DecoderConfig,
) -> Result<Vec<ItemScore>> {
    config.validate()?;
    if plan.streams.is_empty() {
        return Err(Error::EmptyPlan);
    }
    let streams: HashMap<&str, &Stream> = plan.streams.iter().map(|s| (s.id.as_str(), s)).collect();
    for r in responses {
        if !streams.contains_key(r.stream_id.as_str()) {
            return Err(Error::UnknownStream(r.stream_id.clone()));
        }
    }

    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &plan.streams {
        for id in s.item_ids() {
            index.insert(id, 0);
        }
    }
    for (slot, v) in index.values_mut().enumerate() {
        *v = slot;
    }
    let n_items = index.len();

    let mut ordered: Vec<&WorkerResponse> = responses.iter().collect();
    ordered.sort_by(|a, b| (&a.worker_id, &a.stream_id).cmp(&(&b.worker_id, &b.stream_id)));

    let partials: Vec<Vec<f64>> = ordered
        .par_iter()
        .map(|r| worker_llr(streams[r.stream_id.as_str()], r, &index, n_items, model, config))
        .collect();

    let mut llr = vec![0.0; n_items];
    for p in &partials {
        for (acc, v) in llr.iter_mut().zip(p) {
            *acc += v;
        }
    }

    let log_prior_odds = logit(config.prior);
    Ok(index
        .into_iter()
        .map(|(id, slot)| ItemScore {
            item_id: id.to_string(),
            llr: llr[slot],
            posterior: logistic(llr[slot] + log_prior_odds),
        })
        .collect())
}

fn worker_llr(
    stream: &Stream,
    response: &WorkerResponse,
    index: &BTreeMap<&str, usize>,
    n_items: usize,
    model: &DelayModel,
    config: &DecoderConfig,
) -> Vec<f64> {
    let mut out = vec![0.0; n_items];
    let presses = &response.keypress_ms;
    if presses.is_empty() {
        return out;
    }
    let (lo, hi) = model.window();
    for frame in stream.stimulus_frames() {
        let s = frame.onset_ms;
        let start = presses.partition_point(|&t| t - s < lo);
        let mut total = 0.0;
        for &t in presses[start..].iter().take_while(|&&t| t - s <= hi) {
            total += keypress_llr(t - s, model, config);
        }
        if total != 0.0 {
            out[index[frame.item_id.as_str()]] += total;
        }
    }
    out
}

/// Items with posterior strictly above `threshold`, by (posterior desc, id asc).
pub fn classify(scores: &[ItemScore], threshold: f64) -> Vec<String> {
    let mut hits: Vec<&ItemScore> = scores.iter().filter(|s| s.posterior > threshold).collect();
    hits.sort_by(|a, b| {
        b.posterior
            .total_cmp(&a.posterior)
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    hits.into_iter().map(|s| s.item_id.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

/// Precision and recall of `predicted` against `truth`.
///
/// An empty prediction has precision 1.0 and recall 0.0. An empty truth set
/// with a non-empty prediction has recall 1.0.
pub fn evaluate(predicted: &HashSet<String>, truth: &HashSet<String>, universe: &HashSet<String>) -> Evaluation {
    let tp = predicted.intersection(truth).count();
    let fp = predicted.len() - tp;
    let fn_ = truth.len() - tp;
    let tn = universe
        .iter()
        .filter(|id| !predicted.contains(*id) && !truth.contains(*id))
        .count();
    let (precision, recall) = if predicted.is_empty() {
        (1.0, 0.0)
    } else if truth.is_empty() {
        (tp as f64 / predicted.len() as f64, 1.0)
    } else {
        (tp as f64 / predicted.len() as f64, tp as f64 / truth.len() as f64)
    };
    Evaluation {
        precision,
        recall,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
    }
}

/// One point of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub predicted: usize,
}

/// Precision/recall at every distinct cutoff of the ranked scores, from the
/// strictest (nothing predicted) to the loosest.
///
/// Each point's threshold is the posterior of the first excluded item (0.0
/// when everything is admitted), so `classify(scores, point.threshold)`
/// reproduces the point.
pub fn sweep(scores: &[ItemScore], truth: &HashSet<String>) -> Vec<OperatingPoint> {
    let mut ranked: Vec<&ItemScore> = scores.iter().collect();
    ranked.sort_by(|a, b| b.posterior.total_cmp(&a.posterior));
    let n_truth = truth.len();
    let mut points = vec![OperatingPoint {
        threshold: 1.0,
        precision: 1.0,
        recall: 0.0,
        predicted: 0,
    }];
    let mut tp = 0usize;
    let mut i = 0;
    while i < ranked.len() {
        let p = ranked[i].posterior;
        while i < ranked.len() && ranked[i].posterior == p {
            if truth.contains(&ranked[i].item_id) {
                tp += 1;
            }
            i += 1;
        }
        let next_below = ranked.get(i).map_or(0.0, |s| s.posterior);
        points.push(OperatingPoint {
            threshold: next_below,
            precision: tp as f64 / i as f64,
            recall: if n_truth == 0 { 1.0 } else { tp as f64 / n_truth as f64 },
            predicted: i,
        });
    }
    points
}

/// Threshold with the highest recall whose precision is at least
/// `min_precision`. Falls back to the empty prediction.
pub fn tune_threshold(scores: &[ItemScore], truth: &HashSet<String>, min_precision: f64) -> OperatingPoint {
    sweep(scores, truth)
        .into_iter()
        .filter(|p| p.precision >= min_precision)
        .max_by(|a, b| a.recall.total_cmp(&b.recall).then(b.predicted.cmp(&a.predicted)))
        .expect("the empty prediction always qualifies")
}

pub const QUALIFICATION_WINDOW_MS: f64 = 500.0;
pub const QUALIFICATION_MIN_RECALL: f64 = 0.6;
pub const QUALIFICATION_MIN_PRECISION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerQuality {
    pub precision: f64,
    pub recall: f64,
    pub hits: usize,
    pub keypresses: usize,
    pub positives: usize,
    pub pass: bool,
}

/// Scores one worker's reactions against a stream's ground truth.
///
/// A keypress is a hit if it lands within `window_ms` after a positive onset
/// that no earlier keypress has claimed; positives are claimed earliest-first.
pub fn worker_precision_recall(stream: &Stream, response: &WorkerResponse, window_ms: f64) -> Result<WorkerQuality> {
    if !stream.has_ground_truth() {
        return Err(Error::MissingGroundTruth);
    }
    let onsets = stream.positive_onsets();
    let mut presses = response.keypress_ms.clone();
    presses.sort_by(f64::total_cmp);
    let mut used = vec![false; onsets.len()];
    let mut hits = 0;
    for &t in &presses {
        let end = onsets.partition_point(|&s| s <= t);
        let start = onsets.partition_point(|&s| t - s > window_ms);
        if let Some(j) = (start..end).find(|&j| !used[j]) {
            used[j] = true;
            hits += 1;
        }
    }
    let precision = if presses.is_empty() {
        1.0
    } else {
        hits as f64 / presses.len() as f64
    };
    let recall = if onsets.is_empty() {
        0.0
    } else {
        hits as f64 / onsets.len() as f64
    };
    let pass = !presses.is_empty()
        && recall >= QUALIFICATION_MIN_RECALL
        && precision >= QUALIFICATION_MIN_PRECISION;
    Ok(WorkerQuality {
        precision,
        recall,
        hits,
        keypresses: presses.len(),
        positives: onsets.len(),
        pass,
    })
}

/// Ratio of conventional labeling time to rapid-stream time per item.
pub fn speedup(conv_time_per_item_s: f64, conv_redundancy: u32, exposure_s: f64, redundancy: u32) -> Result<f64> {
    if !(conv_time_per_item_s > 0.0) {
        return Err(Error::NonPositive("conv_time_per_item_s"));
    }
    if conv_redundancy == 0 {
        return Err(Error::NonPositive("conv_redundancy"));
    }
    if !(exposure_s > 0.0) {
        return Err(Error::NonPositive("exposure_s"));
    }
    if redundancy == 0 {
        return Err(Error::NonPositive("redundancy"));
    }
    Ok((conv_time_per_item_s * conv_redundancy as f64) / (exposure_s * redundancy as f64))
}
