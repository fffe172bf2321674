//! Item corpora and randomized, rate-constrained stimulus streams.
//!
//! A [`Stream`] is the schedule one worker sees: optional countdown frames
//! followed by every assigned item exactly once, each shown for the same
//! exposure. Countdown frames carry negative onsets so that stimulus frame
//! `k` always starts at `k * exposure_ms`.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{rng_from_seed, split_seed, Rng};

pub const QUALIFICATION_LEN: usize = 200;
pub const QUALIFICATION_POSITIVES: usize = 25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub media_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_positive: Option<bool>,
}

impl Item {
    pub fn new(id: impl Into<String>, media_ref: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            media_ref: media_ref.into(),
            class_label: None,
            is_positive: None,
        }
    }

    pub fn positive(mut self, is_positive: bool) -> Self {
        self.is_positive = Some(is_positive);
        self
    }

    pub fn with_class(mut self, label: impl Into<String>) -> Self {
        self.class_label = Some(label.into());
        self
    }
}

/// Checks id uniqueness and non-empty media references.
pub fn validate_items(items: &[Item]) -> Result<()> {
    let mut seen = HashSet::with_capacity(items.len());
    for item in items {
        if item.media_ref.is_empty() {
            return Err(Error::EmptyMediaRef(item.id.clone()));
        }
        if !seen.insert(item.id.as_str()) {
            return Err(Error::DuplicateItem(item.id.clone()));
        }
    }
    Ok(())
}

/// The corpus manifest: `{"items": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub items: Vec<Item>,
}

impl Corpus {
    pub fn new(items: Vec<Item>) -> Result<Self> {
        validate_items(&items)?;
        Ok(Self { items })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let corpus: Corpus =
            serde_json::from_str(s).map_err(|e| Error::Malformed(e.to_string()))?;
        validate_items(&corpus.items)?;
        Ok(corpus)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus serializes")
    }

    /// Copy of the corpus with `is_positive` set from `class_label == class`.
    pub fn binary_task(&self, class: &str) -> Corpus {
        let items = self
            .items
            .iter()
            .map(|it| Item {
                is_positive: Some(it.class_label.as_deref() == Some(class)),
                ..it.clone()
            })
            .collect();
        Corpus { items }
    }

    pub fn positive_ids(&self) -> HashSet<String> {
        self.items
            .iter()
            .filter(|it| it.is_positive == Some(true))
            .map(|it| it.id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Countdown,
    Stimulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamFrame {
    pub item_id: String,
    pub onset_ms: f64,
    pub exposure_ms: f64,
    pub kind: FrameKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_positive: Option<bool>,
}

/// How the countdown before the first stimulus is timed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Countdown {
    None,
    /// Ticks at the stream's own exposure (RSVP binary tasks).
    StreamRate { count: u32 },
    /// Fixed-duration numerals, e.g. 3-2-1 at 500ms for staircase trials.
    Fixed { count: u32, frame_ms: f64 },
}

impl Countdown {
    pub fn count(&self) -> u32 {
        match *self {
            Countdown::None => 0,
            Countdown::StreamRate { count } | Countdown::Fixed { count, .. } => count,
        }
    }

    fn frame_ms(&self, exposure_ms: f64) -> f64 {
        match *self {
            Countdown::Fixed { frame_ms, .. } => frame_ms,
            _ => exposure_ms,
        }
    }
}

impl Default for Countdown {
    fn default() -> Self {
        Countdown::StreamRate { count: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    pub exposure_ms: f64,
    pub countdown: Countdown,
    /// Minimum spacing between positive onsets.
    pub positive_rate_cap_ms: f64,
    /// Rejection-sampling budget before the constraint-aware fallback.
    pub max_shuffle_attempts: u32,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            exposure_ms: 100.0,
            countdown: Countdown::default(),
            positive_rate_cap_ms: 400.0,
            max_shuffle_attempts: 1000,
        }
    }
}

impl StreamConfig {
    pub fn with_exposure(exposure_ms: f64) -> Self {
        Self {
            exposure_ms,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exposure_ms > 0.0 && self.exposure_ms.is_finite()) {
            return Err(Error::InvalidConfig("exposure_ms must be positive".into()));
        }
        if !(self.positive_rate_cap_ms >= 0.0 && self.positive_rate_cap_ms.is_finite()) {
            return Err(Error::InvalidConfig(
                "positive_rate_cap_ms must be non-negative".into(),
            ));
        }
        if let Countdown::Fixed { frame_ms, .. } = self.countdown {
            if !(frame_ms > 0.0) {
                return Err(Error::InvalidConfig("countdown frame_ms must be positive".into()));
            }
        }
        Ok(())
    }

    /// Smallest index distance two positives may have.
    ///
    /// Two onsets closer than the cap would share a half-open window of width
    /// `positive_rate_cap_ms`, so the distance is `ceil(cap / exposure)`.
    pub fn min_positive_gap(&self) -> usize {
        let ratio = self.positive_rate_cap_ms / self.exposure_ms;
        ((ratio - 1e-9).ceil() as usize).max(1)
    }
}

/// Largest number of positives that fit in `frames` slots with index gap `gap`.
pub fn max_positives(frames: usize, gap: usize) -> usize {
    if frames == 0 {
        0
    } else {
        (frames - 1) / gap + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stream {
    pub id: String,
    pub frames: Vec<StreamFrame>,
    pub seed: u64,
    pub countdown_count: u32,
    pub positive_rate_cap_ms: f64,
}

impl Stream {
    pub fn stimulus_frames(&self) -> impl Iterator<Item = &StreamFrame> {
        self.frames.iter().filter(|f| f.kind == FrameKind::Stimulus)
    }

    pub fn stimulus_count(&self) -> usize {
        self.stimulus_frames().count()
    }

    pub fn exposure_ms(&self) -> f64 {
        self.stimulus_frames().next().map_or(0.0, |f| f.exposure_ms)
    }

    /// End of the last stimulus frame.
    pub fn duration_ms(&self) -> f64 {
        self.stimulus_frames()
            .last()
            .map_or(0.0, |f| f.onset_ms + f.exposure_ms)
    }

    pub fn onsets(&self) -> HashMap<&str, f64> {
        self.stimulus_frames()
            .map(|f| (f.item_id.as_str(), f.onset_ms))
            .collect()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.stimulus_frames().all(|f| f.is_positive.is_some())
    }

    /// Sorted onsets of the ground-truth positives.
    pub fn positive_onsets(&self) -> Vec<f64> {
        self.stimulus_frames()
            .filter(|f| f.is_positive == Some(true))
            .map(|f| f.onset_ms)
            .collect()
    }

    pub fn item_ids(&self) -> Vec<&str> {
        self.stimulus_frames().map(|f| f.item_id.as_str()).collect()
    }

    /// Structural checks: sorted onsets, exact stimulus spacing, unique items.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut prev_onset = f64::NEG_INFINITY;
        let mut k = 0usize;
        let exposure = self.exposure_ms();
        for frame in &self.frames {
            if !(frame.exposure_ms > 0.0) {
                return Err(Error::Malformed(format!(
                    "frame `{}` has non-positive exposure",
                    frame.item_id
                )));
            }
            if frame.onset_ms < prev_onset {
                return Err(Error::Malformed("frames not sorted by onset".into()));
            }
            prev_onset = frame.onset_ms;
            if frame.kind == FrameKind::Stimulus {
                if frame.exposure_ms != exposure || frame.onset_ms != k as f64 * exposure {
                    return Err(Error::Malformed(format!(
                        "stimulus frame {k} is off the {exposure}ms grid"
                    )));
                }
                if !seen.insert(frame.item_id.as_str()) {
                    return Err(Error::DuplicateItem(frame.item_id.clone()));
                }
                k += 1;
            }
        }
        if k == 0 {
            return Err(Error::EmptyItems);
        }
        Ok(())
    }
}

/// Builds one worker's stream: a seeded permutation of `items` that keeps
/// positives at least `positive_rate_cap_ms` apart.
///
/// Random permutations are tried first (up to `max_shuffle_attempts`); if
/// none satisfies the cap, positives are placed on a randomly jittered grid
/// with the minimum spacing and the remaining slots are shuffled.
pub fn build_stream(items: &[Item], config: &StreamConfig, seed: u64) -> Result<Stream> {
    if items.is_empty() {
        return Err(Error::EmptyItems);
    }
    config.validate()?;
    validate_items(items)?;

    let n = items.len();
    let gap = config.min_positive_gap();
    let positives: Vec<usize> = (0..n)
        .filter(|&i| items[i].is_positive == Some(true))
        .collect();
    let max = max_positives(n, gap);
    if positives.len() > max {
        return Err(Error::UnsatisfiableRate {
            positives: positives.len(),
            frames: n,
            max,
            cap_ms: config.positive_rate_cap_ms,
        });
    }

    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut satisfied = false;
    for _ in 0..config.max_shuffle_attempts.max(1) {
        order.shuffle(&mut rng);
        if respects_gap(&order, items, gap) {
            satisfied = true;
            break;
        }
    }
    if !satisfied {
        order = spaced_order(n, &positives, gap, &mut rng);
        debug_assert!(respects_gap(&order, items, gap));
    }

    let countdown_count = config.countdown.count();
    let tick = config.countdown.frame_ms(config.exposure_ms);
    let mut frames = Vec::with_capacity(n + countdown_count as usize);
    for j in 0..countdown_count {
        let remaining = countdown_count - j;
        frames.push(StreamFrame {
            item_id: format!("countdown-{remaining}"),
            onset_ms: -(remaining as f64) * tick,
            exposure_ms: tick,
            kind: FrameKind::Countdown,
            is_positive: None,
        });
    }
    for (k, &idx) in order.iter().enumerate() {
        frames.push(StreamFrame {
            item_id: items[idx].id.clone(),
            onset_ms: k as f64 * config.exposure_ms,
            exposure_ms: config.exposure_ms,
            kind: FrameKind::Stimulus,
            is_positive: items[idx].is_positive,
        });
    }

    Ok(Stream {
        id: format!("s{seed:016x}"),
        frames,
        seed,
        countdown_count,
        positive_rate_cap_ms: config.positive_rate_cap_ms,
    })
}

fn respects_gap(order: &[usize], items: &[Item], gap: usize) -> bool {
    let mut last: Option<usize> = None;
    for (k, &idx) in order.iter().enumerate() {
        if items[idx].is_positive == Some(true) {
            if let Some(prev) = last {
                if k - prev < gap {
                    return false;
                }
            }
            last = Some(k);
        }
    }
    true
}

/// Positive slot `j` sits at `j * gap + offset_j` with non-decreasing random
/// offsets in `[0, slack]`, which keeps every spacing at least `gap`.
fn spaced_order(n: usize, positives: &[usize], gap: usize, rng: &mut Rng) -> Vec<usize> {
    let p = positives.len();
    let mut pos_items = positives.to_vec();
    pos_items.shuffle(rng);
    let is_pos: HashSet<usize> = positives.iter().copied().collect();
    let mut neg_items: Vec<usize> = (0..n).filter(|i| !is_pos.contains(i)).collect();
    neg_items.shuffle(rng);
    if p == 0 {
        return neg_items;
    }

    let slack = n - ((p - 1) * gap + 1);
    let mut offsets: Vec<usize> = (0..p).map(|_| rng.random_range(0..=slack)).collect();
    offsets.sort_unstable();

    let mut order = vec![usize::MAX; n];
    for (j, (&item, off)) in pos_items.iter().zip(offsets).enumerate() {
        order[j * gap + off] = item;
    }
    let mut negs = neg_items.into_iter();
    for slot in order.iter_mut().filter(|s| **s == usize::MAX) {
        *slot = negs.next().expect("slot count matches negatives");
    }
    order
}

/// Draws exactly 200 items (25 positives) from `pool` and builds the
/// qualification stream. Items without ground truth are not eligible.
pub fn build_qualification_stream(pool: &[Item], config: &StreamConfig, seed: u64) -> Result<Stream> {
    let positives: Vec<&Item> = pool.iter().filter(|i| i.is_positive == Some(true)).collect();
    let negatives: Vec<&Item> = pool.iter().filter(|i| i.is_positive == Some(false)).collect();
    let need_neg = QUALIFICATION_LEN - QUALIFICATION_POSITIVES;
    if positives.len() < QUALIFICATION_POSITIVES || negatives.len() < need_neg {
        return Err(Error::InsufficientPool {
            need_items: QUALIFICATION_LEN,
            need_positives: QUALIFICATION_POSITIVES,
            items: positives.len() + negatives.len(),
            positives: positives.len(),
        });
    }
    let mut rng = rng_from_seed(split_seed(seed, 0));
    let mut chosen: Vec<Item> = Vec::with_capacity(QUALIFICATION_LEN);
    chosen.extend(
        rand::seq::index::sample(&mut rng, positives.len(), QUALIFICATION_POSITIVES)
            .into_iter()
            .map(|i| positives[i].clone()),
    );
    chosen.extend(
        rand::seq::index::sample(&mut rng, negatives.len(), need_neg)
            .into_iter()
            .map(|i| negatives[i].clone()),
    );
    build_stream(&chosen, config, split_seed(seed, 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyPlan {
    pub redundancy: u32,
    pub master_seed: u64,
    pub streams: Vec<Stream>,
}

impl RedundancyPlan {
    pub fn stream(&self, id: &str) -> Option<&Stream> {
        self.streams.iter().find(|s| s.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// `r` streams over the same items; stream `w` is seeded with
/// `split_seed(master_seed, w)`.
pub fn plan_redundancy(
    items: &[Item],
    r: u32,
    config: &StreamConfig,
    master_seed: u64,
) -> Result<RedundancyPlan> {
    plan_redundancy_with(items, r, config, master_seed, Execution::default())
}

pub fn plan_redundancy_with(
    items: &[Item],
    r: u32,
    config: &StreamConfig,
    master_seed: u64,
    execution: Execution,
) -> Result<RedundancyPlan> {
    if r < 1 {
        return Err(Error::InvalidConfig("redundancy must be at least 1".into()));
    }
    let build = |w: u32| build_stream(items, config, split_seed(master_seed, w as u64));
    let streams = match execution {
        Execution::Serial => (0..r).map(build).collect::<Result<Vec<_>>>()?,
        Execution::Parallel => (0..r).into_par_iter().map(build).collect::<Result<Vec<_>>>()?,
    };
    Ok(RedundancyPlan {
        redundancy: r,
        master_seed,
        streams,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(n: usize, positives: usize) -> Vec<Item> {
        (0..n)
            .map(|i| Item::new(format!("i{i:04}"), format!("img/{i}.jpg")).positive(i < positives))
            .collect()
    }

    #[test]
    fn no_positives_gives_plain_permutation() {
        let cfg = StreamConfig {
            countdown: Countdown::None,
            ..StreamConfig::default()
        };
        let s = build_stream(&items(100, 0), &cfg, 1).unwrap();
        assert_eq!(s.frames.len(), 100);
        s.validate().unwrap();
    }

    #[test]
    fn fifty_positives_in_hundred_is_unsatisfiable() {
        let err = build_stream(&items(100, 50), &StreamConfig::default(), 3).unwrap_err();
        assert_eq!(
            err,
            Error::UnsatisfiableRate {
                positives: 50,
                frames: 100,
                max: 25,
                cap_ms: 400.0
            }
        );
    }

    #[test]
    fn twenty_five_positives_fit_exactly() {
        let s = build_stream(&items(100, 25), &StreamConfig::default(), 3).unwrap();
        let onsets = s.positive_onsets();
        assert_eq!(onsets.len(), 25);
        assert!(onsets.windows(2).all(|w| w[1] - w[0] >= 400.0));
    }

    #[test]
    fn empty_items_rejected() {
        assert_eq!(
            build_stream(&[], &StreamConfig::default(), 0).unwrap_err(),
            Error::EmptyItems
        );
    }

    #[test]
    fn countdown_ticks_before_first_stimulus() {
        let s = build_stream(&items(10, 1), &StreamConfig::default(), 9).unwrap();
        let cd: Vec<_> = s.frames.iter().take(3).collect();
        assert!(cd.iter().all(|f| f.kind == FrameKind::Countdown && f.exposure_ms == 100.0));
        assert_eq!(cd[0].onset_ms, -300.0);
        assert_eq!(cd[2].onset_ms, -100.0);
        assert_eq!(s.frames[3].onset_ms, 0.0);

        let cfg = StreamConfig {
            countdown: Countdown::Fixed { count: 3, frame_ms: 500.0 },
            ..StreamConfig::default()
        };
        let s = build_stream(&items(10, 1), &cfg, 9).unwrap();
        assert_eq!(s.frames[0].onset_ms, -1500.0);
        assert_eq!(s.frames[0].exposure_ms, 500.0);
    }

    #[test]
    fn gap_rounds_up_for_non_divisible_exposures() {
        let cfg = StreamConfig::with_exposure(150.0);
        assert_eq!(cfg.min_positive_gap(), 3);
        assert_eq!(StreamConfig::with_exposure(100.0).min_positive_gap(), 4);
        assert_eq!(StreamConfig::with_exposure(500.0).min_positive_gap(), 1);
    }

    #[test]
    fn qualification_stream_counts() {
        let pool = items(400, 60);
        let a = build_qualification_stream(&pool, &StreamConfig::default(), 1).unwrap();
        let b = build_qualification_stream(&pool, &StreamConfig::default(), 2).unwrap();
        for s in [&a, &b] {
            assert_eq!(s.stimulus_count(), QUALIFICATION_LEN);
            assert_eq!(s.positive_onsets().len(), QUALIFICATION_POSITIVES);
        }
        assert_ne!(a.item_ids(), b.item_ids());
    }

    #[test]
    fn qualification_needs_enough_pool() {
        let err = build_qualification_stream(&items(100, 30), &StreamConfig::default(), 1);
        assert!(matches!(err, Err(Error::InsufficientPool { .. })));
    }

    #[test]
    fn redundancy_zero_rejected() {
        assert!(plan_redundancy(&items(5, 0), 0, &StreamConfig::default(), 0).is_err());
    }

    #[test]
    fn single_worker_plan_matches_direct_build() {
        let its = items(30, 3);
        let cfg = StreamConfig::default();
        let plan = plan_redundancy(&its, 1, &cfg, 77).unwrap();
        assert_eq!(plan.streams[0], build_stream(&its, &cfg, split_seed(77, 0)).unwrap());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut its = items(3, 0);
        its[2].id = its[0].id.clone();
        assert!(matches!(
            build_stream(&its, &StreamConfig::default(), 0),
            Err(Error::DuplicateItem(_))
        ));
    }
}
