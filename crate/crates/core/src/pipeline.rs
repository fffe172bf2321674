//! End-to-end simulated studies wiring corpus, simulator and decoder.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{plan_redundancy, Item, RedundancyPlan, StreamConfig};
use crate::decoder::{classify, decode, evaluate, speedup, tune_threshold, DecoderConfig, DelayModel, Evaluation, ItemScore, WorkerResponse};
use crate::error::Result;
use crate::seed::split_seed;
use crate::simulator::{simulate_plan, WorkerParams};

/// Synthetic binary corpus: `n_items` items, the first
/// `round(n * positive_fraction)` of them positive.
pub fn synthetic_corpus(n_items: usize, positive_fraction: f64) -> Vec<Item> {
    let n_pos = (n_items as f64 * positive_fraction).round() as usize;
    (0..n_items)
        .map(|i| Item::new(format!("item-{i:05}"), format!("media/item-{i:05}.jpg")).positive(i < n_pos))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinaryStudyConfig {
    pub n_items: usize,
    pub positive_fraction: f64,
    pub redundancy: u32,
    pub stream: StreamConfig,
    pub worker: WorkerParams,
    pub decoder: DecoderConfig,
    pub delay_model: DelayModel,
    /// Precision the tuned threshold must reach.
    pub target_precision: f64,
    /// Conventional per-item labeling time and redundancy for the speedup.
    pub conv_time_per_item_s: f64,
    pub conv_redundancy: u32,
    pub seed: u64,
}

impl Default for BinaryStudyConfig {
    fn default() -> Self {
        Self {
            n_items: 10_000,
            positive_fraction: 0.05,
            redundancy: 5,
            stream: StreamConfig::default(),
            worker: WorkerParams::default(),
            decoder: DecoderConfig::default(),
            delay_model: DelayModel::default(),
            target_precision: 0.95,
            conv_time_per_item_s: 1.7,
            conv_redundancy: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryStudyReport {
    pub n_items: usize,
    pub n_positive: usize,
    pub redundancy: u32,
    pub exposure_ms: f64,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub speedup: f64,
    pub evaluation: Evaluation,
}

pub struct SimulatedData {
    pub items: Vec<Item>,
    pub plan: RedundancyPlan,
    pub responses: Vec<WorkerResponse>,
}

/// Builds the corpus, plan and simulated responses for a study.
pub fn simulate_binary_study(config: &BinaryStudyConfig) -> Result<SimulatedData> {
    let items = synthetic_corpus(config.n_items, config.positive_fraction);
    let plan = plan_redundancy(&items, config.redundancy, &config.stream, split_seed(config.seed, 0))?;
    let responses = simulate_plan(&plan, &config.worker, split_seed(config.seed, 1))?;
    Ok(SimulatedData { items, plan, responses })
}

/// Scores decoded items against ground truth at a threshold tuned for
/// `target_precision`, or at the config threshold when `tune` is false.
pub fn score_study(
    items: &[Item],
    scores: &[ItemScore],
    config: &BinaryStudyConfig,
    tune: bool,
) -> Result<BinaryStudyReport> {
    let truth: HashSet<String> = items.iter().filter(|i| i.is_positive == Some(true)).map(|i| i.id.clone()).collect();
    let universe: HashSet<String> = items.iter().map(|i| i.id.clone()).collect();
    let threshold = if tune {
        tune_threshold(scores, &truth, config.target_precision).threshold
    } else {
        config.decoder.threshold
    };
    let predicted: HashSet<String> = classify(scores, threshold).into_iter().collect();
    let evaluation = evaluate(&predicted, &truth, &universe);
    Ok(BinaryStudyReport {
        n_items: items.len(),
        n_positive: truth.len(),
        redundancy: config.redundancy,
        exposure_ms: config.stream.exposure_ms,
        threshold,
        precision: evaluation.precision,
        recall: evaluation.recall,
        speedup: speedup(
            config.conv_time_per_item_s,
            config.conv_redundancy,
            config.stream.exposure_ms / 1000.0,
            config.redundancy,
        )?,
        evaluation,
    })
}

pub fn run_binary_study(config: &BinaryStudyConfig) -> Result<BinaryStudyReport> {
    let data = simulate_binary_study(config)?;
    let scores = decode(&data.plan, &data.responses, &config.delay_model, &config.decoder)?;
    score_study(&data.items, &scores, config, true)
}

/// A cascade labeler that runs one simulated rapid-stream pass per class:
/// fresh streams over the residual, simulated workers, decoding, and the
/// decoder's configured threshold.
pub fn simulated_labeler<'a>(
    truth: &'a BTreeMap<String, String>,
    config: &'a BinaryStudyConfig,
) -> impl FnMut(&str, &[String]) -> Vec<String> + 'a {
    let mut pass = 0u64;
    move |class, residual| {
        pass += 1;
        let items: Vec<Item> = residual
            .iter()
            .map(|id| Item::new(id.clone(), format!("media/{id}")).positive(truth.get(id).map(String::as_str) == Some(class)))
            .collect();
        let seed = split_seed(config.seed, 1000 + pass);
        let stream_cfg = relaxed_stream_config(&items, &config.stream);
        let run = || -> Result<Vec<String>> {
            let plan = plan_redundancy(&items, config.redundancy, &stream_cfg, split_seed(seed, 0))?;
            let responses = simulate_plan(&plan, &config.worker, split_seed(seed, 1))?;
            let scores = decode(&plan, &responses, &config.delay_model, &config.decoder)?;
            Ok(classify(&scores, config.decoder.threshold))
        };
        run().unwrap_or_default()
    }
}

/// Drops the positive-rate cap when a pass has more positives than it
/// admits; the stream is still shown, just with crowded positives.
fn relaxed_stream_config(items: &[Item], base: &StreamConfig) -> StreamConfig {
    let positives = items.iter().filter(|i| i.is_positive == Some(true)).count();
    let max = crate::corpus::max_positives(items.len(), base.min_positive_gap());
    if positives > max {
        StreamConfig {
            positive_rate_cap_ms: 0.0,
            ..base.clone()
        }
    } else {
        base.clone()
    }
}
