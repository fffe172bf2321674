use std::collections::{BTreeMap, HashSet};
use std::net::SocketAddr;

use anyhow::{anyhow, bail, Context, Result};
use perceptkit_client::Client;
use perceptkit_core::cascade::{counts_from_labels, run_cascade, CascadeReport, OrderStrategy, PassRecord};
use perceptkit_core::corpus::{Corpus, RedundancyPlan};
use perceptkit_core::decoder::{fit_delay_model, responses_from_ndjson, responses_to_ndjson, speedup, DecoderConfig, DelayModel, Evaluation};
use perceptkit_core::metrics::{bootstrap_ci, hype_inf_score, judgments_from_ndjson, judgments_to_ndjson, HypeTaskConfig};
use perceptkit_core::pipeline::{simulate_binary_study, simulated_labeler, BinaryStudyConfig};
use perceptkit_core::seed::split_seed;
use perceptkit_core::simulator::{simulate_hype_panel, simulate_staircase_panel, EvaluatorParams};
use perceptkit_core::staircase::{blocks_from_records, hype_time_score, trials_to_ndjson, StaircaseConfig};
use perceptkit_protocol::*;
use perceptkit_service::api::{run_cascade_plan, run_decode, run_qualify};
use serde::{Deserialize, Serialize};

use crate::artifacts::{load_config, Artifacts};
use crate::*;

pub async fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let client = cli.server.as_deref().map(Client::new).transpose()?;
    let remote = client.as_ref();
    match cli.command {
        Command::Simulate(a) => simulate(a, remote).await,
        Command::Calibrate(a) => calibrate(a, remote).await,
        Command::Decode(a) => decode(a, remote).await,
        Command::Cascade(a) => cascade(a, remote).await,
        Command::StaircaseSim(a) => staircase_sim(a, remote).await,
        Command::HypeScore(a) => hype_score(a, remote).await,
        Command::Qualify(a) => qualify(a, remote).await,
        Command::Bootstrap(a) => bootstrap(a, remote).await,
        Command::Serve(a) => {
            let addr = SocketAddr::new(a.host, a.port);
            perceptkit_service::run(addr, a.data_dir).await.context("task service")
        }
        Command::Report(a) => crate::report::run(a),
        Command::Session(c) => {
            let client = remote.ok_or_else(|| anyhow!("session commands need --server or PERCEPTKIT_SERVER"))?;
            crate::session::run(c, client).await
        }
    }
}

/// Prints a run's headline result on stdout.
pub fn emit(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Summary of one decoding run; the row source for Table-1 reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub n_items: usize,
    pub n_workers: usize,
    pub redundancy: u32,
    pub exposure_ms: f64,
    pub threshold: f64,
    pub n_predicted: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
    pub conv_time_per_item_s: f64,
    pub conv_redundancy: u32,
    pub speedup: f64,
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    item_id: &'a str,
    llr: f64,
    posterior: f64,
    predicted: bool,
    is_positive: Option<bool>,
}

async fn decode_via(remote: Option<&Client>, req: &DecodeRequest) -> Result<DecodeResponse> {
    Ok(match remote {
        Some(c) => c.decode(req).await?,
        None => run_decode(req)?,
    })
}

fn plan_exposure_ms(plan: &RedundancyPlan) -> Result<f64> {
    plan.streams
        .first()
        .map(|s| s.exposure_ms())
        .ok_or_else(|| anyhow!("redundancy plan has no streams"))
}

/// Writes `decode.json` and `scores.csv` and returns the report.
fn write_decode(
    art: &mut Artifacts,
    plan: &RedundancyPlan,
    resp: &DecodeResponse,
    truth: Option<&HashSet<String>>,
    conv_time_per_item_s: f64,
    conv_redundancy: u32,
) -> Result<DecodeReport> {
    let exposure_ms = plan_exposure_ms(plan)?;
    let report = DecodeReport {
        n_items: resp.scores.len(),
        n_workers: plan.streams.len(),
        redundancy: plan.redundancy,
        exposure_ms,
        threshold: resp.threshold,
        n_predicted: resp.predicted.len(),
        precision: resp.evaluation.map(|e| e.precision),
        recall: resp.evaluation.map(|e| e.recall),
        evaluation: resp.evaluation,
        conv_time_per_item_s,
        conv_redundancy,
        speedup: speedup(conv_time_per_item_s, conv_redundancy, exposure_ms / 1000.0, plan.redundancy)?,
    };
    let predicted: HashSet<&str> = resp.predicted.iter().map(String::as_str).collect();
    art.write_csv(
        "scores.csv",
        resp.scores.iter().map(|s| ScoreRow {
            item_id: &s.item_id,
            llr: s.llr,
            posterior: s.posterior,
            predicted: predicted.contains(s.item_id.as_str()),
            is_positive: truth.map(|t| t.contains(&s.item_id)),
        }),
    )?;
    art.write_json("decode.json", &report)?;
    Ok(report)
}

async fn simulate(a: SimulateArgs, remote: Option<&Client>) -> Result<()> {
    let mut cfg: BinaryStudyConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.n_items, a.n_items);
    set(&mut cfg.positive_fraction, a.positive_fraction);
    set(&mut cfg.redundancy, a.redundancy);
    set(&mut cfg.stream.exposure_ms, a.exposure_ms);
    set(&mut cfg.target_precision, a.target_precision);
    set(&mut cfg.seed, a.seed);

    let mut art = Artifacts::create(&a.common.out_dir, "simulate", &cfg)?;
    art.seed("master", cfg.seed).server(remote.map(Client::base_url));
    let data = simulate_binary_study(&cfg)?;
    let corpus = Corpus::new(data.items)?;
    let truth = corpus.positive_ids();
    art.write_text("corpus.json", &corpus.to_json())?;
    art.write_text("plan.json", &data.plan.to_json())?;
    art.write_text("responses.ndjson", &responses_to_ndjson(&data.responses))?;

    let req = DecodeRequest {
        plan: data.plan,
        responses: data.responses,
        delay_model: cfg.delay_model,
        config: cfg.decoder,
        truth: Some(truth.iter().cloned().collect()),
        target_precision: Some(cfg.target_precision),
    };
    let resp = decode_via(remote, &req).await?;
    let report = write_decode(&mut art, &req.plan, &resp, Some(&truth), cfg.conv_time_per_item_s, cfg.conv_redundancy)?;
    art.finish()?;
    emit(&report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateConfig {
    pub match_window_ms: f64,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            match_window_ms: DecoderConfig::default().match_window_ms,
        }
    }
}

fn read_plan_and_responses(
    art: &mut Artifacts,
    plan: &std::path::Path,
    responses: &std::path::Path,
) -> Result<(RedundancyPlan, Vec<perceptkit_core::decoder::WorkerResponse>)> {
    let plan = RedundancyPlan::from_json(&art.read_input(plan)?).context("parsing plan")?;
    let responses = responses_from_ndjson(&art.read_input(responses)?).context("parsing responses")?;
    Ok((plan, responses))
}

async fn calibrate(a: CalibrateArgs, remote: Option<&Client>) -> Result<()> {
    let mut cfg: CalibrateConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.match_window_ms, a.match_window_ms);
    let mut art = Artifacts::create(&a.common.out_dir, "calibrate", &cfg)?;
    art.server(remote.map(Client::base_url));
    let (plan, responses) = read_plan_and_responses(&mut art, &a.plan, &a.responses)?;
    let calibration = responses
        .into_iter()
        .map(|response| {
            let stream = plan
                .stream(&response.stream_id)
                .ok_or_else(|| anyhow!("response for unknown stream `{}`", response.stream_id))?
                .clone();
            Ok(CalibrationPair { stream, response })
        })
        .collect::<Result<Vec<_>>>()?;
    let model = match remote {
        Some(c) => {
            c.calibrate(&CalibrateRequest {
                calibration,
                match_window_ms: Some(cfg.match_window_ms),
            })
            .await?
        }
        None => {
            let pairs: Vec<_> = calibration.into_iter().map(|p| (p.stream, p.response)).collect();
            fit_delay_model(&pairs, cfg.match_window_ms)?
        }
    };
    art.write_json("delay_model.json", &model)?;
    art.finish()?;
    emit(&model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub decoder: DecoderConfig,
    pub delay_model: DelayModel,
    /// With ground truth, the threshold is tuned for this precision.
    pub target_precision: Option<f64>,
    pub conv_time_per_item_s: f64,
    pub conv_redundancy: u32,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        let study = BinaryStudyConfig::default();
        Self {
            decoder: study.decoder,
            delay_model: study.delay_model,
            target_precision: Some(study.target_precision),
            conv_time_per_item_s: study.conv_time_per_item_s,
            conv_redundancy: study.conv_redundancy,
        }
    }
}

async fn decode(a: DecodeArgs, remote: Option<&Client>) -> Result<()> {
    let mut cfg: DecodeConfig = load_config(a.common.config.as_deref())?;
    if let Some(t) = a.threshold {
        cfg.decoder.threshold = t;
        cfg.target_precision = None;
    }
    if a.target_precision.is_some() {
        cfg.target_precision = a.target_precision;
    }
    set(&mut cfg.decoder.prior, a.prior);
    set(&mut cfg.conv_time_per_item_s, a.conv_time_s);
    set(&mut cfg.conv_redundancy, a.conv_redundancy);

    // the delay model file is an input, so it is read before the manifest config is fixed
    let mut pre = Vec::new();
    if let Some(p) = &a.delay_model {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.delay_model = serde_json::from_str(&text).context("parsing delay model")?;
        pre.push(p.clone());
    }
    let mut art = Artifacts::create(&a.common.out_dir, "decode", &cfg)?;
    art.server(remote.map(Client::base_url));
    for p in &pre {
        art.read_input(p)?;
    }
    let (plan, responses) = read_plan_and_responses(&mut art, &a.plan, &a.responses)?;
    let truth = match &a.corpus {
        Some(p) => Some(Corpus::from_json(&art.read_input(p)?).context("parsing corpus")?.positive_ids()),
        None => None,
    };
    let req = DecodeRequest {
        plan,
        responses,
        delay_model: cfg.delay_model,
        config: cfg.decoder,
        truth: truth.as_ref().map(|t| t.iter().cloned().collect()),
        target_precision: cfg.target_precision,
    };
    let resp = decode_via(remote, &req).await?;
    let report = write_decode(&mut art, &req.plan, &resp, truth.as_ref(), cfg.conv_time_per_item_s, cfg.conv_redundancy)?;
    art.finish()?;
    emit(&report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub strategy: OrderStrategy,
    pub labeler: LabelerArg,
    pub redundancy: u32,
    pub exposure_ms: f64,
    /// Worker, decoder and seed settings for the simulated labeler.
    pub study: BinaryStudyConfig,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            strategy: OrderStrategy::ClassOptimized,
            labeler: LabelerArg::Perfect,
            redundancy: 5,
            exposure_ms: 100.0,
            study: BinaryStudyConfig::default(),
        }
    }
}

#[derive(Serialize)]
struct AssignmentRow<'a> {
    item_id: &'a str,
    assigned: Option<&'a str>,
    true_class: &'a str,
}

#[derive(Serialize)]
struct CascadeOutput<'a> {
    #[serde(flatten)]
    report: &'a CascadeReport,
    passes: &'a [PassRecord],
    /// Assigned items whose class matches the corpus label.
    correct_assignments: usize,
}

async fn cascade(a: CascadeArgs, remote: Option<&Client>) -> Result<()> {
    let mut cfg: CascadeConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.labeler, a.labeler);
    set(&mut cfg.redundancy, a.redundancy);
    set(&mut cfg.exposure_ms, a.exposure_ms);
    set(&mut cfg.study.seed, a.seed);
    match a.strategy {
        Some(StrategyArg::Optimized) => cfg.strategy = OrderStrategy::ClassOptimized,
        Some(StrategyArg::Random) => cfg.strategy = OrderStrategy::BaselineRandom { seed: cfg.study.seed },
        None => {}
    }
    if let (Some(seed), OrderStrategy::BaselineRandom { .. }) = (a.seed, cfg.strategy) {
        cfg.strategy = OrderStrategy::BaselineRandom { seed };
    }
    cfg.study.redundancy = cfg.redundancy;
    cfg.study.stream.exposure_ms = cfg.exposure_ms;

    let mut art = Artifacts::create(&a.common.out_dir, "cascade", &cfg)?;
    art.seed("master", cfg.study.seed).server(remote.map(Client::base_url));
    if let OrderStrategy::BaselineRandom { seed } = cfg.strategy {
        art.seed("order", seed);
    }
    let corpus = Corpus::from_json(&art.read_input(&a.corpus)?).context("parsing corpus")?;
    let mut truth = BTreeMap::new();
    for item in &corpus.items {
        let label = item
            .class_label
            .as_ref()
            .ok_or_else(|| anyhow!("item `{}` has no class_label", item.id))?;
        truth.insert(item.id.clone(), label.clone());
    }
    let counts = counts_from_labels(truth.values().map(String::as_str));
    let req = CascadePlanRequest {
        counts,
        strategy: cfg.strategy,
        redundancy: cfg.redundancy,
        exposure_ms: cfg.exposure_ms,
    };
    let plan = match remote {
        Some(c) => c.cascade_plan(&req).await?,
        None => run_cascade_plan(&req)?,
    };
    art.write_json("cascade_plan.json", &plan)?;

    let ids: Vec<String> = corpus.items.iter().map(|i| i.id.clone()).collect();
    let result = match cfg.labeler {
        LabelerArg::Perfect => run_cascade(&ids, &plan.plan, |class, residual| {
            residual.iter().filter(|id| truth[*id] == class).cloned().collect()
        })?,
        LabelerArg::Simulated => run_cascade(&ids, &plan.plan, simulated_labeler(&truth, &cfg.study))?,
    };
    let report = result.report();
    let correct_assignments = report.assignments.iter().filter(|(id, c)| truth[*id] == **c).count();
    art.write_csv(
        "assignments.csv",
        truth.iter().map(|(id, t)| AssignmentRow {
            item_id: id,
            assigned: report.assignments.get(id).map(String::as_str),
            true_class: t,
        }),
    )?;
    art.write_csv("passes.csv", &result.passes)?;
    let out = CascadeOutput {
        report: &report,
        passes: &result.passes,
        correct_assignments,
    };
    art.write_json("cascade.json", &out)?;
    art.finish()?;
    emit(&serde_json::json!({
        "class_order": plan.plan.class_order,
        "item_views": report.item_views,
        "worker_seconds": report.worker_seconds,
        "dollars": report.dollars,
        "unassigned": report.unassigned.len(),
        "correct_assignments": correct_assignments,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaircaseSimConfig {
    pub staircase: StaircaseConfig,
    pub evaluator: EvaluatorParams,
    pub n_evaluators: usize,
    pub seed: u64,
}

impl Default for StaircaseSimConfig {
    fn default() -> Self {
        Self {
            staircase: StaircaseConfig::default(),
            evaluator: EvaluatorParams::default(),
            n_evaluators: HypeTaskConfig::default().n_evaluators,
            seed: 0,
        }
    }
}

#[derive(Serialize)]
struct TimeScoreRow<'a> {
    evaluator_id: &'a str,
    score_ms: f64,
    block_modes_ms: String,
}

async fn staircase_sim(a: StaircaseSimArgs, remote: Option<&Client>) -> Result<()> {
    let mut cfg: StaircaseSimConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.n_evaluators, a.evaluators);
    set(&mut cfg.evaluator.threshold_tau_ms, a.tau_ms);
    set(&mut cfg.staircase.block_len, a.block_len);
    set(&mut cfg.staircase.blocks_per_evaluator, a.blocks);
    set(&mut cfg.seed, a.seed);
    cfg.staircase.validate()?;

    let mut art = Artifacts::create(&a.common.out_dir, "staircase-sim", &cfg)?;
    art.seed("master", cfg.seed).server(remote.map(Client::base_url));
    let trials = simulate_staircase_panel(cfg.n_evaluators, &cfg.staircase, &cfg.evaluator, cfg.seed)?;
    art.write_text("trials.ndjson", &trials_to_ndjson(&trials))?;
    let score = match remote {
        Some(c) => {
            c.time_score(&TimeScoreRequest {
                trials,
                config: cfg.staircase.clone(),
            })
            .await?
        }
        None => hype_time_score(&blocks_from_records(&trials), &cfg.staircase)?,
    };
    art.write_csv(
        "time_score.csv",
        score.per_evaluator.iter().map(|e| TimeScoreRow {
            evaluator_id: &e.evaluator_id,
            score_ms: e.score_ms,
            block_modes_ms: e.block_modes_ms.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        }),
    )?;
    art.write_json("time_score.json", &score)?;
    art.finish()?;
    emit(&serde_json::json!({
        "n_evaluators": score.per_evaluator.len(),
        "model_score_ms": score.model_score_ms,
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypeScoreConfig {
    pub task: HypeTaskConfig,
    /// Evaluator model used with `simulate_evaluators`.
    pub evaluator: EvaluatorParams,
    pub simulate_evaluators: Option<usize>,
}

#[derive(Serialize)]
struct EvaluatorRow<'a> {
    evaluator_id: &'a str,
    n_judgments: usize,
    error_pct: f64,
    fakes_error_pct: f64,
    reals_error_pct: f64,
}

async fn hype_score(a: HypeScoreArgs, remote: Option<&Client>) -> Result<()> {
    let mut cfg: HypeScoreConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.task.bootstrap_iters, a.bootstrap_iters);
    set(&mut cfg.task.ci_level, a.ci_level);
    set(&mut cfg.task.seed, a.seed);
    if a.simulate.is_some() {
        cfg.simulate_evaluators = a.simulate;
    }
    if a.judgments.is_some() {
        cfg.simulate_evaluators = None;
    }

    let mut art = Artifacts::create(&a.common.out_dir, "hype-score", &cfg)?;
    art.seed("master", cfg.task.seed).server(remote.map(Client::base_url));
    let sets = match (&a.judgments, cfg.simulate_evaluators) {
        (Some(p), _) => judgments_from_ndjson(&art.read_input(p)?).context("parsing judgments")?,
        (None, Some(n)) => {
            let panel_seed = split_seed(cfg.task.seed, 1);
            art.seed("panel", panel_seed);
            let sets = simulate_hype_panel(n, cfg.task.images_per_task, cfg.task.fake_fraction, &cfg.evaluator, panel_seed)?;
            art.write_text("judgments.ndjson", &judgments_to_ndjson(&sets))?;
            sets
        }
        (None, None) => bail!("either --judgments or --simulate is required"),
    };
    let score = match remote {
        Some(c) => {
            c.hype_score(&HypeScoreRequest {
                sets: sets.clone(),
                config: cfg.task.clone(),
            })
            .await?
        }
        None => hype_inf_score(&sets, &cfg.task)?,
    };
    art.write_csv(
        "per_evaluator.csv",
        sets.iter().map(|s| {
            let (error_pct, fakes_error_pct, reals_error_pct) = s.error_pcts();
            EvaluatorRow {
                evaluator_id: &s.evaluator_id,
                n_judgments: s.judgments.len(),
                error_pct,
                fakes_error_pct,
                reals_error_pct,
            }
        }),
    )?;
    art.write_json("score.json", &score)?;
    art.finish()?;
    emit(&score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualifyConfig {
    pub threshold: f64,
}

impl Default for QualifyConfig {
    fn default() -> Self {
        Self {
            threshold: HypeTaskConfig::default().qual_threshold,
        }
    }
}

#[derive(Serialize)]
struct QualifyRow<'a> {
    evaluator_id: &'a str,
    pass: bool,
    n_real: usize,
    n_fake: usize,
    reals_correct: usize,
    fakes_correct: usize,
    chance_pass_joint: f64,
    chance_pass_pooled: f64,
}

async fn qualify(a: QualifyArgs, remote: Option<&Client>) -> Result<()> {
    let mut cfg: QualifyConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.threshold, a.threshold);
    let mut art = Artifacts::create(&a.common.out_dir, "qualify", &cfg)?;
    art.server(remote.map(Client::base_url));
    let sets = judgments_from_ndjson(&art.read_input(&a.judgments)?).context("parsing judgments")?;
    let req = QualifyRequest {
        sets,
        threshold: Some(cfg.threshold),
    };
    let resp = match remote {
        Some(c) => c.qualify(&req).await?,
        None => run_qualify(&req)?,
    };
    art.write_csv(
        "qualify.csv",
        resp.results.iter().map(|r| QualifyRow {
            evaluator_id: &r.evaluator_id,
            pass: r.pass,
            n_real: r.tally.n_real,
            n_fake: r.tally.n_fake,
            reals_correct: r.tally.reals_correct,
            fakes_correct: r.tally.fakes_correct,
            chance_pass_joint: r.chance_pass.joint,
            chance_pass_pooled: r.chance_pass.pooled,
        }),
    )?;
    art.write_json("qualify.json", &resp)?;
    art.finish()?;
    let passed = resp.results.iter().filter(|r| r.pass).count();
    emit(&serde_json::json!({ "threshold": resp.threshold, "evaluators": resp.results.len(), "passed": passed }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub iters: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        let d = HypeTaskConfig::default();
        Self {
            iters: d.bootstrap_iters,
            level: d.ci_level,
            seed: d.seed,
        }
    }
}

/// A JSON array of numbers, or one number per line (`#` starts a comment).
pub fn parse_scores(text: &str) -> Result<Vec<f64>> {
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text).context("parsing score array");
    }
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<f64>().with_context(|| format!("bad score `{l}`")))
        .collect()
}

async fn bootstrap(a: BootstrapArgs, remote: Option<&Client>) -> Result<()> {
    let mut cfg: BootstrapConfig = load_config(a.common.config.as_deref())?;
    set(&mut cfg.iters, a.iters);
    set(&mut cfg.level, a.level);
    set(&mut cfg.seed, a.seed);
    let mut art = Artifacts::create(&a.common.out_dir, "bootstrap", &cfg)?;
    art.seed("master", cfg.seed).server(remote.map(Client::base_url));
    let scores = parse_scores(&art.read_input(&a.scores)?)?;
    let ci = match remote {
        Some(c) => {
            c.bootstrap(&BootstrapRequest {
                scores,
                iters: Some(cfg.iters),
                level: Some(cfg.level),
                seed: cfg.seed,
            })
            .await?
        }
        None => bootstrap_ci(&scores, cfg.iters, cfg.level, cfg.seed)?,
    };
    art.write_json("bootstrap.json", &ci)?;
    art.finish()?;
    emit(&ci)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_parse_from_lines_or_json() {
        assert_eq!(parse_scores("1\n 2.5 # note\n\n3").unwrap(), [1.0, 2.5, 3.0]);
        assert_eq!(parse_scores(" [1, 2]").unwrap(), [1.0, 2.0]);
        assert!(parse_scores("x").is_err());
    }

    #[test]
    fn decode_defaults_tune_for_precision() {
        let d = DecodeConfig::default();
        assert_eq!(d.target_precision, Some(0.95));
        assert_eq!((d.conv_time_per_item_s, d.conv_redundancy), (1.7, 3));
    }
}
