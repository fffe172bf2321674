use std::collections::HashSet;

use perceptkit_core::corpus::{FrameKind, RedundancyPlan, Stream, StreamFrame};
use perceptkit_core::decoder::*;
use perceptkit_core::numeric::logit;
use perceptkit_core::Error;
use proptest::prelude::*;

fn grid_stream(id: &str, items: &[&str], exposure: f64, positives: &[&str]) -> Stream {
    Stream {
        id: id.to_string(),
        frames: items
            .iter()
            .enumerate()
            .map(|(k, it)| StreamFrame {
                item_id: it.to_string(),
                onset_ms: k as f64 * exposure,
                exposure_ms: exposure,
                kind: FrameKind::Stimulus,
                is_positive: Some(positives.contains(it)),
            })
            .collect(),
        seed: 0,
        countdown_count: 0,
        positive_rate_cap_ms: 400.0,
    }
}

fn plan(streams: Vec<Stream>) -> RedundancyPlan {
    RedundancyPlan {
        redundancy: streams.len() as u32,
        master_seed: 0,
        streams,
    }
}

const TEN: [&str; 10] = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];

/// Independent evaluation of the keypress log-ratio without any windowing.
fn unwindowed_llr(delay: f64, m: &DelayModel, c: &DecoderConfig) -> f64 {
    let z = (delay - m.mu_ms) / m.sigma_ms;
    let dens = (-0.5 * z * z).exp() / (m.sigma_ms * (2.0 * std::f64::consts::PI).sqrt());
    let u = c.noise_floor_density;
    ((c.signal_weight_alpha * dens + (1.0 - c.signal_weight_alpha) * u) / u).ln()
}

#[test]
fn silent_workers_leave_the_prior() {
    let p = plan(vec![grid_stream("s", &TEN, 100.0, &[])]);
    let r = WorkerResponse::new("w", "s", vec![]);
    let cfg = DecoderConfig::default();
    let scores = decode(&p, &[r], &DelayModel::default(), &cfg).unwrap();
    assert!(scores.iter().all(|s| s.llr == 0.0 && (s.posterior - cfg.prior).abs() < 1e-15));
}

#[test]
fn single_keypress_points_at_the_item_one_mean_delay_earlier() {
    let p = plan(vec![grid_stream("s", &TEN, 100.0, &[])]);
    let r = WorkerResponse::new("w", "s", vec![478.0]);
    let model = DelayModel::new(378.0, 92.0);
    let scores = decode(&p, &[r], &model, &DecoderConfig::default()).unwrap();

    // brute force over candidate onsets: the Gaussian peaks at delay == mu
    let oracle_best = (0..10)
        .map(|k| (k, 478.0 - k as f64 * 100.0))
        .max_by(|a, b| {
            let d = |x: f64| (-(x - 378.0) * (x - 378.0) / (2.0 * 92.0 * 92.0)).exp();
            d(a.1).total_cmp(&d(b.1))
        })
        .unwrap()
        .0;
    assert_eq!(oracle_best, 1);
    let best = scores.iter().max_by(|a, b| a.posterior.total_cmp(&b.posterior)).unwrap();
    assert_eq!(best.item_id, TEN[oracle_best]);
}

#[test]
fn decode_errors() {
    let p = plan(vec![grid_stream("s", &TEN, 100.0, &[])]);
    let stray = WorkerResponse::new("w", "nope", vec![1.0]);
    assert_eq!(
        decode(&p, &[stray], &DelayModel::default(), &DecoderConfig::default()).unwrap_err(),
        Error::UnknownStream("nope".into())
    );
    assert_eq!(
        decode(&plan(vec![]), &[], &DelayModel::default(), &DecoderConfig::default()).unwrap_err(),
        Error::EmptyPlan
    );
}

#[test]
fn keypress_at_mean_delay_raises_the_item() {
    let p = plan(vec![grid_stream("s", &TEN, 100.0, &[])]);
    let model = DelayModel::default();
    let cfg = DecoderConfig::default();
    let before = decode(&p, &[WorkerResponse::new("w", "s", vec![900.0])], &model, &cfg).unwrap();
    let after = decode(&p, &[WorkerResponse::new("w", "s", vec![900.0, 300.0 + 378.0])], &model, &cfg).unwrap();
    let d = before.iter().find(|s| s.item_id == "d").unwrap();
    let d2 = after.iter().find(|s| s.item_id == "d").unwrap();
    assert!(d2.llr > d.llr);
}

#[test]
fn ranking_by_posterior_matches_llr() {
    let p = plan(vec![grid_stream("s", &TEN, 100.0, &[])]);
    let r = WorkerResponse::new("w", "s", vec![420.0, 700.0, 1150.0]);
    let cfg = DecoderConfig::default();
    let scores = decode(&p, &[r], &DelayModel::default(), &cfg).unwrap();
    for s in &scores {
        let expect = 1.0 / (1.0 + (-(s.llr + logit(cfg.prior))).exp());
        assert!((s.posterior - expect).abs() < 1e-12);
    }
    let mut by_post = scores.clone();
    by_post.sort_by(|a, b| b.posterior.total_cmp(&a.posterior));
    let mut by_llr = scores.clone();
    by_llr.sort_by(|a, b| b.llr.total_cmp(&a.llr));
    assert_eq!(
        by_post.iter().map(|s| &s.item_id).collect::<Vec<_>>(),
        by_llr.iter().map(|s| &s.item_id).collect::<Vec<_>>()
    );
}

proptest! {
    #[test]
    fn windowed_matches_unwindowed_sum(
        n in 1usize..=8,
        presses in prop::collection::vec(526.0f64..930.0, 0..=3),
    ) {
        let items: Vec<&str> = TEN[..n].to_vec();
        let p = plan(vec![grid_stream("s", &items, 100.0, &[])]);
        let model = DelayModel::default();
        let cfg = DecoderConfig::default();
        let scores = decode(&p, &[WorkerResponse::new("w", "s", presses.clone())], &model, &cfg).unwrap();
        for (k, id) in items.iter().enumerate() {
            let brute: f64 = presses.iter().map(|t| unwindowed_llr(t - k as f64 * 100.0, &model, &cfg)).sum();
            let got = scores.iter().find(|s| s.item_id == *id).unwrap().llr;
            prop_assert!((got - brute).abs() < 1e-9, "item {id}: {got} vs {brute}");
        }
    }

    #[test]
    fn decode_ignores_worker_order(
        presses in prop::collection::vec(prop::collection::vec(0.0f64..1500.0, 0..6), 3),
        rot in 0usize..3,
    ) {
        let orders = [TEN, ["j", "i", "h", "g", "f", "e", "d", "c", "b", "a"], ["c", "a", "e", "b", "j", "d", "i", "f", "h", "g"]];
        let streams: Vec<Stream> = orders.iter().enumerate().map(|(w, o)| grid_stream(&format!("s{w}"), o, 100.0, &[])).collect();
        let p = plan(streams);
        let responses: Vec<WorkerResponse> = presses.iter().enumerate()
            .map(|(w, ts)| WorkerResponse::new(format!("w{w}"), format!("s{w}"), ts.clone()))
            .collect();
        let mut rotated = responses.clone();
        rotated.rotate_left(rot);
        rotated.reverse();
        let a = decode(&p, &responses, &DelayModel::default(), &DecoderConfig::default()).unwrap();
        let b = decode(&p, &rotated, &DelayModel::default(), &DecoderConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn posteriors_stay_open_interval(presses in prop::collection::vec(0.0f64..1500.0, 0..40)) {
        let p = plan(vec![grid_stream("s", &TEN, 100.0, &[])]);
        let scores = decode(&p, &[WorkerResponse::new("w", "s", presses)], &DelayModel::default(), &DecoderConfig::default()).unwrap();
        for s in scores {
            prop_assert!(s.llr.is_finite());
            prop_assert!(s.posterior > 0.0 && s.posterior < 1.0);
        }
    }
}

fn scores(pairs: &[(&str, f64)]) -> Vec<ItemScore> {
    pairs
        .iter()
        .map(|(id, p)| ItemScore {
            item_id: id.to_string(),
            llr: logit(*p),
            posterior: *p,
        })
        .collect()
}

#[test]
fn classify_examples() {
    let s = scores(&[("a", 0.9), ("b", 0.1)]);
    assert_eq!(classify(&s, 0.5), ["a"]);
    assert!(classify(&s, 1.0).is_empty());
    // ties at the threshold are excluded; output is (posterior desc, id asc)
    let s = scores(&[("b", 0.7), ("a", 0.7), ("c", 0.5), ("d", 0.95)]);
    assert_eq!(classify(&s, 0.5), ["d", "a", "b"]);
}

#[test]
fn threshold_sweep_is_monotone() {
    let s = scores(&[("a", 0.91), ("b", 0.12), ("c", 0.5), ("d", 0.33), ("e", 0.5), ("f", 0.77)]);
    let mut last = usize::MAX;
    for k in 0..=100 {
        let n = classify(&s, k as f64 / 100.0).len();
        assert!(n <= last);
        last = n;
    }
    assert_eq!(last, 0);
}

#[test]
fn sweep_points_reproduce_with_classify() {
    let s = scores(&[("a", 0.91), ("b", 0.12), ("c", 0.5), ("d", 0.33), ("e", 0.5), ("f", 0.77)]);
    let truth: HashSet<String> = ["a", "c", "f"].iter().map(|x| x.to_string()).collect();
    for point in sweep(&s, &truth) {
        assert_eq!(classify(&s, point.threshold).len(), point.predicted);
    }
    let best = tune_threshold(&s, &truth, 1.0);
    assert_eq!((best.predicted, best.recall), (2, 2.0 / 3.0));
}

fn ids(xs: impl IntoIterator<Item = usize>, prefix: &str) -> HashSet<String> {
    xs.into_iter().map(|i| format!("{prefix}{i}")).collect()
}

#[test]
fn evaluate_examples() {
    let universe = ids(0..1000, "x");
    let truth = ids(0..500, "x");
    let r = evaluate(&truth, &truth, &universe);
    assert_eq!((r.precision, r.recall), (1.0, 1.0));

    let r = evaluate(&HashSet::new(), &truth, &universe);
    assert_eq!((r.precision, r.recall), (1.0, 0.0));

    // 405 of the truth plus 15 negatives
    let mut predicted = ids(0..405, "x");
    predicted.extend(ids(900..915, "x"));
    let r = evaluate(&predicted, &truth, &universe);
    assert!((r.precision - 405.0 / 420.0).abs() < 1e-12);
    assert!((r.recall - 0.81).abs() < 1e-12);
    assert_eq!(r.true_negatives, 1000 - 500 - 15);
}

fn qualification_stream() -> Stream {
    // 200 frames at 100ms, positives every 8th frame
    let names: Vec<String> = (0..200).map(|i| format!("q{i:03}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let pos: Vec<&str> = refs.iter().copied().step_by(8).collect();
    grid_stream("q", &refs, 100.0, &pos)
}

#[test]
fn qualification_arithmetic() {
    let s = qualification_stream();
    let onsets = s.positive_onsets();
    assert_eq!(onsets.len(), 25);

    let mut presses: Vec<f64> = onsets.iter().take(16).map(|o| o + 350.0).collect();
    presses.push(onsets[20] + 650.0); // outside every window
    let q = worker_precision_recall(&s, &WorkerResponse::new("w", "q", presses), 500.0).unwrap();
    assert!((q.recall - 0.64).abs() < 1e-12);
    assert!((q.precision - 16.0 / 17.0).abs() < 1e-12);
    assert!(q.pass);

    let all: Vec<f64> = onsets.iter().map(|o| o + 300.0).collect();
    let q = worker_precision_recall(&s, &WorkerResponse::new("w", "q", all), 500.0).unwrap();
    assert_eq!((q.precision, q.recall, q.pass), (1.0, 1.0, true));

    // before the first positive, far from any onset
    let strays: Vec<f64> = (0..10).map(|i| -5000.0 - i as f64).collect();
    let q = worker_precision_recall(&s, &WorkerResponse::new("w", "q", strays), 500.0).unwrap();
    assert_eq!((q.precision, q.recall, q.pass), (0.0, 0.0, false));

    let q = worker_precision_recall(&s, &WorkerResponse::new("w", "q", vec![]), 500.0).unwrap();
    assert_eq!((q.precision, q.recall, q.pass), (1.0, 0.0, false));
}

#[test]
fn double_press_counts_once() {
    let s = qualification_stream();
    let o = s.positive_onsets()[0];
    let q = worker_precision_recall(&s, &WorkerResponse::new("w", "q", vec![o + 200.0, o + 300.0]), 500.0).unwrap();
    assert_eq!(q.hits, 1);
    assert_eq!(q.precision, 0.5);
}

#[test]
fn speedup_examples() {
    assert!((speedup(1.7, 3, 0.1, 5).unwrap() - 10.2).abs() < 1e-12);
    assert!((speedup(14.33, 3, 2.0, 2).unwrap() - 10.7475).abs() < 1e-12);
    assert!((speedup(1.5, 3, 0.1, 5).unwrap() - 9.0).abs() < 1e-12);
    assert!((speedup(1.9, 3, 0.1, 5).unwrap() - 11.4).abs() < 1e-12);
    for (x, r) in [(0.3, 1), (2.5, 7)] {
        assert_eq!(speedup(x, r, x, r).unwrap(), 1.0);
    }
    assert!(speedup(0.0, 3, 0.1, 5).is_err());
    assert!(speedup(1.0, 3, 0.1, 0).is_err());
}

#[test]
fn calibration_edge_cases() {
    let names: Vec<String> = (0..800).map(|i| format!("c{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let pos: Vec<&str> = refs.iter().copied().step_by(20).collect();
    let s = grid_stream("c", &refs, 100.0, &pos);

    let exact: Vec<f64> = s.positive_onsets().iter().map(|o| o + 400.0).collect();
    let m = fit_delay_model(&[(s.clone(), WorkerResponse::new("w", "c", exact))], 1000.0).unwrap();
    assert_eq!(m.mu_ms, 400.0);
    assert_eq!(m.sigma_ms, SIGMA_FLOOR_MS);

    let few: Vec<f64> = s.positive_onsets().iter().take(10).map(|o| o + 400.0).collect();
    assert_eq!(
        fit_delay_model(&[(s, WorkerResponse::new("w", "c", few))], 1000.0).unwrap_err(),
        Error::InsufficientCalibration { found: 10, needed: 30 }
    );
}

#[test]
fn response_log_round_trip() {
    let rs = vec![
        WorkerResponse::new("w1", "s1", vec![12.5, 900.0]),
        WorkerResponse::new("w2", "s2", vec![0.1]),
    ];
    let text = responses_to_ndjson(&rs);
    assert_eq!(text.lines().next().unwrap(), r#"{"worker":"w1","stream":"s1","t_ms":12.5}"#);
    assert_eq!(responses_from_ndjson(&text).unwrap(), rs);
}
