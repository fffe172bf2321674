//! Untimed real/fake error rates, evaluator qualification and payment, and
//! the statistics used to compare models: percentile bootstrap intervals,
//! one-way ANOVA, pooled t-tests and Spearman correlation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{f_sf, mean, quantile_sorted, sample_std, t_two_sided};
use crate::seed::{rng_from_seed, split_seed};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub item_id: String,
    pub is_fake: bool,
    pub judged_fake: bool,
}

impl Judgment {
    pub fn new(item_id: impl Into<String>, is_fake: bool, judged_fake: bool) -> Self {
        Self {
            item_id: item_id.into(),
            is_fake,
            judged_fake,
        }
    }

    pub fn correct(&self) -> bool {
        self.is_fake == self.judged_fake
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentSet {
    pub evaluator_id: String,
    pub judgments: Vec<Judgment>,
}

/// Per-class tallies of one judgment set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub n_fake: usize,
    pub n_real: usize,
    pub fakes_correct: usize,
    pub reals_correct: usize,
}

impl Tally {
    pub fn correct(&self) -> usize {
        self.fakes_correct + self.reals_correct
    }

    pub fn total(&self) -> usize {
        self.n_fake + self.n_real
    }
}

impl JudgmentSet {
    pub fn tally(&self) -> Tally {
        let mut t = Tally::default();
        for j in &self.judgments {
            if j.is_fake {
                t.n_fake += 1;
                t.fakes_correct += j.correct() as usize;
            } else {
                t.n_real += 1;
                t.reals_correct += j.correct() as usize;
            }
        }
        t
    }

    /// Overall, fake-judged-real and real-judged-fake error percentages.
    pub fn error_pcts(&self) -> (f64, f64, f64) {
        let t = self.tally();
        let pct = |wrong: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * wrong as f64 / n as f64 };
        (
            pct(t.total() - t.correct(), t.total()),
            pct(t.n_fake - t.fakes_correct, t.n_fake),
            pct(t.n_real - t.reals_correct, t.n_real),
        )
    }
}

/// One line of the judgment log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub evaluator: String,
    pub item_id: String,
    pub is_fake: bool,
    pub judged_fake: bool,
}

pub fn judgments_to_ndjson(sets: &[JudgmentSet]) -> String {
    let mut out = String::new();
    for set in sets {
        for j in &set.judgments {
            let rec = JudgmentRecord {
                evaluator: set.evaluator_id.clone(),
                item_id: j.item_id.clone(),
                is_fake: j.is_fake,
                judged_fake: j.judged_fake,
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

/// Parses a judgment log, grouping by evaluator in first-seen order.
pub fn judgments_from_ndjson(s: &str) -> Result<Vec<JudgmentSet>> {
    let mut sets: Vec<JudgmentSet> = Vec::new();
    for (i, line) in s.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JudgmentRecord =
            serde_json::from_str(line).map_err(|e| Error::Malformed(format!("line {}: {e}", i + 1)))?;
        let j = Judgment::new(rec.item_id, rec.is_fake, rec.judged_fake);
        match sets.iter_mut().find(|s| s.evaluator_id == rec.evaluator) {
            Some(set) => set.judgments.push(j),
            None => sets.push(JudgmentSet {
                evaluator_id: rec.evaluator,
                judgments: vec![j],
            }),
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypeTaskConfig {
    pub k_samples: usize,
    pub n_evaluators: usize,
    pub images_per_task: usize,
    pub fake_fraction: f64,
    pub bootstrap_iters: usize,
    pub ci_level: f64,
    pub qual_threshold: f64,
    pub pay_base_usd: f64,
    pub pay_per_correct_usd: f64,
    pub seed: u64,
}

impl Default for HypeTaskConfig {
    fn default() -> Self {
        Self {
            k_samples: 5000,
            n_evaluators: 30,
            images_per_task: 100,
            fake_fraction: 0.5,
            bootstrap_iters: 10_000,
            ci_level: 0.95,
            qual_threshold: 0.65,
            pay_base_usd: 1.00,
            pay_per_correct_usd: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypeScore {
    pub overall_error_pct: f64,
    pub fakes_error_pct: f64,
    pub reals_error_pct: f64,
    pub n_evaluators: usize,
    pub std: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Mean per-evaluator error rates with a bootstrap interval on the overall
/// rate. A single evaluator gets a zero-width interval.
pub fn hype_inf_score(sets: &[JudgmentSet], config: &HypeTaskConfig) -> Result<HypeScore> {
    if sets.is_empty() {
        return Err(Error::TooFewValues { needed: 1, got: 0 });
    }
    if let Some(s) = sets.iter().find(|s| s.judgments.is_empty()) {
        return Err(Error::Malformed(format!("evaluator `{}` has no judgments", s.evaluator_id)));
    }
    let per: Vec<(f64, f64, f64)> = sets.iter().map(JudgmentSet::error_pcts).collect();
    let overall: Vec<f64> = per.iter().map(|p| p.0).collect();
    let fakes = mean(&per.iter().map(|p| p.1).collect::<Vec<_>>());
    let reals = mean(&per.iter().map(|p| p.2).collect::<Vec<_>>());

    let ci = if overall.len() >= 2 {
        bootstrap_ci(&overall, config.bootstrap_iters, config.ci_level, config.seed)?
    } else {
        BootstrapCi {
            mean: overall[0],
            std: 0.0,
            lo: overall[0],
            hi: overall[0],
        }
    };
    Ok(HypeScore {
        overall_error_pct: mean(&overall),
        fakes_error_pct: fakes,
        reals_error_pct: reals,
        n_evaluators: sets.len(),
        std: ci.std,
        ci_lo: ci.lo,
        ci_hi: ci.hi,
    })
}

/// Overall error implied by per-class error rates and class counts.
pub fn combine_class_errors(fakes_error_pct: f64, n_fake: usize, reals_error_pct: f64, n_real: usize) -> f64 {
    (fakes_error_pct * n_fake as f64 + reals_error_pct * n_real as f64) / (n_fake + n_real) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Percentile bootstrap of the mean.
///
/// Resample `i` draws from a generator seeded with `split_seed(seed, i)`, so
/// the interval is identical however the iterations are scheduled.
pub fn bootstrap_ci(scores: &[f64], iters: usize, level: f64, seed: u64) -> Result<BootstrapCi> {
    if scores.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: scores.len(),
        });
    }
    if iters == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig("bootstrap needs iters > 0 and level in (0, 1)".into()));
    }
    let m = mean(scores);
    if scores.iter().all(|&x| x == scores[0]) {
        return Ok(BootstrapCi {
            mean: scores[0],
            std: 0.0,
            lo: scores[0],
            hi: scores[0],
        });
    }
    let n = scores.len();
    let mut means: Vec<f64> = (0..iters)
        .into_par_iter()
        .map(|i| {
            use rand::Rng as _;
            let mut rng = rng_from_seed(split_seed(seed, i as u64));
            (0..n).map(|_| scores[rng.random_range(0..n)]).sum::<f64>() / n as f64
        })
        .collect();
    let std = sample_std(&means);
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapCi {
        mean: m,
        std,
        lo: quantile_sorted(&means, tail),
        hi: quantile_sorted(&means, 1.0 - tail),
    })
}

fn required_correct(threshold: f64, n: usize) -> usize {
    // tolerate representation error in products like 0.65 * 100
    ((threshold * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Passes iff both classes are judged correctly at least `ceil(threshold * n)` times.
pub fn qualify(set: &JudgmentSet, threshold: f64) -> Result<bool> {
    let t = set.tally();
    if t.n_fake == 0 || t.n_real == 0 {
        return Err(Error::SingleClass(set.evaluator_id.clone()));
    }
    Ok(t.reals_correct >= required_correct(threshold, t.n_real)
        && t.fakes_correct >= required_correct(threshold, t.n_fake))
}

/// `P(Bin(n, 1/2) >= k)` by exact summation of the probability mass.
pub fn binomial_half_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // pmf(j) = C(n, j) / 2^n, built by the ratio recurrence from pmf(0)
    let mut pmf = 0.5f64.powi(n as i32);
    let mut tail = 0.0;
    for j in 0..=n {
        if j >= k {
            tail += pmf;
        }
        pmf *= (n - j) as f64 / (j + 1) as f64;
    }
    tail
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuessPassProbability {
    /// Both classes must clear the threshold separately.
    pub joint: f64,
    /// All judgments pooled against one threshold.
    pub pooled: f64,
}

/// Probability that a coin-flipping evaluator passes qualification.
pub fn random_pass_probability(n_real: usize, n_fake: usize, threshold: f64) -> GuessPassProbability {
    let joint = binomial_half_tail(n_real, required_correct(threshold, n_real))
        * binomial_half_tail(n_fake, required_correct(threshold, n_fake));
    let n = n_real + n_fake;
    GuessPassProbability {
        joint,
        pooled: binomial_half_tail(n, required_correct(threshold, n)),
    }
}

pub fn payment(set: &JudgmentSet, config: &HypeTaskConfig) -> f64 {
    config.pay_base_usd + config.pay_per_correct_usd * set.tally().correct() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
}

pub fn anova_f(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: groups.len(),
        });
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::TooFewValues { needed: 2, got: g.len() });
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand) * (m - grand);
        ss_within += g.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    }
    if ss_within == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    Ok(AnovaResult {
        f,
        df_between,
        df_within,
        p: f_sf(f, df_between as f64, df_within as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// Two-sample t-test with pooled variance, two-sided.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::TooFewValues { needed: 2, got: s.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = a.len() + b.len() - 2;
    let ss = |xs: &[f64]| {
        let m = mean(xs);
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    };
    let pooled = (ss(a) + ss(b)) / df as f64;
    let diff = mean(a) - mean(b);
    if pooled == 0.0 {
        if diff == 0.0 {
            return Ok(TTestResult { t: 0.0, df, p: 1.0 });
        }
        return Err(Error::DegenerateVariance);
    }
    let t = diff / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TTestResult {
        t,
        df,
        p: t_two_sided(t, df as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub a: usize,
    pub b: usize,
    pub t: f64,
    pub df: usize,
    pub p: f64,
    /// Bonferroni-adjusted, capped at 1.
    pub p_adjusted: f64,
}

/// All pairwise pooled t-tests between groups with Bonferroni correction.
/// Used in place of Tukey's HSD for post-hoc separability.
pub fn pairwise_t_tests(groups: &[Vec<f64>]) -> Result<Vec<PairwiseComparison>> {
    let m = groups.len() * groups.len().saturating_sub(1) / 2;
    let mut out = Vec::with_capacity(m);
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let r = t_test(&groups[a], &groups[b])?;
            out.push(PairwiseComparison {
                a,
                b,
                t: r.t,
                df: r.df,
                p: r.p,
                p_adjusted: (r.p * m as f64).min(1.0),
            });
        }
    }
    Ok(out)
}

/// Ranks starting at 1, ties get their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::TooFewValues { needed: 2, got: x.len() });
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(id: &str, reals: (usize, usize), fakes: (usize, usize)) -> JudgmentSet {
        // (correct, total) per class
        let mut judgments = Vec::new();
        for i in 0..reals.1 {
            judgments.push(Judgment::new(format!("r{i}"), false, i >= reals.0));
        }
        for i in 0..fakes.1 {
            judgments.push(Judgment::new(format!("f{i}"), true, i < fakes.0));
        }
        JudgmentSet {
            evaluator_id: id.into(),
            judgments,
        }
    }

    #[test]
    fn qualification_boundaries() {
        assert!(!qualify(&set("a", (40, 50), (20, 50)), 0.65).unwrap());
        assert!(qualify(&set("a", (33, 50), (33, 50)), 0.65).unwrap());
        assert!(!qualify(&set("a", (32, 50), (33, 50)), 0.65).unwrap());
        assert!(qualify(&set("a", (50, 50), (50, 50)), 0.65).unwrap());
        assert!(matches!(qualify(&set("a", (5, 5), (0, 0)), 0.65), Err(Error::SingleClass(_))));
    }

    #[test]
    fn payment_arithmetic() {
        let cfg = HypeTaskConfig::default();
        assert!((payment(&set("a", (40, 50), (40, 50)), &cfg) - 2.60).abs() < 1e-12);
        assert_eq!(payment(&set("a", (0, 50), (0, 50)), &cfg), 1.00);
        assert!((payment(&set("a", (50, 50), (50, 50)), &cfg) - 3.00).abs() < 1e-12);
    }

    #[test]
    fn all_correct_scores_zero() {
        let sets: Vec<_> = (0..5).map(|i| set(&format!("e{i}"), (50, 50), (50, 50))).collect();
        let s = hype_inf_score(&sets, &HypeTaskConfig::default()).unwrap();
        assert_eq!(s.overall_error_pct, 0.0);
        assert_eq!((s.ci_lo, s.ci_hi, s.std), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_evaluator_list_rejected() {
        assert!(hype_inf_score(&[], &HypeTaskConfig::default()).is_err());
    }

    #[test]
    fn threshold_zero_always_passes() {
        let p = random_pass_probability(50, 50, 0.0);
        assert_eq!(p.joint, 1.0);
        assert_eq!(p.pooled, 1.0);
    }

    #[test]
    fn anova_hand_example() {
        let r = anova_f(&[vec![1., 2., 3.], vec![4., 5., 6.]]).unwrap();
        assert!((r.f - 13.5).abs() < 1e-12);
        assert_eq!((r.df_between, r.df_within), (1, 4));
        let r = anova_f(&[vec![1., 2.], vec![1., 2.]]).unwrap();
        assert_eq!(r.f, 0.0);
        assert_eq!(anova_f(&[vec![3., 3.], vec![3., 3.]]).unwrap_err(), Error::DegenerateVariance);
    }

    #[test]
    fn t_test_hand_example() {
        let r = t_test(&[1., 2., 3., 4.], &[3., 4., 5., 6.]).unwrap();
        // pooled variance 5/3, t = -2 / sqrt(5/3 * 1/2)
        assert!((r.t - (-2.0 / (5.0f64 / 6.0).sqrt())).abs() < 1e-12);
        assert_eq!(r.df, 6);
        let same = t_test(&[1., 2., 3.], &[1., 2., 3.]).unwrap();
        assert_eq!((same.t, same.p), (0.0, 1.0));
        assert_eq!(t_test(&[1., 1.], &[2., 2.]).unwrap_err(), Error::DegenerateVariance);
    }

    #[test]
    fn spearman_fixtures() {
        assert_eq!(spearman(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 1.0);
        assert_eq!(spearman(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0);
        assert_eq!(spearman(&[1., 2., 3.], &[1., 3., 2.]).unwrap(), 0.5);
        assert_eq!(spearman(&[1., 2.], &[1.]).unwrap_err(), Error::LengthMismatch(2, 1));
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[10., 20., 20., 5.]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn pairwise_adjustment_caps_at_one() {
        let g = vec![vec![1., 2., 3.], vec![1., 2., 3.5], vec![8., 9., 10.]];
        let r = pairwise_t_tests(&g).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|c| c.p_adjusted <= 1.0 && c.p_adjusted >= c.p));
    }
}
