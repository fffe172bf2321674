//! Multi-class labeling as a sequence of binary passes.
//!
//! Each pass asks for one class over the items no earlier pass claimed, then
//! removes the claimed items. Ordering classes largest-first minimizes how
//! many items go through the interface.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Crowd wage used for dollar figures.
pub const WAGE_USD_PER_HOUR: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrderStrategy {
    BaselineRandom { seed: u64 },
    ClassOptimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadePlan {
    pub class_order: Vec<String>,
    pub strategy: OrderStrategy,
    pub redundancy: u32,
    pub exposure_ms: f64,
}

pub fn plan_order(
    class_counts: &BTreeMap<String, u64>,
    strategy: OrderStrategy,
    redundancy: u32,
    exposure_ms: f64,
) -> Result<CascadePlan> {
    if class_counts.is_empty() {
        return Err(Error::InvalidConfig("empty class set".into()));
    }
    // BTreeMap iteration is label-ascending, and the sort below is stable
    let mut class_order: Vec<String> = class_counts.keys().cloned().collect();
    match strategy {
        OrderStrategy::ClassOptimized => {
            class_order.sort_by(|a, b| class_counts[b].cmp(&class_counts[a]));
        }
        OrderStrategy::BaselineRandom { seed } => {
            class_order.shuffle(&mut rng_from_seed(seed));
        }
    }
    Ok(CascadePlan {
        class_order,
        strategy,
        redundancy,
        exposure_ms,
    })
}

/// Class counts from ground-truth labels.
pub fn counts_from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for l in labels {
        *counts.entry(l.to_string()).or_insert(0) += 1;
    }
    counts
}

/// Scales class fractions observed on a pilot sample up to `total` items.
pub fn counts_from_pilot(pilot: &BTreeMap<String, u64>, total: u64) -> BTreeMap<String, u64> {
    let n: u64 = pilot.values().sum();
    pilot
        .iter()
        .map(|(k, &v)| {
            let est = if n == 0 { 0 } else { ((v as f64 / n as f64) * total as f64).round() as u64 };
            (k.clone(), est)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub class: String,
    pub residual_in: usize,
    pub claimed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    pub assignments: BTreeMap<String, String>,
    pub unassigned: Vec<String>,
    pub item_views: usize,
    pub worker_seconds: f64,
    pub passes: Vec<PassRecord>,
}

impl CascadeResult {
    pub fn dollars(&self) -> f64 {
        dollars(self.worker_seconds)
    }

    pub fn report(&self) -> CascadeReport {
        CascadeReport {
            assignments: self.assignments.clone(),
            unassigned: self.unassigned.clone(),
            item_views: self.item_views,
            worker_seconds: self.worker_seconds,
            dollars: self.dollars(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub assignments: BTreeMap<String, String>,
    pub unassigned: Vec<String>,
    pub item_views: usize,
    pub worker_seconds: f64,
    pub dollars: f64,
}

pub fn dollars(worker_seconds: f64) -> f64 {
    worker_seconds / 3600.0 * WAGE_USD_PER_HOUR
}

/// Runs the passes in plan order. `labeler(class, residual)` returns the ids
/// it labels positive for `class`; they must come from `residual`.
///
/// Items no pass claims are reported in `unassigned`.
pub fn run_cascade<F>(items: &[String], plan: &CascadePlan, mut labeler: F) -> Result<CascadeResult>
where
    F: FnMut(&str, &[String]) -> Vec<String>,
{
    let mut residual: Vec<String> = items.to_vec();
    let mut assignments = BTreeMap::new();
    let mut item_views = 0usize;
    let mut passes = Vec::with_capacity(plan.class_order.len());
    for class in &plan.class_order {
        if residual.is_empty() {
            break;
        }
        item_views += residual.len();
        let claimed = labeler(class, &residual);
        let pool: HashSet<&str> = residual.iter().map(String::as_str).collect();
        let mut claimed_set = BTreeSet::new();
        for id in &claimed {
            if !pool.contains(id.as_str()) {
                return Err(Error::LabelOutsideResidual(id.clone()));
            }
            claimed_set.insert(id.clone());
        }
        passes.push(PassRecord {
            class: class.clone(),
            residual_in: residual.len(),
            claimed: claimed_set.len(),
        });
        for id in &claimed_set {
            assignments.insert(id.clone(), class.clone());
        }
        residual.retain(|id| !claimed_set.contains(id));
    }
    let worker_seconds = item_views as f64 * (plan.exposure_ms / 1000.0) * plan.redundancy as f64;
    Ok(CascadeResult {
        assignments,
        unassigned: residual,
        item_views,
        worker_seconds,
        passes,
    })
}

/// Item views a perfect labeler needs for a class order: the residual size
/// at the start of each pass, summed.
pub fn perfect_item_views(order: &[String], counts: &BTreeMap<String, u64>) -> u64 {
    let mut residual: u64 = counts.values().sum();
    let mut views = 0;
    for class in order {
        if residual == 0 {
            break;
        }
        views += residual;
        residual -= counts.get(class).copied().unwrap_or(0);
    }
    views
}

/// Seconds to label every (item, class) pair with conventional binary questions.
pub fn naive_cost(n_items: u64, n_classes: u64, per_label_s: f64, redundancy: u32) -> f64 {
    n_items as f64 * n_classes as f64 * per_label_s * redundancy as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn truth_items(c: &BTreeMap<String, u64>) -> (Vec<String>, BTreeMap<String, String>) {
        let mut ids = Vec::new();
        let mut truth = BTreeMap::new();
        for (class, &n) in c {
            for i in 0..n {
                let id = format!("{class}-{i}");
                truth.insert(id.clone(), class.clone());
                ids.push(id);
            }
        }
        (ids, truth)
    }

    #[test]
    fn optimized_order_is_descending_with_label_ties() {
        let p = plan_order(&counts(&[("C", 10), ("A", 1000), ("B", 10)]), OrderStrategy::ClassOptimized, 5, 100.0).unwrap();
        assert_eq!(p.class_order, ["A", "B", "C"]);
        let p = plan_order(&counts(&[("z", 3), ("x", 3), ("y", 3)]), OrderStrategy::ClassOptimized, 5, 100.0).unwrap();
        assert_eq!(p.class_order, ["x", "y", "z"]);
    }

    #[test]
    fn random_order_is_seeded() {
        let c = counts(&[("a", 1), ("b", 1), ("c", 1), ("d", 1), ("e", 1)]);
        let s = OrderStrategy::BaselineRandom { seed: 11 };
        assert_eq!(plan_order(&c, s, 1, 100.0).unwrap(), plan_order(&c, s, 1, 100.0).unwrap());
    }

    #[test]
    fn empty_classes_rejected() {
        assert!(plan_order(&BTreeMap::new(), OrderStrategy::ClassOptimized, 1, 100.0).is_err());
    }

    #[test]
    fn residual_counts_for_two_classes() {
        let c = counts(&[("A", 3), ("B", 1)]);
        let (ids, truth) = truth_items(&c);
        let perfect = |class: &str, residual: &[String]| -> Vec<String> {
            residual.iter().filter(|id| truth[*id] == class).cloned().collect()
        };
        let mk = |order: [&str; 2]| CascadePlan {
            class_order: order.iter().map(|s| s.to_string()).collect(),
            strategy: OrderStrategy::ClassOptimized,
            redundancy: 1,
            exposure_ms: 100.0,
        };
        assert_eq!(run_cascade(&ids, &mk(["A", "B"]), perfect).unwrap().item_views, 5);
        assert_eq!(run_cascade(&ids, &mk(["B", "A"]), perfect).unwrap().item_views, 7);
    }

    #[test]
    fn missed_items_stay_unassigned() {
        let ids: Vec<String> = (0..4).map(|i| format!("x{i}")).collect();
        let plan = plan_order(&counts(&[("A", 4)]), OrderStrategy::ClassOptimized, 2, 500.0).unwrap();
        let r = run_cascade(&ids, &plan, |_, res| res[..2].to_vec()).unwrap();
        assert_eq!(r.item_views, 4);
        assert_eq!(r.unassigned, ["x2", "x3"]);
        assert_eq!(r.worker_seconds, 4.0);
    }

    #[test]
    fn foreign_ids_rejected() {
        let ids = vec!["a".to_string()];
        let plan = plan_order(&counts(&[("A", 1)]), OrderStrategy::ClassOptimized, 1, 100.0).unwrap();
        assert_eq!(
            run_cascade(&ids, &plan, |_, _| vec!["zz".to_string()]).unwrap_err(),
            Error::LabelOutsideResidual("zz".into())
        );
    }

    #[test]
    fn naive_cost_examples() {
        assert_eq!(naive_cost(2000, 10, 1.7, 3), 102_000.0);
        assert_eq!(naive_cost(20_000, 200, 1.7, 1), 6_800_000.0);
        assert_eq!(naive_cost(1, 1, 1.0, 1), 1.0);
        assert!((dollars(102_000.0) - 170.0).abs() < 1e-9);
    }

    #[test]
    fn pilot_scaling() {
        let est = counts_from_pilot(&counts(&[("a", 3), ("b", 1)]), 100);
        assert_eq!(est, counts(&[("a", 75), ("b", 25)]));
    }
}
