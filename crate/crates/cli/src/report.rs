//! Table-shaped summaries across runs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use perceptkit_core::metrics::HypeScore;
use serde::{Deserialize, Serialize};

use crate::artifacts::Artifacts;
use crate::commands::{emit, DecodeReport};
use crate::{ReportArgs, TableArg};

/// One row per task: conventional labeling against rapid streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub task: String,
    pub conv_time_s: f64,
    pub conv_redundancy: u32,
    pub rsvp_time_s: f64,
    pub redundancy: u32,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub speedup: f64,
}

/// One row per model, best score first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub rank: usize,
    pub model: String,
    pub hype_inf_pct: f64,
    pub fakes_error_pct: f64,
    pub reals_error_pct: f64,
    pub std: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Serialize)]
struct ReportConfig<'a> {
    table: TableArg,
    inputs: &'a [String],
}

fn split_input(spec: &str) -> Result<(&str, &Path)> {
    let (name, path) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("input `{spec}` is not NAME=PATH"))?;
    if name.is_empty() {
        return Err(anyhow!("input `{spec}` has an empty name"));
    }
    Ok((name, Path::new(path)))
}

fn resolve(path: &Path, default_file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_file)
    } else {
        path.to_path_buf()
    }
}

pub fn table1_row(task: &str, r: &DecodeReport) -> Table1Row {
    Table1Row {
        task: task.to_string(),
        conv_time_s: r.conv_time_per_item_s,
        conv_redundancy: r.conv_redundancy,
        rsvp_time_s: r.exposure_ms / 1000.0,
        redundancy: r.redundancy,
        precision: r.precision,
        recall: r.recall,
        speedup: r.speedup,
    }
}

/// Ranks models by score, highest first; ties keep input order.
pub fn table3_rows(scores: Vec<(String, HypeScore)>) -> Vec<Table3Row> {
    let mut scores = scores;
    scores.sort_by(|a, b| b.1.overall_error_pct.total_cmp(&a.1.overall_error_pct));
    scores
        .into_iter()
        .enumerate()
        .map(|(i, (model, s))| Table3Row {
            rank: i + 1,
            model,
            hype_inf_pct: s.overall_error_pct,
            fakes_error_pct: s.fakes_error_pct,
            reals_error_pct: s.reals_error_pct,
            std: s.std,
            ci_lo: s.ci_lo,
            ci_hi: s.ci_hi,
        })
        .collect()
}

pub fn run(a: ReportArgs) -> Result<()> {
    let cfg = ReportConfig {
        table: a.table,
        inputs: &a.inputs,
    };
    let mut art = Artifacts::create(&a.common.out_dir, "report", &cfg)?;
    match a.table {
        TableArg::Table1 => {
            let mut rows = Vec::new();
            for spec in &a.inputs {
                let (name, path) = split_input(spec)?;
                let path = resolve(path, "decode.json");
                let r: DecodeReport = serde_json::from_str(&art.read_input(&path)?)
                    .with_context(|| format!("parsing {}", path.display()))?;
                rows.push(table1_row(name, &r));
            }
            art.write_csv("table1.csv", &rows)?;
            art.write_json("table1.json", &rows)?;
            art.finish()?;
            emit(&rows)
        }
        TableArg::Table3 => {
            let mut scores = Vec::new();
            for spec in &a.inputs {
                let (name, path) = split_input(spec)?;
                let path = resolve(path, "score.json");
                let s: HypeScore = serde_json::from_str(&art.read_input(&path)?)
                    .with_context(|| format!("parsing {}", path.display()))?;
                scores.push((name.to_string(), s));
            }
            let rows = table3_rows(scores);
            art.write_csv("table3.csv", &rows)?;
            art.write_json("table3.json", &rows)?;
            art.finish()?;
            emit(&rows)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(overall: f64) -> HypeScore {
        HypeScore {
            overall_error_pct: overall,
            fakes_error_pct: overall,
            reals_error_pct: overall,
            n_evaluators: 30,
            std: 1.0,
            ci_lo: overall - 2.0,
            ci_hi: overall + 2.0,
        }
    }

    #[test]
    fn table3_ranks_highest_first() {
        let rows = table3_rows(vec![("a".into(), score(10.0)), ("b".into(), score(27.6)), ("c".into(), score(8.0))]);
        let order: Vec<(usize, &str)> = rows.iter().map(|r| (r.rank, r.model.as_str())).collect();
        assert_eq!(order, [(1, "b"), (2, "a"), (3, "c")]);
    }

    #[test]
    fn input_specs() {
        assert_eq!(split_input("Easy=out/e").unwrap(), ("Easy", Path::new("out/e")));
        assert!(split_input("out/e").is_err());
        assert!(split_input("=x").is_err());
    }
}
