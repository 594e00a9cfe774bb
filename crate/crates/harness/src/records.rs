//! Per-iteration metric records (JSONL) and their cross-seed aggregate (CSV).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use fpg_core::fpg::IterationMetrics;
use fpg_core::{Error, Generator, Result};
use serde::{Deserialize, Serialize};

use crate::config::{EnvKind, LearnerKind};
use crate::stats::mean_std;

/// Non-finite values become `None`, written as JSON `null`.
pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub learner: LearnerKind,
    pub env: EnvKind,
    /// Divergence being minimized; `None` for reward-driven learners.
    pub generator: Option<Generator>,
    pub seed: u64,
    pub iteration: usize,
    pub policy_updates: usize,
    /// Fraction of the iteration's training episodes that reached the goal.
    pub success_rate: f64,
    /// Fresh-rollout success, present on evaluation iterations.
    pub eval_success: Option<f64>,
    pub fdiv_estimate: Option<f64>,
    pub visitation_entropy: Option<f64>,
    pub mean_signal: Option<f64>,
    pub mean_kl: Option<f64>,
    pub clip_fraction: Option<f64>,
    pub early_stop: bool,
    pub wall_clock_s: f64,
}

impl MetricsRecord {
    pub fn from_iteration(
        learner: LearnerKind,
        env: EnvKind,
        generator: Option<Generator>,
        seed: u64,
        m: &IterationMetrics,
    ) -> Self {
        Self {
            learner,
            env,
            generator,
            seed,
            iteration: m.iteration,
            policy_updates: m.policy_updates,
            success_rate: m.success_rate,
            eval_success: None,
            fdiv_estimate: finite(m.fdiv_estimate),
            visitation_entropy: finite(m.visitation_entropy),
            mean_signal: finite(m.mean_signal),
            mean_kl: finite(m.mean_kl),
            clip_fraction: finite(m.clip_fraction),
            early_stop: m.early_stop,
            wall_clock_s: m.wall_clock_s,
        }
    }
}

pub fn write_record<W: Write>(out: &mut W, record: &MetricsRecord) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads a JSONL metrics file. An empty file is an error.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    if out.is_empty() {
        return Err(Error::Parse(format!("empty input: no records in {}", path.display())));
    }
    Ok(out)
}

/// One row of the aggregate CSV. Statistics cover the seeds that reached the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub mean_success: f64,
    pub std_success: f64,
    pub mean_entropy: Option<f64>,
    pub std_entropy: Option<f64>,
}

pub const AGGREGATE_HEADER: &str = "iteration,mean_success,std_success,mean_entropy,std_entropy";

/// Mean and population standard deviation across seeds, per iteration.
pub fn aggregate<'a>(records: impl IntoIterator<Item = &'a MetricsRecord>) -> Vec<AggregateRow> {
    let mut by_iter: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let slot = by_iter.entry(r.iteration).or_default();
        slot.0.push(r.success_rate);
        if let Some(h) = r.visitation_entropy {
            slot.1.push(h);
        }
    }
    by_iter
        .into_iter()
        .map(|(iteration, (success, entropy))| {
            let (mean_success, std_success) = mean_std(&success).expect("at least one record");
            let h = mean_std(&entropy);
            AggregateRow {
                iteration,
                mean_success,
                std_success,
                mean_entropy: h.map(|x| x.0),
                std_entropy: h.map(|x| x.1),
            }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from(AGGREGATE_HEADER);
    s.push_str("\r\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\r\n",
            r.iteration,
            r.mean_success,
            r.std_success,
            opt(r.mean_entropy),
            opt(r.std_entropy)
        ));
    }
    s
}

pub fn parse_aggregate_csv(text: &str) -> Result<Vec<AggregateRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == AGGREGATE_HEADER => {}
        Some(h) => return Err(Error::Parse(format!("unexpected CSV header `{h}`"))),
        None => return Err(Error::Parse("empty input: no CSV header".into())),
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::Parse(format!("bad number `{s}`: {e}")))
    };
    let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.trim_end().split(',').collect();
            if f.len() != 5 {
                return Err(Error::Parse(format!("expected 5 fields in `{line}`")));
            }
            Ok(AggregateRow {
                iteration: f[0]
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad iteration `{}`: {e}", f[0])))?,
                mean_success: num(f[1])?,
                std_success: num(f[2])?,
                mean_entropy: opt(f[3])?,
                std_entropy: opt(f[4])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::Parse("empty input: no CSV rows".into()));
    }
    Ok(rows)
}
