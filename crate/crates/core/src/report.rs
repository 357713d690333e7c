//! Aggregation of evaluation records into tables.
//!
//! CSV layouts (fixed):
//!
//! - `by_domain.csv`: `domain,episodes,mean_reward_pct`, one row per domain
//!   present in canonical domain order, then an `avg` row over all records.
//! - `heatmap_h_b.csv`: header `h,<b values ascending>`, one row per h value
//!   ascending; cells are mean reward % or empty when no record matches.
//! - `summary.csv`: `metric,value` rows for episode count, mean reward,
//!   mean partial credit, mean steps, mean completion tokens, and a count per
//!   failure reason.
//!
//! Percentages and means are printed with one decimal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::domain::Domain;
use crate::harness::{EvalRecord, FailureReason};

const FAILURES: [(FailureReason, &str); 4] = [
    (FailureReason::None, "none"),
    (FailureReason::StepLimit, "step_limit"),
    (FailureReason::TokenOverflow, "token_overflow"),
    (FailureReason::EndpointError, "endpoint_error"),
];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Mean {
    pub sum: f64,
    pub count: usize,
}

impl Mean {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.count += 1;
    }

    pub fn value(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub episodes: usize,
    pub by_domain: BTreeMap<Domain, Mean>,
    pub overall: Mean,
    pub h_values: Vec<usize>,
    pub b_values: Vec<usize>,
    /// `[h index][b index]` mean reward in `[0, 1]`.
    pub heatmap: Vec<Vec<Mean>>,
    pub partial_credit: Mean,
    pub steps: Mean,
    pub completion_tokens: Mean,
    pub failures: BTreeMap<&'static str, usize>,
}

pub fn aggregate(records: &[EvalRecord]) -> Result<AggregateReport, String> {
    if records.is_empty() {
        return Err("no records to report".into());
    }
    let h_values: Vec<usize> = records
        .iter()
        .map(|r| r.h)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let b_values: Vec<usize> = records
        .iter()
        .map(|r| r.b)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut heatmap = vec![vec![Mean::default(); b_values.len()]; h_values.len()];
    let mut by_domain: BTreeMap<Domain, Mean> = BTreeMap::new();
    let mut overall = Mean::default();
    let mut partial = Mean::default();
    let mut steps = Mean::default();
    let mut tokens = Mean::default();
    let mut failures: BTreeMap<&'static str, usize> = FAILURES.iter().map(|(_, n)| (*n, 0)).collect();
    for r in records {
        let reward = f64::from(r.reward);
        overall.add(reward);
        by_domain.entry(r.domain).or_default().add(reward);
        let hi = h_values.binary_search(&r.h).expect("collected above");
        let bi = b_values.binary_search(&r.b).expect("collected above");
        heatmap[hi][bi].add(reward);
        partial.add(r.partial_credit);
        steps.add(r.steps as f64);
        tokens.add(r.completion_tokens as f64);
        let name = FAILURES
            .iter()
            .find(|(f, _)| *f == r.failure_reason)
            .expect("all reasons listed")
            .1;
        *failures.get_mut(name).expect("pre-seeded") += 1;
    }
    Ok(AggregateReport {
        episodes: records.len(),
        by_domain,
        overall,
        h_values,
        b_values,
        heatmap,
        partial_credit: partial,
        steps,
        completion_tokens: tokens,
        failures,
    })
}

fn pct(m: &Mean) -> String {
    m.value().map_or_else(String::new, |v| format!("{:.1}", v * 100.0))
}

fn one_decimal(m: &Mean) -> String {
    m.value().map_or_else(String::new, |v| format!("{v:.1}"))
}

impl AggregateReport {
    pub fn by_domain_csv(&self) -> String {
        let mut out = String::from("domain,episodes,mean_reward_pct\n");
        for d in Domain::ALL {
            if let Some(m) = self.by_domain.get(&d) {
                let _ = writeln!(out, "{d},{},{}", m.count, pct(m));
            }
        }
        let _ = writeln!(out, "avg,{},{}", self.overall.count, pct(&self.overall));
        out
    }

    pub fn heatmap_csv(&self) -> String {
        let mut out = String::from("h");
        for b in &self.b_values {
            let _ = write!(out, ",{b}");
        }
        out.push('\n');
        for (h, row) in self.h_values.iter().zip(&self.heatmap) {
            let _ = write!(out, "{h}");
            for cell in row {
                let _ = write!(out, ",{}", pct(cell));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "episodes,{}", self.episodes);
        let _ = writeln!(out, "mean_reward_pct,{}", pct(&self.overall));
        let _ = writeln!(out, "mean_partial_credit_pct,{}", pct(&self.partial_credit));
        let _ = writeln!(out, "mean_steps,{}", one_decimal(&self.steps));
        let _ = writeln!(out, "mean_completion_tokens,{}", one_decimal(&self.completion_tokens));
        for (_, name) in FAILURES {
            let _ = writeln!(out, "failure_{name},{}", self.failures[name]);
        }
        out
    }

    /// Writes the three CSV files into `dir`.
    pub fn write_csv(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("by_domain.csv"), self.by_domain_csv())?;
        fs::write(dir.join("heatmap_h_b.csv"), self.heatmap_csv())?;
        fs::write(dir.join("summary.csv"), self.summary_csv())
    }
}
