//! Aggregation of experiment CSVs into mean/standard-error tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const SUMMARY_HEADER: &str =
    "policy,sweep,trials,mean_bound,stderr_bound,mean_realized,stderr_realized";

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub sweep: f64,
    pub trials: usize,
    pub mean_bound: f64,
    pub stderr_bound: f64,
    pub mean_realized: Option<f64>,
    pub stderr_realized: Option<f64>,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Group rows by (policy, sweep) and aggregate the bound and realized
/// columns.
pub fn summarize_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines();
    let header = lines.next().context("empty results file")?;
    let columns: Vec<&str> = header.split(',').collect();
    let need = ["policy", "sweep", "bound", "realized"];
    let mut idx = [0usize; 4];
    let mut missing = Vec::new();
    for (slot, name) in need.iter().enumerate() {
        match columns.iter().position(|c| c == name) {
            Some(i) => idx[slot] = i,
            None => missing.push(*name),
        }
    }
    if !missing.is_empty() {
        bail!("results file lacks required columns: {}", missing.join(", "));
    }

    let mut groups: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            bail!("row {} has {} fields, header has {}", lineno + 2, fields.len(), columns.len());
        }
        let policy = fields[idx[0]].to_string();
        let sweep = fields[idx[1]].to_string();
        let bound: f64 = fields[idx[2]]
            .parse()
            .with_context(|| format!("bad bound value on row {}", lineno + 2))?;
        let entry = groups.entry((policy, sweep)).or_default();
        entry.0.push(bound);
        if !fields[idx[3]].is_empty() {
            let realized: f64 = fields[idx[3]]
                .parse()
                .with_context(|| format!("bad realized value on row {}", lineno + 2))?;
            entry.1.push(realized);
        }
    }

    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((policy, sweep), (bounds, realized))| {
            let sweep: f64 = sweep.parse().unwrap_or(f64::NAN);
            let (mean_bound, stderr_bound) = mean_and_stderr(&bounds);
            let (mean_realized, stderr_realized) = if realized.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_and_stderr(&realized);
                (Some(m), Some(s))
            };
            SummaryRow {
                policy,
                sweep,
                trials: bounds.len(),
                mean_bound,
                stderr_bound,
                mean_realized,
                stderr_realized,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.policy
            .cmp(&b.policy)
            .then(a.sweep.partial_cmp(&b.sweep).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(rows)
}

pub fn write_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.policy,
            r.sweep,
            r.trials,
            r.mean_bound,
            r.stderr_bound,
            opt(r.mean_realized),
            opt(r.stderr_realized)
        ));
    }
    out
}

/// Read, aggregate, and write in one step.
pub fn summarize_file(input: &Path, output: &Path) -> Result<usize> {
    let text = fs::read_to_string(input)
        .with_context(|| format!("reading results at {}", input.display()))?;
    let rows = summarize_csv(&text)?;
    fs::write(output, write_summary(&rows))
        .with_context(|| format!("writing summary to {}", output.display()))?;
    Ok(rows.len())
}
