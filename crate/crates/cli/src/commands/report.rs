//! Per-sequence comparison table of several methods' metrics files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use advo_core::reward::{sequence_metrics, MetricsRecord, SequenceMetrics};

use crate::commands::create_dir;
use crate::error::{CliError, CliResult};

pub const AVERAGE: &str = "Average";

#[derive(Debug, Clone, PartialEq)]
pub struct MethodInput {
    pub name: String,
    pub path: PathBuf,
}

/// Parses `NAME=PATH`.
pub fn parse_method(spec: &str) -> Result<MethodInput, String> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok(MethodInput {
            name: name.to_string(),
            path: PathBuf::from(path),
        }),
        _ => Err(format!("expected NAME=PATH, got {spec:?}")),
    }
}

/// The four table metrics; only the drift can be missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub drift_px_per_s: Option<f64>,
    pub mean_age: f64,
    pub coverage_pct: f64,
    pub tau_ms: f64,
}

impl From<SequenceMetrics> for Row {
    fn from(m: SequenceMetrics) -> Self {
        Self {
            drift_px_per_s: m.drift_px_per_s,
            mean_age: m.mean_age,
            coverage_pct: m.coverage_pct,
            tau_ms: m.tau_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub methods: Vec<String>,
    pub sequences: Vec<String>,
    /// `rows[s][m]` for sequence `s` and method `m`.
    pub rows: Vec<Vec<Row>>,
    pub average: Vec<Row>,
}

pub fn read_metrics(path: &Path) -> CliResult<Vec<MetricsRecord>> {
    let err = |e: csv::Error| CliError::data(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().map(|row| row.map_err(err)).collect()
}

/// Records grouped by sequence, in order of first appearance.
fn group(records: Vec<MetricsRecord>) -> Vec<(String, Vec<MetricsRecord>)> {
    let mut order: Vec<String> = Vec::new();
    let mut map: BTreeMap<String, Vec<MetricsRecord>> = BTreeMap::new();
    for r in records {
        if !map.contains_key(&r.sequence) {
            order.push(r.sequence.clone());
        }
        map.entry(r.sequence.clone()).or_default().push(r);
    }
    order
        .into_iter()
        .map(|s| {
            let rows = map.remove(&s).unwrap_or_default();
            (s, rows)
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Arithmetic mean of per-sequence rows; drift is blank if any sequence lacks it.
pub fn average(rows: &[Row]) -> Row {
    let drift = rows.iter().map(|r| r.drift_px_per_s).collect::<Option<Vec<f64>>>();
    Row {
        drift_px_per_s: drift.map(|d| mean(d.into_iter())),
        mean_age: mean(rows.iter().map(|r| r.mean_age)),
        coverage_pct: mean(rows.iter().map(|r| r.coverage_pct)),
        tau_ms: mean(rows.iter().map(|r| r.tau_ms)),
    }
}

pub fn build(methods: Vec<(String, Vec<MetricsRecord>)>, fps: f64) -> CliResult<Report> {
    if methods.len() < 2 {
        return Err(CliError::config("report needs at least two methods"));
    }
    let grouped: Vec<(String, Vec<(String, Vec<MetricsRecord>)>)> =
        methods.into_iter().map(|(name, recs)| (name, group(recs))).collect();
    let sequences: Vec<String> = grouped[0].1.iter().map(|(s, _)| s.clone()).collect();
    for (name, groups) in &grouped {
        if let Some(s) = sequences.iter().find(|s| !groups.iter().any(|(g, _)| g == *s)) {
            return Err(CliError::SequenceMismatch {
                sequence: s.clone(),
                method: name.clone(),
            });
        }
        if let Some((g, _)) = groups.iter().find(|(g, _)| !sequences.contains(g)) {
            return Err(CliError::SequenceMismatch {
                sequence: g.clone(),
                method: grouped[0].0.clone(),
            });
        }
    }
    let mut rows = Vec::with_capacity(sequences.len());
    for s in &sequences {
        let mut per_method = Vec::with_capacity(grouped.len());
        for (_, groups) in &grouped {
            let recs = &groups.iter().find(|(g, _)| g == s).expect("checked above").1;
            per_method.push(Row::from(sequence_metrics(recs, fps)?));
        }
        rows.push(per_method);
    }
    let average = (0..grouped.len())
        .map(|m| average(&rows.iter().map(|r| r[m]).collect::<Vec<_>>()))
        .collect();
    Ok(Report {
        methods: grouped.into_iter().map(|(n, _)| n).collect(),
        sequences,
        rows,
        average,
    })
}

type Metric = (&'static str, fn(&Row) -> Option<f64>, bool);

/// Column title, accessor and whether lower values are better.
const METRICS: [Metric; 4] = [
    ("Feature Drift [px/s]", |r| r.drift_px_per_s, true),
    ("Feature Age [frames]", |r| Some(r.mean_age), false),
    ("Coverage [%]", |r| Some(r.coverage_pct), false),
    ("Computation Time [ms]", |r| Some(r.tau_ms), true),
];

/// Indices of the best values; every tied method is marked.
pub fn best(values: &[Option<f64>], lower_is_better: bool) -> Vec<bool> {
    let target = values.iter().flatten().copied().reduce(|a, b| {
        if lower_is_better {
            a.min(b)
        } else {
            a.max(b)
        }
    });
    values.iter().map(|v| v.is_some() && *v == target).collect()
}

fn cells(row: &[Row]) -> Vec<String> {
    let mut out = Vec::new();
    for (_, get, lower) in METRICS {
        let values: Vec<Option<f64>> = row.iter().map(get).collect();
        for (v, b) in values.iter().zip(best(&values, lower)) {
            out.push(match v {
                Some(x) => format!("{x:.3}{}", if b { "*" } else { "" }),
                None => "-".into(),
            });
        }
    }
    out
}

/// Text table with one column per (metric, method) and best values starred.
pub fn render(report: &Report) -> String {
    let mut header = vec!["Sequence".to_string()];
    for (title, _, _) in METRICS {
        for m in &report.methods {
            header.push(format!("{title} {m}"));
        }
    }
    let mut lines = vec![header];
    for (s, row) in report.sequences.iter().zip(&report.rows) {
        let mut l = vec![s.clone()];
        l.extend(cells(row));
        lines.push(l);
    }
    let mut l = vec![AVERAGE.to_string()];
    l.extend(cells(&report.average));
    lines.push(l);
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for (i, l) in lines.iter().enumerate() {
        let padded: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(text, "{}", padded.join("  "));
        if i == 0 || i + 2 == lines.len() {
            let _ = writeln!(text, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    text
}

pub fn to_csv(report: &Report) -> String {
    let mut text = String::from("sequence,method,drift_px_per_s,mean_age,coverage_pct,tau_ms\n");
    let mut emit = |s: &str, row: &[Row]| {
        for (m, r) in report.methods.iter().zip(row) {
            let drift = r.drift_px_per_s.map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(text, "{s},{m},{drift},{},{},{}", r.mean_age, r.coverage_pct, r.tau_ms);
        }
    };
    for (s, row) in report.sequences.iter().zip(&report.rows) {
        emit(s, row);
    }
    emit(AVERAGE, &report.average);
    text
}

pub fn run(methods: &[MethodInput], fps: f64, out: &Path) -> CliResult<Report> {
    let mut inputs = Vec::new();
    for m in methods {
        if inputs.iter().any(|(n, _): &(String, _)| *n == m.name) {
            return Err(CliError::config(format!("method {} given twice", m.name)));
        }
        inputs.push((m.name.clone(), read_metrics(&m.path)?));
    }
    let report = build(inputs, fps)?;
    print!("{}", render(&report));
    create_dir(out)?;
    let path = out.join("report.csv");
    std::fs::write(&path, to_csv(&report)).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    Ok(report)
}
