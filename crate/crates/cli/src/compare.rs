//! Side-by-side medians of several study summaries.

use std::fmt::Write as _;
use std::path::Path;

use crate::study::StudySummary;

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("no summaries given")]
    Empty,
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("checkpoint grids differ: {first:?} vs {other:?} ({label})")]
    Grid {
        first: Vec<f64>,
        other: Vec<f64>,
        label: String,
    },
    #[error("baseline must be finite and non-zero, got {0}")]
    Baseline(f64),
}

/// `(baseline - value) / |baseline| * 100`: positive when `value` is lower
/// (better, for minimization) than the baseline.
pub fn improvement(baseline: f64, value: f64) -> f64 {
    (baseline - value) / baseline.abs() * 100.0
}

/// Checkpoint budgets down, one column per summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub labels: Vec<String>,
    pub budgets: Vec<f64>,
    /// `medians[row][column]`.
    pub medians: Vec<Vec<Option<f64>>>,
    pub baseline: Option<f64>,
}

pub fn load_summary(path: &Path) -> Result<StudySummary, CompareError> {
    let read = |message: String| CompareError::Read {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| read(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| read(e.to_string()))
}

/// Column labels are algorithm names, suffixed `#2`, `#3`, ... on repeats.
pub fn compare(summaries: &[StudySummary], baseline: Option<f64>) -> Result<Table, CompareError> {
    let first = summaries.first().ok_or(CompareError::Empty)?;
    if let Some(b) = baseline {
        if !(b.is_finite() && b != 0.0) {
            return Err(CompareError::Baseline(b));
        }
    }
    let grid: Vec<f64> = first.checkpoints.iter().map(|c| c.budget).collect();
    let mut labels: Vec<String> = Vec::with_capacity(summaries.len());
    for s in summaries {
        let name = s.algorithm.name();
        let seen = labels.iter().filter(|l| l.split('#').next() == Some(name)).count();
        let label = if seen == 0 { name.to_string() } else { format!("{name}#{}", seen + 1) };
        let other: Vec<f64> = s.checkpoints.iter().map(|c| c.budget).collect();
        if other != grid {
            return Err(CompareError::Grid {
                first: grid,
                other,
                label,
            });
        }
        labels.push(label);
    }
    let medians = (0..grid.len())
        .map(|i| summaries.iter().map(|s| s.checkpoints[i].best_hf.median).collect())
        .collect();
    Ok(Table {
        labels,
        budgets: grid,
        medians,
        baseline,
    })
}

impl Table {
    fn cell(&self, v: Option<f64>) -> String {
        match (v, self.baseline) {
            (None, _) => "-".to_string(),
            (Some(v), None) => format!("{v:.6}"),
            (Some(v), Some(b)) => format!("{v:.6} ({:.2} %)", improvement(b, v)),
        }
    }

    /// Right-aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut rows = vec![std::iter::once("B".to_string()).chain(self.labels.iter().cloned()).collect::<Vec<_>>()];
        for (b, row) in self.budgets.iter().zip(&self.medians) {
            rows.push(
                std::iter::once(format!("{b}"))
                    .chain(row.iter().map(|v| self.cell(*v)))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  "));
        }
        out
    }

    /// `budget,<label>...` with full-precision medians, plus
    /// `<label>_improvement_pct` columns when a baseline is set.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["budget".to_string()];
        header.extend(self.labels.iter().cloned());
        if self.baseline.is_some() {
            header.extend(self.labels.iter().map(|l| format!("{l}_improvement_pct")));
        }
        let mut out = header.join(",") + "\n";
        let show = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for (b, row) in self.budgets.iter().zip(&self.medians) {
            let mut line = vec![b.to_string()];
            line.extend(row.iter().map(|v| show(*v)));
            if let Some(base) = self.baseline {
                line.extend(row.iter().map(|v| show(v.map(|v| improvement(base, v)))));
            }
            out += &(line.join(",") + "\n");
        }
        out
    }
}
