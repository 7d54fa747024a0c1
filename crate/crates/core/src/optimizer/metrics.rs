use serde::{Deserialize, Serialize};

use super::RunHistory;

/// Linear interpolation between closest ranks: with sorted values
/// `v[0..n]`, the `p`-quantile is `v[h] + (h - floor h)(v[h+1] - v[h])` for
/// `h = (n - 1) p`. Returns `None` for empty input.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 0.5)
}

/// `(budget, best high-fidelity value so far)` after every record that has
/// an incumbent.
pub fn best_trace(history: &RunHistory) -> Vec<(f64, f64)> {
    history
        .records
        .iter()
        .filter_map(|r| r.best_hf.map(|b| (r.budget, b)))
        .collect()
}

/// Slack for comparing accumulated costs with a checkpoint: ten charges of
/// 0.2 sum to 2.0000000000000004.
pub const BUDGET_SLACK: f64 = 1e-9;

/// Incumbent value at a checkpoint: the `best_hf` of the last record with
/// `B <= budget` (up to [`BUDGET_SLACK`], relative).
pub fn best_at_budget(history: &RunHistory, budget: f64) -> Option<f64> {
    let limit = budget + BUDGET_SLACK * budget.abs().max(1.0);
    history
        .records
        .iter()
        .take_while(|r| r.budget <= limit)
        .last()
        .and_then(|r| r.best_hf)
}

/// First cumulative budget at which the incumbent is within `tol` of
/// `target` (from above).
pub fn budget_to_reach(history: &RunHistory, target: f64, tol: f64) -> Option<f64> {
    history
        .records
        .iter()
        .find(|r| r.best_hf.is_some_and(|b| b <= target + tol))
        .map(|r| r.budget)
}

/// Evaluations per level, lowest first (initial design included).
pub fn call_counts(history: &RunHistory) -> Vec<usize> {
    let mut counts = vec![0; history.levels];
    for r in &history.records {
        counts[r.level - 1] += 1;
    }
    counts
}

/// Percentage relative errors `|q*_i - q_i| / |q*_i| * 100`.
pub fn relative_errors(truth: &[f64], inferred: &[f64]) -> Vec<f64> {
    truth
        .iter()
        .zip(inferred)
        .map(|(t, q)| (t - q).abs() / t.abs() * 100.0)
        .collect()
}

/// Per-run figures reported by studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub final_budget: f64,
    pub best_hf: Option<f64>,
    pub incumbent: Option<Vec<f64>>,
    pub call_counts: Vec<usize>,
    pub identification_errors: Option<Vec<f64>>,
}

pub fn metrics(history: &RunHistory, truth: Option<&[f64]>) -> RunMetrics {
    let incumbent = history.incumbent().map(|r| r.x.clone());
    RunMetrics {
        final_budget: history.records.last().map_or(0.0, |r| r.budget),
        best_hf: history.incumbent().map(|r| r.y),
        identification_errors: truth
            .zip(incumbent.as_ref())
            .map(|(t, q)| relative_errors(t, q)),
        incumbent,
        call_counts: call_counts(history),
    }
}
