//! Replicated studies: one optimization per replication, a history CSV per
//! run and a `summary.json` with checkpoint quartiles.
//!
//! Percentiles use linear interpolation between closest ranks (see
//! [`pamfbo::optimizer::percentile`]); every summary number can be
//! recomputed from the run CSVs alone.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{error, info};
use pamfbo::acquisition::BiasSpec;
use pamfbo::optimizer::{
    best_at_budget, budget_to_reach, call_counts, median, percentile, relative_errors, run,
    Algorithm, Choice, Record, RunConfig, RunHistory, Termination,
};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, StudyConfig};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error("{failed} of {total} replications failed (completed runs were kept)")]
    Replications { failed: usize, total: usize },
}

/// Median and quartiles of whatever runs provide a value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub n: usize,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Self {
        Self {
            n: values.len(),
            median: median(values),
            q25: percentile(values, 0.25),
            q75: percentile(values, 0.75),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub budget: f64,
    #[serde(flatten)]
    pub best_hf: Quartiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub replication: usize,
    pub seed: u64,
    /// `completed`, `aborted` (partial history kept) or `failed`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub final_budget: f64,
    pub best_hf: Option<f64>,
    pub incumbent: Option<Vec<f64>>,
    pub call_counts: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_to_reach: Option<f64>,
    /// `|q* - q| / |q*| * 100` per coordinate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identification_errors: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    /// Over runs, of `max_i e(q_i)`.
    pub max_error: Quartiles,
    /// Over runs, per coordinate.
    pub median_per_coordinate: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachSummary {
    pub tol: f64,
    /// Runs that never reach the target count as `+inf` in the median.
    pub median: Option<f64>,
    pub reached: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub problem: String,
    pub algorithm: Algorithm,
    pub bias: BiasSpec,
    pub b_max: f64,
    pub seed: u64,
    pub replications: usize,
    pub checkpoints: Vec<Checkpoint>,
    /// Best value at the end of each run.
    #[serde(rename = "final")]
    pub final_best: Quartiles,
    /// Mean evaluations per level (lowest first) over runs with a history.
    pub call_counts_mean: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_to_reach: Option<ReachSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identification: Option<Identification>,
    pub runs: Vec<RunSummary>,
}

/// Everything a study produced, for callers that need more than the files.
#[derive(Debug)]
pub struct StudyOutcome {
    pub summary: StudySummary,
    /// `None` where a replication failed before producing a history.
    pub histories: Vec<Option<RunHistory>>,
    pub output_dir: PathBuf,
}

pub fn history_header(dim: usize) -> Vec<String> {
    let mut h = vec!["iteration".to_string(), "level".to_string()];
    h.extend((1..=dim).map(|i| format!("x_{i}")));
    h.extend(["y", "lambda", "budget", "best_hf"].map(String::from));
    h
}

/// `iteration,level,x_1..x_d,y,lambda,budget,best_hf`; floats use Rust's
/// shortest round-trip formatting, `best_hf` is empty before the first
/// top-level point.
pub fn write_history_csv(path: &Path, history: &RunHistory) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(history_header(history.dim))?;
    for r in &history.records {
        let mut row = vec![r.iteration.to_string(), r.level.to_string()];
        row.extend(r.x.iter().map(f64::to_string));
        row.push(r.y.to_string());
        row.push(r.lambda.to_string());
        row.push(r.budget.to_string());
        row.push(r.best_hf.map_or(String::new(), |b| b.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a history CSV back into records. The CSV does not store how a
/// point was chosen: records come back as `Initial` (iteration 0) or
/// `Acquisition`, without acquisition values.
pub fn read_history_csv(path: &Path) -> Result<Vec<Record>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let dim = headers.len().checked_sub(6).ok_or("too few columns")?;
    if headers.iter().collect::<Vec<_>>() != history_header(dim) {
        return Err(format!("unexpected header {headers:?}"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| e.to_string())?;
        let iteration: usize = row[0].parse().map_err(|e| format!("iteration: {e}"))?;
        out.push(Record {
            iteration,
            level: row[1].parse().map_err(|e| format!("level: {e}"))?,
            x: (0..dim).map(|i| num(&row[2 + i])).collect::<Result<_, _>>()?,
            y: num(&row[2 + dim])?,
            lambda: num(&row[3 + dim])?,
            budget: num(&row[4 + dim])?,
            best_hf: match &row[5 + dim] {
                "" => None,
                s => Some(num(s)?),
            },
            choice: if iteration == 0 {
                Choice::Initial
            } else {
                Choice::Acquisition
            },
            acquisition: None,
        });
    }
    Ok(out)
}

pub fn history_csv_name(replication: usize) -> String {
    format!("run_{replication:03}.csv")
}

fn run_summary(
    config: &StudyConfig,
    replication: usize,
    history: Result<&RunHistory, &str>,
    truth: Option<(&[f64], f64)>,
) -> RunSummary {
    let seed = config.seed_for(replication);
    let h = match history {
        Ok(h) => h,
        Err(reason) => {
            return RunSummary {
                replication,
                seed,
                status: "failed".into(),
                reason: Some(reason.to_string()),
                final_budget: 0.0,
                best_hf: None,
                incumbent: None,
                call_counts: vec![],
                budget_to_reach: None,
                identification_errors: None,
            }
        }
    };
    let (status, reason) = match &h.termination {
        Termination::BudgetExhausted => ("completed", None),
        Termination::Aborted { reason } => ("aborted", Some(reason.clone())),
    };
    let incumbent = h.incumbent();
    RunSummary {
        replication,
        seed,
        status: status.into(),
        reason,
        final_budget: h.consumed(),
        best_hf: incumbent.map(|r| r.y),
        incumbent: incumbent.map(|r| r.x.clone()),
        call_counts: call_counts(h),
        budget_to_reach: config
            .reach_tol
            .zip(truth)
            .and_then(|(tol, (_, value))| budget_to_reach(h, value, tol)),
        identification_errors: truth
            .zip(incumbent)
            .map(|((x, _), r)| relative_errors(x, &r.x)),
    }
}

/// Builds the summary from per-replication histories (or failure reasons).
pub fn summarize(
    config: &StudyConfig,
    results: &[Result<RunHistory, String>],
) -> Result<StudySummary, ConfigError> {
    let mut runs = Vec::with_capacity(results.len());
    for (r, res) in results.iter().enumerate() {
        let problem = config.problem(r)?;
        let truth = problem.ground_truth().map(|t| (t.x.as_slice(), t.value));
        runs.push(run_summary(config, r, res.as_ref().map_err(String::as_str), truth));
    }
    let histories: Vec<&RunHistory> = results.iter().filter_map(|r| r.as_ref().ok()).collect();

    let checkpoints = config
        .checkpoints
        .iter()
        .map(|&b| Checkpoint {
            budget: b,
            best_hf: Quartiles::of(
                &histories
                    .iter()
                    .filter_map(|h| best_at_budget(h, b))
                    .collect::<Vec<_>>(),
            ),
        })
        .collect();
    let finals: Vec<f64> = runs.iter().filter_map(|r| r.best_hf).collect();

    let levels = config.problem(0)?.levels();
    let mut call_counts_mean = vec![0.0; levels];
    for r in runs.iter().filter(|r| r.status != "failed") {
        // EGO histories are single-level: their counts belong to the top.
        let offset = levels - r.call_counts.len();
        for (i, c) in r.call_counts.iter().enumerate() {
            call_counts_mean[offset + i] += *c as f64;
        }
    }
    let with_history = runs.iter().filter(|r| r.status != "failed").count();
    if with_history > 0 {
        for c in &mut call_counts_mean {
            *c /= with_history as f64;
        }
    }

    let budget_to_reach = config.reach_tol.map(|tol| {
        let reach: Vec<f64> = runs
            .iter()
            .filter(|r| r.status != "failed")
            .map(|r| r.budget_to_reach.unwrap_or(f64::INFINITY))
            .collect();
        ReachSummary {
            tol,
            median: median(&reach),
            reached: reach.iter().filter(|v| v.is_finite()).count(),
        }
    });

    let errors: Vec<&Vec<f64>> = runs.iter().filter_map(|r| r.identification_errors.as_ref()).collect();
    let identification = (!errors.is_empty()).then(|| {
        let max: Vec<f64> = errors
            .iter()
            .map(|e| e.iter().cloned().fold(0.0, f64::max))
            .collect();
        let dim = errors[0].len();
        Identification {
            max_error: Quartiles::of(&max),
            median_per_coordinate: (0..dim)
                .map(|i| median(&errors.iter().map(|e| e[i]).collect::<Vec<_>>()))
                .collect(),
        }
    });

    Ok(StudySummary {
        problem: config.problem.name.clone(),
        algorithm: config.algorithm,
        bias: config.bias_spec()?,
        b_max: config.b_max,
        seed: config.seed,
        replications: config.replications,
        checkpoints,
        final_best: Quartiles::of(&finals),
        call_counts_mean,
        budget_to_reach,
        identification,
        runs,
    })
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> StudyError {
    StudyError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_summary(path: &Path, summary: &StudySummary) -> Result<(), StudyError> {
    let file = File::create(path).map_err(|e| output_error(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), summary).map_err(|e| output_error(path, e))
}

/// Validates `config`, runs every replication (sequentially, seeds
/// `seed + r`) and writes `run_NNN.csv`, `run_NNN.json` and `summary.json`
/// into the output directory.
///
/// A replication that fails is logged and reported in the summary; the
/// other runs and the summary are still written, and the result is then
/// [`StudyError::Replications`].
pub fn run_study(config: &StudyConfig, run_config: &RunConfig) -> Result<StudyOutcome, StudyError> {
    config.validate()?;
    let bias = config.bias_spec()?;
    let dir = config.resolved_output_dir();
    fs::create_dir_all(&dir).map_err(|e| output_error(&dir, e))?;

    let mut results = Vec::with_capacity(config.replications);
    for r in 0..config.replications {
        let problem = config.problem(r)?;
        let seed = config.seed_for(r);
        let res = run(&problem, config.algorithm, &bias, &config.plan(r), config.b_max, seed, run_config)
            .map_err(|e| e.to_string());
        match &res {
            Ok(h) => {
                let csv_path = dir.join(history_csv_name(r));
                write_history_csv(&csv_path, h).map_err(|e| output_error(&csv_path, e))?;
                let json_path = csv_path.with_extension("json");
                let file = File::create(&json_path).map_err(|e| output_error(&json_path, e))?;
                serde_json::to_writer(BufWriter::new(file), h).map_err(|e| output_error(&json_path, e))?;
                if let Termination::Aborted { reason } = &h.termination {
                    error!("replication {r} (seed {seed}) aborted: {reason}");
                } else {
                    info!(
                        "replication {r} (seed {seed}): best {:?} after B = {}",
                        h.incumbent().map(|i| i.y),
                        h.consumed()
                    );
                }
            }
            Err(e) => error!("replication {r} (seed {seed}) failed: {e}"),
        }
        results.push(res);
    }

    let summary = summarize(config, &results)?;
    write_summary(&dir.join("summary.json"), &summary)?;
    let failed = summary.runs.iter().filter(|r| r.status != "completed").count();
    if failed > 0 {
        return Err(StudyError::Replications {
            failed,
            total: config.replications,
        });
    }
    Ok(StudyOutcome {
        summary,
        histories: results.into_iter().map(Result::ok).collect(),
        output_dir: dir,
    })
}
