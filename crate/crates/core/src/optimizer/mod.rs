//! The budgeted sequential loop.
//!
//! 1. Evaluate a Latin hypercube design per level and charge its cost.
//! 2. While the consumed budget is below `B_max`: refit the surrogate,
//!    maximize the acquisition over `(x, level)`, evaluate, charge
//!    `lambda_level`, record.
//!
//! EGO runs on the top level only with plain expected improvement; MFBO
//! uses the multifidelity acquisition with the identity bias; PA-MFBO uses
//! the configured bias.

mod design;
mod metrics;
mod search;

pub use design::{derive_seed, latin_hypercube, BudgetState, InitPlan};
pub use metrics::{
    best_at_budget, best_trace, BUDGET_SLACK, budget_to_reach, call_counts, median, metrics, percentile,
    relative_errors, RunMetrics,
};
pub use search::{maximize_acquisition, AcquisitionRule, Candidate, SearchConfig, Selection};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionContext, AcquisitionError, Bias, BiasSpec};
use crate::mfgp::{fit, FitConfig, LevelHyperparameters, MfGpModel, MfgpError, Observation, ObservationSet};
use crate::problems::{MultifidelityProblem, ProblemError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid initial plan: {0}")]
    Plan(String),
    #[error("B_max = {b_max} is below the initial design cost {initial}")]
    Budget { b_max: f64, initial: f64 },
    #[error("evaluation failed at level {level}, x = {x:?}: {source}")]
    Evaluation {
        level: usize,
        x: Vec<f64>,
        source: ProblemError,
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Model(#[from] MfgpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ego,
    Mfbo,
    PaMfbo,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ego => "ego",
            Algorithm::Mfbo => "mfbo",
            Algorithm::PaMfbo => "pa-mfbo",
        }
    }
}

/// How a recorded point was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Initial,
    /// The acquisition maximizer.
    Acquisition,
    /// The best candidate that does not duplicate an observation.
    NextBest,
    /// Forced top-level query at maximum posterior variance.
    Exploration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// 0 for the initial design, then 1, 2, ...
    pub iteration: usize,
    pub level: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub lambda: f64,
    /// Cumulative cost including this record.
    pub budget: f64,
    /// Best top-level value so far, if any top-level point exists.
    pub best_hf: Option<f64>,
    pub choice: Choice,
    /// Acquisition value of the chosen candidate (loop records only).
    pub acquisition: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    Aborted { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub problem: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub dim: usize,
    pub levels: usize,
    pub b_max: f64,
    pub records: Vec<Record>,
    pub termination: Termination,
}

impl RunHistory {
    /// Best top-level record (earliest on ties).
    pub fn incumbent(&self) -> Option<&Record> {
        self.records
            .iter()
            .filter(|r| r.level == self.levels)
            .fold(None, |best: Option<&Record>, r| match best {
                Some(b) if b.y <= r.y => Some(b),
                _ => Some(r),
            })
    }

    pub fn consumed(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.budget)
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub search: SearchConfig,
    /// Settings for the first fit; later fits also start from the previous
    /// hyperparameters and use `warm_starts` quasi-random starts.
    pub fit: FitConfig,
    pub warm_starts: usize,
    pub noise_variance: f64,
    /// Duplicate threshold in unit-cube max-norm.
    pub duplicate_tol: f64,
    /// Consecutive next-best picks before a forced exploration.
    pub max_forced: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            fit: FitConfig::default(),
            warm_starts: 2,
            noise_variance: 0.0,
            duplicate_tol: 1e-9,
            max_forced: 3,
        }
    }
}

/// Evaluates one Latin hypercube per level (lowest level first).
pub fn initialize(
    problem: &MultifidelityProblem,
    plan: &InitPlan,
) -> Result<(ObservationSet, BudgetState, Vec<Record>), RunError> {
    let levels = problem.levels();
    if plan.counts.len() != levels {
        return Err(RunError::Plan(format!(
            "{} counts for {levels} levels",
            plan.counts.len()
        )));
    }
    let mut data = ObservationSet::new(problem.bounds().to_vec(), levels)?;
    let mut budget = BudgetState::new(f64::INFINITY);
    let mut records = Vec::new();
    let mut best: Option<f64> = None;
    for (l, &n) in plan.counts.iter().enumerate() {
        let level = l + 1;
        let lambda = problem.cost_ratios()[l];
        for x in latin_hypercube(n, problem.bounds(), derive_seed(plan.seed, level as u64)) {
            let y = problem
                .evaluate(&x, level)
                .map_err(|source| RunError::Evaluation {
                    level,
                    x: x.clone(),
                    source,
                })?;
            data.push(Observation {
                x: x.clone(),
                level,
                y,
            })?;
            budget.charge(lambda);
            if level == levels {
                best = Some(best.map_or(y, |b: f64| b.min(y)));
            }
            records.push(Record {
                iteration: 0,
                level,
                x,
                y,
                lambda,
                budget: budget.consumed,
                best_hf: best,
                choice: Choice::Initial,
                acquisition: None,
            });
        }
    }
    Ok((data, budget, records))
}

fn check_plan(plan: &InitPlan, dim: usize, min_per_level: usize) -> Result<(), RunError> {
    if let Some((l, n)) = plan
        .counts
        .iter()
        .enumerate()
        .find(|(_, n)| **n < min_per_level)
    {
        return Err(RunError::Plan(format!(
            "level {} has {n} initial points, the surrogate needs at least {min_per_level}",
            l + 1
        )));
    }
    if plan.counts[0] < dim + 1 {
        return Err(RunError::Plan(format!(
            "the lowest level needs at least d + 1 = {} points, got {}",
            dim + 1,
            plan.counts[0]
        )));
    }
    Ok(())
}

fn fit_with_retry(
    data: &ObservationSet,
    config: &RunConfig,
    warm: Option<&[LevelHyperparameters]>,
) -> Result<MfGpModel, MfgpError> {
    let mut fc = config.fit.clone();
    if let Some(w) = warm {
        fc.warm_start = Some(w.to_vec());
        fc.n_starts = config.warm_starts;
    }
    match fit(data, config.noise_variance, &fc) {
        Ok(m) => Ok(m),
        Err(e) => {
            warn!("fit failed ({e}); retrying with 100x jitter");
            fc.jitter_boost *= 100.0;
            fit(data, config.noise_variance, &fc)
        }
    }
}

/// Runs one optimization. Failures after the initial design end the run
/// early with [`Termination::Aborted`] and the partial history.
#[allow(clippy::too_many_arguments)]
pub fn run(
    problem: &MultifidelityProblem,
    algorithm: Algorithm,
    bias: &BiasSpec,
    plan: &InitPlan,
    b_max: f64,
    seed: u64,
    config: &RunConfig,
) -> Result<RunHistory, RunError> {
    let restricted;
    let (problem, plan) = match algorithm {
        Algorithm::Ego => {
            restricted = problem.top_level_only();
            let hf = *plan.counts.last().ok_or_else(|| RunError::Plan("no counts".into()))?;
            if plan.counts.len() > 1 && plan.counts[..plan.counts.len() - 1].iter().any(|&c| c > 0) {
                return Err(RunError::Plan(
                    "EGO evaluates the top level only; lower-level counts must be 0".into(),
                ));
            }
            (
                &restricted,
                InitPlan {
                    counts: vec![hf],
                    seed: plan.seed,
                },
            )
        }
        _ => (problem, plan.clone()),
    };
    let compiled: Bias = match algorithm {
        Algorithm::PaMfbo => bias.compile(problem.coordinates())?,
        _ => Bias::Identity,
    };
    check_plan(&plan, problem.dim(), config.fit.min_per_level.max(1))?;

    let (mut data, mut budget, records) = initialize(problem, &plan)?;
    if b_max < budget.consumed {
        return Err(RunError::Budget {
            b_max,
            initial: budget.consumed,
        });
    }
    budget.max = b_max;
    let mut history = RunHistory {
        problem: problem.name().to_string(),
        algorithm,
        seed,
        dim: problem.dim(),
        levels: problem.levels(),
        b_max,
        records,
        termination: Termination::BudgetExhausted,
    };
    let top = problem.levels();
    let mut hyper: Option<Vec<LevelHyperparameters>> = None;
    let mut forced_streak = 0;
    let mut iteration = 0;

    while !budget.exhausted() {
        iteration += 1;
        let model = match fit_with_retry(&data, config, hyper.as_deref()) {
            Ok(m) => m,
            Err(e) => {
                history.termination = Termination::Aborted {
                    reason: format!("surrogate fit failed at iteration {iteration}: {e}"),
                };
                break;
            }
        };
        hyper = Some(model.hyperparameters().to_vec());

        let context = match AcquisitionContext::from_data(
            &data,
            problem.cost_ratios().to_vec(),
            config.noise_variance.sqrt(),
        ) {
            Ok(c) => c,
            Err(e) => {
                history.termination = Termination::Aborted {
                    reason: e.to_string(),
                };
                break;
            }
        };
        let rule = match algorithm {
            Algorithm::Ego => AcquisitionRule::ExpectedImprovement {
                best: context.best_hf_value,
            },
            _ => AcquisitionRule::PhysicsAware {
                context: &context,
                bias: &compiled,
            },
        };
        let selection = match maximize_acquisition(
            &model,
            &rule,
            &config.search,
            derive_seed(seed, iteration as u64),
        ) {
            Ok(s) => s,
            Err(e) => {
                history.termination = Termination::Aborted {
                    reason: format!("acquisition failed at iteration {iteration}: {e}"),
                };
                break;
            }
        };

        let fresh = |x: &[f64], level: usize| !data.contains_near(x, level, config.duplicate_tol);
        let explore = |sel: &Selection| {
            sel.exploration
                .iter()
                .find(|x| fresh(x, top))
                .map(|x| (x.clone(), top, Choice::Exploration, None))
        };
        let pick = if selection.stalled() {
            info!("iteration {iteration}: every candidate has zero acquisition; exploring");
            explore(&selection)
        } else {
            let first_fresh = selection
                .ranked
                .iter()
                .position(|c| fresh(&c.x, c.level));
            match first_fresh {
                Some(0) => {
                    forced_streak = 0;
                    let c = selection.best();
                    Some((c.x.clone(), c.level, Choice::Acquisition, Some(c.value)))
                }
                Some(i) if forced_streak + 1 < config.max_forced => {
                    forced_streak += 1;
                    debug!("iteration {iteration}: maximizer duplicates data, taking rank {i}");
                    let c = &selection.ranked[i];
                    Some((c.x.clone(), c.level, Choice::NextBest, Some(c.value)))
                }
                _ => {
                    forced_streak = 0;
                    info!("iteration {iteration}: repeated duplicates; exploring");
                    explore(&selection)
                }
            }
        };
        let Some((x, level, choice, acquisition)) = pick else {
            history.termination = Termination::Aborted {
                reason: format!("no admissible candidate at iteration {iteration}"),
            };
            break;
        };

        let y = match problem.evaluate(&x, level) {
            Ok(y) => y,
            Err(e) => {
                history.termination = Termination::Aborted {
                    reason: format!("evaluation failed at level {level}, x = {x:?}: {e}"),
                };
                break;
            }
        };
        if let Err(e) = data.push(Observation {
            x: x.clone(),
            level,
            y,
        }) {
            history.termination = Termination::Aborted {
                reason: e.to_string(),
            };
            break;
        }
        let lambda = problem.cost_ratios()[level - 1];
        budget.charge(lambda);
        let prev = history.records.last().and_then(|r| r.best_hf);
        let best_hf = if level == top {
            Some(prev.map_or(y, |b| b.min(y)))
        } else {
            prev
        };
        debug!("iteration {iteration}: level {level} x = {x:?} y = {y} B = {}", budget.consumed);
        history.records.push(Record {
            iteration,
            level,
            x,
            y,
            lambda,
            budget: budget.consumed,
            best_hf,
            choice,
            acquisition,
        });
    }
    Ok(history)
}
