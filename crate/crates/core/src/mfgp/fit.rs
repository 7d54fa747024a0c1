//! Level-by-level maximum-likelihood estimation.
//!
//! Level 1 is fitted on its own data. Level `l > 1` is fitted on the
//! conditional likelihood of its observations given all lower-level data:
//! with `(m, S)` the posterior of `f_{l-1}` at the level-`l` inputs,
//! `y_l ~ N(rho m + beta, rho^2 S + K_l + noise I)`. The conditional terms sum
//! to the joint log likelihood, so each stage maximizes its own factor of it.
//! `beta` is profiled out in closed form (generalized least squares).

use nalgebra::{DMatrix, DVector};

use super::model::{MfGpModel, WORST_LOG_LIKELIHOOD};
use super::{LevelHyperparameters, MfgpError, ObservationSet, Result};
use crate::linalg::{cholesky_with_jitter_upto, refine, JITTER_MAX};
use crate::sequence::halton;
use crate::simplex::{self, SimplexOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// The likelihood search first only accepts hyperparameters whose kernel
/// matrix factorizes with at most this relative jitter, so noise-free fits
/// stay interpolating. An unconstrained search is the fallback.
const SEARCH_JITTER_MAX: f64 = 1e-8;

/// In the strict phase of a noise-free fit, the training residual
/// `|C alpha - y|` must stay below this fraction of `max |y|`.
const INTERPOLATION_SLACK: f64 = 1e-8;

/// Weight of `ln(violation)` added to the negative log likelihood in the
/// strict phase, which steers the simplex back into the feasible region
/// instead of leaving it on a flat infinite plateau.
const FEASIBILITY_PENALTY: f64 = 1e3;

/// Hyperparameter search settings.
///
/// Process-variance bounds are relative to the variance of the level's
/// observations, so they are independent of the objective's units.
#[derive(Clone, Debug)]
pub struct FitConfig {
    /// Quasi-random multi-starts per level (in addition to any warm start).
    pub n_starts: usize,
    pub max_evals_per_start: usize,
    pub log_roughness_bounds: (f64, f64),
    pub log_variance_bounds: (f64, f64),
    pub scaling_bounds: (f64, f64),
    pub min_per_level: usize,
    /// Extra start taken from a previous fit, if its shape matches.
    pub warm_start: Option<Vec<LevelHyperparameters>>,
    /// Multiplies both ends of the jitter ladder.
    pub jitter_boost: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 6,
            max_evals_per_start: 300,
            log_roughness_bounds: (-6.0, 6.0),
            log_variance_bounds: (-6.0, 6.0),
            scaling_bounds: (-5.0, 5.0),
            min_per_level: 2,
            warm_start: None,
            jitter_boost: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelFitReport {
    pub level: usize,
    /// Objective at each start, warm start first when present.
    pub seed_log_likelihoods: Vec<f64>,
    pub best_log_likelihood: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct FitReport {
    pub levels: Vec<LevelFitReport>,
}

impl FitReport {
    /// Sum of the per-level conditional log likelihoods.
    pub fn total_log_likelihood(&self) -> f64 {
        self.levels.iter().map(|l| l.best_log_likelihood).sum()
    }
}

struct LevelProblem<'a> {
    level: usize,
    dim: usize,
    y: DVector<f64>,
    sqdiff: Vec<DMatrix<f64>>,
    lower: Option<(DVector<f64>, DMatrix<f64>)>,
    noise: f64,
    scale: f64,
    config: &'a FitConfig,
}

struct Evaluation {
    lml: f64,
    beta: f64,
    /// How far the noise-free constraints are exceeded; feasible when `<= 1`.
    violation: f64,
}

fn lerp((lo, hi): (f64, f64), u: f64) -> f64 {
    lo + u * (hi - lo)
}

fn unlerp((lo, hi): (f64, f64), v: f64) -> f64 {
    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
}

impl LevelProblem<'_> {
    fn n_params(&self) -> usize {
        self.dim + 1 + usize::from(self.level > 1)
    }

    fn decode(&self, u: &[f64]) -> (Vec<f64>, f64, Option<f64>) {
        let cfg = self.config;
        let roughness = u[..self.dim]
            .iter()
            .map(|&v| lerp(cfg.log_roughness_bounds, v).exp())
            .collect();
        let variance = self.scale * lerp(cfg.log_variance_bounds, u[self.dim]).exp();
        let rho = (self.level > 1).then(|| lerp(cfg.scaling_bounds, u[self.dim + 1]));
        (roughness, variance, rho)
    }

    fn encode(&self, h: &LevelHyperparameters) -> Option<Vec<f64>> {
        let cfg = self.config;
        if h.roughness.len() != self.dim || !(h.process_variance > 0.0) {
            return None;
        }
        let mut u: Vec<f64> = h
            .roughness
            .iter()
            .map(|r| unlerp(cfg.log_roughness_bounds, r.ln()))
            .collect();
        u.push(unlerp(cfg.log_variance_bounds, (h.process_variance / self.scale).ln()));
        if self.level > 1 {
            u.push(unlerp(cfg.scaling_bounds, h.scaling?));
        }
        u.iter().all(|v| v.is_finite()).then_some(u)
    }

    /// Conditional log likelihood and profiled trend at unit-box parameters.
    fn evaluate(&self, u: &[f64]) -> Option<Evaluation> {
        let (roughness, variance, rho) = self.decode(u);
        let n = self.y.len();
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let s: f64 = roughness
                    .iter()
                    .zip(&self.sqdiff)
                    .map(|(w, d)| w * d[(i, j)])
                    .sum();
                let v = variance * (-s).exp();
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
            c[(i, i)] = variance + self.noise;
        }
        let mut target = self.y.clone();
        if let (Some(rho), Some((mean, cov))) = (rho, &self.lower) {
            c += cov * (rho * rho);
            target -= mean * rho;
        }
        let chol = cholesky_with_jitter_upto(&c, self.config.jitter_boost, JITTER_MAX)?;
        let beta = if self.level > 1 {
            let ones = DVector::from_element(n, 1.0);
            let a = chol.factor.solve(&ones);
            let b = chol.factor.solve(&target);
            let beta = b.sum() / a.sum();
            target.add_scalar_mut(-beta);
            beta
        } else {
            0.0
        };
        let alpha = chol.factor.solve(&target);
        let violation = if self.noise == 0.0 {
            let mean_diag = c.trace() / n as f64;
            let cap = SEARCH_JITTER_MAX * mean_diag.max(f64::MIN_POSITIVE) * self.config.jitter_boost;
            let allowed = INTERPOLATION_SLACK * self.y.amax().max(f64::MIN_POSITIVE);
            let mut residual = (&c * &alpha - &target).amax();
            if residual > allowed {
                let refined = refine(&c, &chol.factor.l(), &target, alpha.clone(), allowed);
                residual = (&c * &refined - &target).amax();
            }
            (residual / allowed).max(chol.jitter / cap)
        } else {
            0.0
        };
        let quad = target.dot(&alpha);
        let lml = -0.5 * quad - 0.5 * chol.log_det() - 0.5 * n as f64 * LN_2PI;
        (lml.is_finite() && beta.is_finite() && violation.is_finite()).then_some(Evaluation {
            lml,
            beta,
            violation,
        })
    }

    /// Minimization target; the strict phase adds the feasibility penalty.
    fn objective(&self, u: &[f64], strict: bool) -> f64 {
        match self.evaluate(u) {
            None => f64::INFINITY,
            Some(e) if strict => -e.lml + FEASIBILITY_PENALTY * e.violation.max(1.0).ln(),
            Some(e) => -e.lml,
        }
    }

    fn hyperparameters(&self, u: &[f64], beta: f64) -> LevelHyperparameters {
        let (roughness, variance, rho) = self.decode(u);
        match rho {
            None => LevelHyperparameters::base(roughness, variance),
            Some(rho) => LevelHyperparameters::discrepancy(roughness, variance, rho, beta),
        }
    }
}

fn output_scale(y: &DVector<f64>, centered: bool) -> f64 {
    let n = y.len() as f64;
    let mean = if centered { y.mean() } else { 0.0 };
    let s = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// Estimates per-level hyperparameters by maximum likelihood and returns the
/// conditioned model.
pub fn fit(data: &ObservationSet, noise_variance: f64, config: &FitConfig) -> Result<MfGpModel> {
    if data.is_empty() {
        return Err(MfgpError::Empty);
    }
    if !(noise_variance.is_finite() && noise_variance >= 0.0) {
        return Err(MfgpError::NonFinite("noise variance"));
    }
    let required = config.min_per_level.max(1);
    for level in 1..=data.levels() {
        let found = data.count_at(level);
        if found < required {
            return Err(MfgpError::InsufficientData {
                level,
                found,
                required,
            });
        }
    }

    let sorted = data.sorted_by_level();
    let dim = data.dim();
    let mut hyper: Vec<LevelHyperparameters> = Vec::with_capacity(data.levels());
    let mut report = FitReport::default();

    for level in 1..=data.levels() {
        let obs: Vec<_> = sorted.at_level(level).collect();
        let units: Vec<Vec<f64>> = obs.iter().map(|o| sorted.to_unit(&o.x)).collect();
        let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.y));
        let n = units.len();
        let sqdiff = (0..dim)
            .map(|m| DMatrix::from_fn(n, n, |i, j| (units[i][m] - units[j][m]).powi(2)))
            .collect();
        let lower = if level > 1 {
            let partial = MfGpModel::build(
                &sorted.truncated(level - 1),
                hyper.clone(),
                noise_variance,
                config.jitter_boost,
            )?;
            Some(partial.posterior_block(&units, level - 1))
        } else {
            None
        };
        let problem = LevelProblem {
            level,
            dim,
            scale: output_scale(&y, level > 1),
            y,
            sqdiff,
            lower,
            noise: noise_variance,
            config,
        };

        let p = problem.n_params();
        let mut starts: Vec<Vec<f64>> = Vec::new();
        if let Some(warm) = config
            .warm_start
            .as_ref()
            .and_then(|w| w.get(level - 1))
            .and_then(|h| problem.encode(h))
        {
            starts.push(warm);
        }
        starts.extend((1..=config.n_starts as u64).map(|i| halton(i, p)));
        if starts.is_empty() {
            starts.push(vec![0.5; p]);
        }

        let lower_box = vec![0.0; p];
        let upper_box = vec![1.0; p];
        let opts = SimplexOptions {
            max_evals: config.max_evals_per_start.max(p + 2),
            initial_step: 0.1,
            ftol: 1e-9,
            xtol: 1e-6,
        };
        let mut seeds = Vec::new();
        let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut evaluations = 0;
        for strict in [true, false] {
            seeds.clear();
            for start in &starts {
                seeds.push(problem.evaluate(start).map_or(WORST_LOG_LIKELIHOOD, |e| e.lml));
                let result = simplex::minimize(
                    |u| problem.objective(u, strict),
                    start,
                    &lower_box,
                    &upper_box,
                    &opts,
                );
                evaluations += result.evals + 1;
                let Some(e) = problem.evaluate(&result.x) else { continue };
                if strict && e.violation > 1.0 {
                    continue;
                }
                candidates.push((e.lml, result.x));
            }
            if !candidates.is_empty() {
                break;
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
        let Some(first) = candidates.first().cloned() else {
            return Err(MfgpError::Singular { level });
        };

        // The per-level check cannot see how this level's weights feed back
        // into the jittered levels below, so noise-free candidates are
        // verified on the joint model. Failing all of them, the best one is
        // made rougher (better conditioned) step by step.
        let below = sorted.truncated(level);
        let accept = |u: &[f64]| -> Option<LevelHyperparameters> {
            let e = problem.evaluate(u)?;
            let mut trial = hyper.clone();
            trial.push(problem.hyperparameters(u, e.beta));
            if noise_variance > 0.0 {
                return Some(trial.pop().expect("just pushed"));
            }
            let model = MfGpModel::build(&below, trial.clone(), noise_variance, config.jitter_boost).ok()?;
            let ymax = below.iter().map(|o| o.y.abs()).fold(0.0, f64::max);
            (model.interpolation_error() <= INTERPOLATION_SLACK * ymax.max(f64::MIN_POSITIVE))
                .then(|| trial.pop().expect("just pushed"))
        };
        let rougher = |u: &[f64], t: f64| -> Vec<f64> {
            let mut v = u.to_vec();
            for x in &mut v[..dim] {
                *x += t * (1.0 - *x);
            }
            v
        };
        let chosen = candidates
            .iter()
            .find_map(|(lml, u)| accept(u).map(|h| (*lml, h)))
            .or_else(|| {
                [0.25, 0.5, 0.75, 1.0].iter().find_map(|&t| {
                    let u = rougher(&first.1, t);
                    let lml = problem.evaluate(&u)?.lml;
                    accept(&u).map(|h| (lml, h))
                })
            });
        let (best_lml, level_hyper) = match chosen {
            Some(c) => c,
            None => {
                log::warn!("level {level}: no hyperparameters reproduce the training data; keeping the likelihood optimum");
                let beta = problem
                    .evaluate(&first.1)
                    .ok_or(MfgpError::Singular { level })?
                    .beta;
                (first.0, problem.hyperparameters(&first.1, beta))
            }
        };
        hyper.push(level_hyper);
        report.levels.push(LevelFitReport {
            level,
            seed_log_likelihoods: seeds,
            best_log_likelihood: best_lml,
            evaluations,
        });
    }

    Ok(MfGpModel::build(data, hyper, noise_variance, config.jitter_boost)?.with_report(report))
}
