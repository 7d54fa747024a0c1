use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::covariance::CovarianceStructure;
use super::fit::FitReport;
use super::{LevelHyperparameters, MfgpError, Observation, ObservationSet, PosteriorStats, Result};
use crate::linalg::{cholesky_with_jitter, refine};

/// Value reported by [`log_marginal_likelihood`] when the kernel matrix
/// cannot be factorized.
pub const WORST_LOG_LIKELIHOOD: f64 = f64::MIN;

/// Variances below this are treated as fully resolved by
/// [`JointPosterior::correlation`].
const DEGENERATE_VARIANCE: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;


/// A multifidelity GP conditioned on a dataset with fixed hyperparameters.
///
/// Immutable once built; cloning is cheap enough for per-iteration use and
/// the type is `Send + Sync`.
#[derive(Clone, Debug)]
pub struct MfGpModel {
    data: ObservationSet,
    noise_variance: f64,
    jitter_boost: f64,
    structure: CovarianceStructure,
    units: Vec<Vec<f64>>,
    levels: Vec<usize>,
    /// Jitter added to each level's block, indexed by level - 1.
    jitters: Vec<f64>,
    lower: DMatrix<f64>,
    /// Weights of the posterior mean.
    alpha: DVector<f64>,
    /// `residual' (K + D)^-1 residual`, for the likelihood.
    quad: f64,
    /// `max |K alpha - residual|`: how far the mean misses the data.
    training_error: f64,
    residual: DVector<f64>,
    report: Option<FitReport>,
}

/// Posterior moments of every level at a single point, plus the posterior
/// covariance of each level with the top level.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPosterior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub cross_top: Vec<f64>,
}

impl JointPosterior {
    pub fn levels(&self) -> usize {
        self.mean.len()
    }

    /// Stats for 1-based `level`.
    pub fn stats(&self, level: usize) -> PosteriorStats {
        PosteriorStats {
            mean: self.mean[level - 1],
            variance: self.variance[level - 1],
        }
    }

    /// Posterior correlation between `level` and the top level, clamped to
    /// `[-1, 1]`. The top level is perfectly self-correlated; any other level
    /// returns 0 when either variance is below `1e-12`.
    pub fn correlation(&self, level: usize) -> f64 {
        let top = self.levels();
        if level == top {
            return 1.0;
        }
        let v_l = self.variance[level - 1];
        let v_top = self.variance[top - 1];
        if v_l < DEGENERATE_VARIANCE || v_top < DEGENERATE_VARIANCE {
            return 0.0;
        }
        (self.cross_top[level - 1] / (v_l * v_top).sqrt()).clamp(-1.0, 1.0)
    }
}

impl MfGpModel {
    /// Conditions the hierarchy on `data` without touching `hyper`.
    pub fn with_hyperparameters(
        data: &ObservationSet,
        hyper: Vec<LevelHyperparameters>,
        noise_variance: f64,
    ) -> Result<Self> {
        Self::build(data, hyper, noise_variance, 1.0)
    }

    pub(crate) fn build(
        data: &ObservationSet,
        hyper: Vec<LevelHyperparameters>,
        noise_variance: f64,
        jitter_boost: f64,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(MfgpError::Empty);
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(MfgpError::NonFinite("noise variance"));
        }
        if hyper.len() != data.levels() {
            return Err(MfgpError::LevelOutOfRange {
                level: hyper.len(),
                levels: data.levels(),
            });
        }
        let structure = CovarianceStructure::new(&hyper, data.dim())?;
        let data = data.sorted_by_level();
        let units: Vec<Vec<f64>> = data.iter().map(|o| data.to_unit(&o.x)).collect();
        let levels: Vec<usize> = data.iter().map(|o| o.level).collect();

        let k = structure.matrix(&units, &levels, noise_variance);
        let (lower, jitters) = block_cholesky(&k, &levels, data.levels(), jitter_boost)?;
        let residual = DVector::from_iterator(
            data.len(),
            data.iter().map(|o| o.y - structure.prior_mean(o.level)),
        );
        let w = lower
            .solve_lower_triangular(&residual)
            .expect("cholesky factor has a positive diagonal");
        let mut alpha = lower
            .tr_solve_lower_triangular(&w)
            .expect("cholesky factor has a positive diagonal");
        let quad = residual.dot(&alpha);
        if noise_variance == 0.0 {
            alpha = refine(&k, &lower, &residual, alpha, 0.0);
        }
        let training_error = (&k * &alpha - &residual).amax();
        Ok(Self {
            data,
            noise_variance,
            jitter_boost,
            structure,
            units,
            levels,
            jitters,
            lower,
            alpha,
            quad,
            training_error,
            residual,
            report: None,
        })
    }

    pub(crate) fn with_report(mut self, report: FitReport) -> Self {
        self.report = Some(report);
        self
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn levels(&self) -> usize {
        self.data.levels()
    }

    /// Training data, grouped by ascending level.
    pub fn data(&self) -> &ObservationSet {
        &self.data
    }

    pub fn hyperparameters(&self) -> &[LevelHyperparameters] {
        self.structure.hyperparameters()
    }

    pub fn structure(&self) -> &CovarianceStructure {
        &self.structure
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Largest diagonal jitter that made a level's block factorizable.
    pub fn jitter(&self) -> f64 {
        self.jitters.iter().cloned().fold(0.0, f64::max)
    }

    /// Largest gap between the posterior mean and a training output. Only
    /// meaningful without noise, where it is roundoff plus jitter effects.
    pub fn interpolation_error(&self) -> f64 {
        self.training_error
    }

    /// Jitter added to the diagonal of each level's observations (0 for a
    /// level without data).
    pub fn level_jitters(&self) -> &[f64] {
        &self.jitters
    }

    pub fn fit_report(&self) -> Option<&FitReport> {
        self.report.as_ref()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(MfgpError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MfgpError::NonFinite("coordinate"));
        }
        Ok(())
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.levels() {
            return Err(MfgpError::LevelOutOfRange {
                level,
                levels: self.levels(),
            });
        }
        Ok(())
    }

    /// Prior covariances between `(u, p)` and every training observation,
    /// for every query level `p`.
    fn cross_vectors(&self, u: &[f64]) -> Vec<DVector<f64>> {
        let top = self.levels();
        let n = self.units.len();
        let mut out = vec![DVector::zeros(n); top];
        let mut c = vec![0.0; top];
        for (j, (uj, &lj)) in self.units.iter().zip(&self.levels).enumerate() {
            self.structure.level_covariances(u, uj, lj, &mut c);
            for p in 1..=top {
                out[p - 1][j] = if p <= lj {
                    self.structure.chain(p, lj) * c[p - 1]
                } else {
                    self.structure.chain(lj, p) * c[lj - 1]
                };
            }
        }
        out
    }

    /// Posterior moments of all levels at `x` (problem units).
    pub fn joint(&self, x: &[f64]) -> Result<JointPosterior> {
        self.check_point(x)?;
        let u = self.data.to_unit(x);
        let top = self.levels();
        let ks = self.cross_vectors(&u);
        let vs: Vec<DVector<f64>> = ks
            .iter()
            .map(|k| {
                self.lower
                    .solve_lower_triangular(k)
                    .expect("cholesky factor has a positive diagonal")
            })
            .collect();
        let v_top = &vs[top - 1];
        // Without noise, the posterior variance at a training point is at
        // most the jitter; anything at that level is unresolved roundoff.
        let floor = if self.noise_variance == 0.0 { self.jitter() * (1.0 + 1e-6) } else { 0.0 };
        let mut mean = Vec::with_capacity(top);
        let mut variance = Vec::with_capacity(top);
        let mut cross_top = Vec::with_capacity(top);
        for p in 1..=top {
            let k = &ks[p - 1];
            let v = &vs[p - 1];
            let prior = self.structure.prior_variance(p);
            mean.push(self.structure.prior_mean(p) + k.dot(&self.alpha));
            let var = prior - v.dot(v);
            let resolved = var <= floor + 64.0 * f64::EPSILON * prior;
            variance.push(if resolved { 0.0 } else { var.max(0.0) });
            cross_top.push(self.structure.chain(p, top) * prior - v.dot(v_top));
        }
        Ok(JointPosterior {
            mean,
            variance,
            cross_top,
        })
    }

    /// Posterior mean and variance of level `level` at `x`.
    pub fn predict(&self, x: &[f64], level: usize) -> Result<PosteriorStats> {
        self.check_level(level)?;
        Ok(self.joint(x)?.stats(level))
    }

    /// Posterior correlation between `level` and the top level at `x`.
    pub fn posterior_correlation(&self, x: &[f64], level: usize) -> Result<f64> {
        self.check_level(level)?;
        Ok(self.joint(x)?.correlation(level))
    }

    /// Gaussian log marginal likelihood of the training data.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.residual.len() as f64;
        let log_det = 2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * self.quad - 0.5 * log_det - 0.5 * n * LN_2PI
    }

    /// Posterior mean vector and covariance matrix of `f_level` at the given
    /// unit-cube points.
    pub(crate) fn posterior_block(&self, points: &[Vec<f64>], level: usize) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.units.len();
        let m = points.len();
        let mut kstar = DMatrix::zeros(n, m);
        for (i, q) in points.iter().enumerate() {
            for (j, (uj, &lj)) in self.units.iter().zip(&self.levels).enumerate() {
                kstar[(j, i)] = self.structure.covariance(uj, lj, q, level);
            }
        }
        let v = self
            .lower
            .solve_lower_triangular(&kstar)
            .expect("cholesky factor has a positive diagonal");
        let mean = kstar.transpose() * &self.alpha
            + DVector::from_element(m, self.structure.prior_mean(level));
        let mut cov = v.transpose() * &v;
        for i in 0..m {
            for k in 0..=i {
                let prior = self.structure.covariance(&points[i], level, &points[k], level);
                let c = prior - cov[(i, k)];
                cov[(i, k)] = c;
                cov[(k, i)] = c;
            }
        }
        (mean, cov)
    }

    /// Serializes hyperparameters, noise and data to a JSON document.
    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            dim: self.dim(),
            levels: self.levels(),
            bounds: self.data.bounds().to_vec(),
            noise_variance: self.noise_variance,
            jitter_boost: self.jitter_boost,
            hyperparameters: self.hyperparameters().to_vec(),
            observations: self.data.observations().to_vec(),
        };
        serde_json::to_string_pretty(&doc).expect("model document is serializable")
    }

    /// Rebuilds a model from [`MfGpModel::to_json`] output.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.bounds.len() != doc.dim {
            return Err(MfgpError::DimensionMismatch {
                expected: doc.dim,
                got: doc.bounds.len(),
            });
        }
        let mut data = ObservationSet::new(doc.bounds, doc.levels)?;
        for o in doc.observations {
            data.push(o)?;
        }
        Self::build(&data, doc.hyperparameters, doc.noise_variance, doc.jitter_boost)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    dim: usize,
    levels: usize,
    bounds: Vec<(f64, f64)>,
    noise_variance: f64,
    #[serde(default = "one")]
    jitter_boost: f64,
    hyperparameters: Vec<LevelHyperparameters>,
    observations: Vec<Observation>,
}

fn one() -> f64 {
    1.0
}

/// Cholesky factor of `k` (rows grouped by ascending level), built one
/// level at a time: each level's Schur complement given the levels below
/// gets its own jitter rung, the same one a per-level fit of that level sees.
fn block_cholesky(
    k: &DMatrix<f64>,
    levels: &[usize],
    top: usize,
    boost: f64,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = k.nrows();
    let mut lower = DMatrix::zeros(n, n);
    let mut jitters = vec![0.0; top];
    let mut start = 0;
    for l in 1..=top {
        let end = start + levels[start..].iter().take_while(|&&lj| lj == l).count();
        if end == start {
            continue;
        }
        let m = end - start;
        let mut schur = k.view((start, start), (m, m)).into_owned();
        if start > 0 {
            let below = lower.view((0, 0), (start, start)).into_owned();
            let x = below
                .solve_lower_triangular(&k.view((0, start), (start, m)).into_owned())
                .expect("cholesky factor has a positive diagonal");
            schur -= x.transpose() * &x;
            schur = (&schur + schur.transpose()) * 0.5;
            lower.view_mut((start, 0), (m, start)).copy_from(&x.transpose());
        }
        let chol = cholesky_with_jitter(&schur, boost).ok_or(MfgpError::Singular { level: l })?;
        lower.view_mut((start, start), (m, m)).copy_from(&chol.factor.l());
        jitters[l - 1] = chol.jitter;
        start = end;
    }
    Ok((lower, jitters))
}

/// Log marginal likelihood of `data` under `hyper`, or
/// [`WORST_LOG_LIKELIHOOD`] if the model cannot be built.
pub fn log_marginal_likelihood(
    data: &ObservationSet,
    hyper: &[LevelHyperparameters],
    noise_variance: f64,
) -> f64 {
    MfGpModel::with_hyperparameters(data, hyper.to_vec(), noise_variance)
        .map(|m| m.log_marginal_likelihood())
        .unwrap_or(WORST_LOG_LIKELIHOOD)
}
