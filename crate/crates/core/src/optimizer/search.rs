//! Acquisition maximization over `(x, level)`.
//!
//! A Cranley-Patterson-rotated Halton pool of `pool_per_dim * d` points is
//! scored at every level; the best `refine_top` pairs are then polished by a
//! bounded simplex search at their level. Candidates are ranked by value,
//! then by higher level, then by lower index (pool points first, refined
//! points after).

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{expected_improvement, u_pa_all_levels, AcquisitionContext, PhysicsBias};
use crate::mfgp::MfGpModel;
use crate::sequence::shifted_halton;
use crate::simplex::{self, SimplexOptions};

use super::RunError;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub pool_per_dim: usize,
    pub refine_top: usize,
    pub refine_evals: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            pool_per_dim: 512,
            refine_top: 5,
            refine_evals: 100,
        }
    }
}

/// What is being maximized.
pub enum AcquisitionRule<'a> {
    /// Plain expected improvement of the (single) top level.
    ExpectedImprovement { best: f64 },
    /// The multifidelity product with a bias.
    PhysicsAware {
        context: &'a AcquisitionContext,
        bias: &'a dyn PhysicsBias,
    },
}

impl AcquisitionRule<'_> {
    /// Values at every level of `model` (one entry for plain EI).
    fn score(&self, model: &MfGpModel, x: &[f64]) -> Result<Vec<f64>, RunError> {
        match self {
            AcquisitionRule::ExpectedImprovement { best } => {
                let p = model.predict(x, model.levels())?;
                Ok(vec![expected_improvement(p.mean, p.sd(), *best)?])
            }
            AcquisitionRule::PhysicsAware { context, bias } => {
                Ok(u_pa_all_levels(model, x, context, *bias)?
                    .into_iter()
                    .map(|t| t.value)
                    .collect())
            }
        }
    }

    /// Level that a score vector's entry `i` refers to.
    fn level_of(&self, model: &MfGpModel, i: usize) -> usize {
        match self {
            AcquisitionRule::ExpectedImprovement { .. } => model.levels(),
            AcquisitionRule::PhysicsAware { .. } => i + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub level: usize,
    pub value: f64,
    pub index: usize,
}

/// Ranked candidates plus the max-variance top-level pool point.
#[derive(Clone, Debug)]
pub struct Selection {
    pub ranked: Vec<Candidate>,
    /// Pool points ordered by decreasing top-level posterior variance.
    pub exploration: Vec<Vec<f64>>,
}

impl Selection {
    pub fn best(&self) -> &Candidate {
        &self.ranked[0]
    }

    /// True when no candidate has positive acquisition.
    pub fn stalled(&self) -> bool {
        self.ranked.iter().all(|c| !(c.value > 0.0))
    }
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then(b.level.cmp(&a.level))
        .then(a.index.cmp(&b.index))
}

pub fn maximize_acquisition(
    model: &MfGpModel,
    rule: &AcquisitionRule<'_>,
    config: &SearchConfig,
    seed: u64,
) -> Result<Selection, RunError> {
    let data = model.data();
    let d = model.dim();
    let top = model.levels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let first = 1 + rng.random_range(0..1u64 << 20);
    let pool = shifted_halton(first, (config.pool_per_dim * d).max(1), &shift);

    let mut ranked = Vec::with_capacity(pool.len() * top);
    let mut variances = Vec::with_capacity(pool.len());
    for (i, u) in pool.iter().enumerate() {
        let x = data.from_unit(u);
        for (k, value) in rule.score(model, &x)?.into_iter().enumerate() {
            ranked.push(Candidate {
                x: x.clone(),
                level: rule.level_of(model, k),
                value,
                index: i,
            });
        }
        variances.push((model.predict(&x, top)?.variance, i));
    }
    ranked.sort_by(rank);

    let lower = vec![0.0; d];
    let upper = vec![1.0; d];
    let opts = SimplexOptions {
        max_evals: config.refine_evals,
        initial_step: 0.05,
        ftol: 1e-12,
        xtol: 1e-9,
    };
    let starts: Vec<Candidate> = ranked
        .iter()
        .take(config.refine_top)
        .filter(|c| c.value > 0.0)
        .cloned()
        .collect();
    let mut refined = Vec::with_capacity(starts.len());
    for (k, start) in starts.iter().enumerate() {
        let slot = match rule {
            AcquisitionRule::ExpectedImprovement { .. } => 0,
            AcquisitionRule::PhysicsAware { .. } => start.level - 1,
        };
        let result = simplex::minimize(
            |u| {
                rule.score(model, &data.from_unit(u))
                    .map_or(f64::INFINITY, |v| -v[slot])
            },
            &data.to_unit(&start.x),
            &lower,
            &upper,
            &opts,
        );
        refined.push(Candidate {
            x: data.from_unit(&result.x),
            level: start.level,
            value: -result.value,
            index: pool.len() + k,
        });
    }
    ranked.extend(refined);
    ranked.sort_by(rank);

    variances.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let exploration = variances
        .into_iter()
        .map(|(_, i)| data.from_unit(&pool[i]))
        .collect();
    Ok(Selection {
        ranked,
        exploration,
    })
}
