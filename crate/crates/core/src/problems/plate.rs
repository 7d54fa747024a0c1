//! Damage identification on a synthetic strain field.
//!
//! A 102 x 456 mm plate is observed at an 18 x 40 grid of sensors. A cut at
//! `(q1, q2)` of length `q3` under load `q4` perturbs a positive baseline
//! field with
//!
//! * a near-cut bump of peak `0.05 q4` and widths `wx = 4 + q3`,
//!   `wy = 10 + q3 / 3` (mm), and
//! * a far-field term of peak `0.004 q4 wx wy / 40` and radius 60 mm.
//!
//! The low-fidelity field is the high-fidelity one smoothed by a 25 mm
//! Gaussian (done analytically). For short cuts the smoothed bump only
//! depends on `q4 wx wy`, the same product that scales the far field, so the
//! low fidelity cannot tell a short cut under a high load from a longer cut
//! under a moderate one. Long cuts survive the smoothing.
//!
//! The objective is the discrepancy between the reference field (high
//! fidelity at the hidden `q*`) and the field computed at the candidate.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{GroundTruth, MultifidelityProblem, ProblemError, Result};
use crate::optimizer::latin_hypercube;

pub const PLATE_BOUNDS: [(f64, f64); 4] = [
    (0.0, 102.0),
    (0.0, 456.0),
    // the damage bias is singular at q3 = 0 and q4 = q4max
    (0.3, 30.0),
    (0.0, 20.0 * (1.0 - 1e-6)),
];

/// Smallest admissible `|S_ref|` entry.
pub const RMSE_FLOOR: f64 = 1e-9;

const WIDTH: f64 = 102.0;
const LENGTH: f64 = 456.0;
const NX: usize = 18;
const NY: usize = 40;
const NEAR_PEAK: f64 = 0.05;
const FAR_PEAK: f64 = 0.004;
const FAR_AREA: f64 = 40.0;
const FAR_RADIUS: f64 = 60.0;
const SMOOTHING: f64 = 25.0;

pub type StrainField = Vec<f64>;

/// Weighting of the squared residuals in [`discrepancy_rmse`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by `S_ref`.
    #[default]
    Reference,
    /// Divide by `S_ref^2` (relative RMSE).
    ReferenceSquared,
}

/// `sqrt(mean((S_ref - S_mon)^2 / w))` with `w = S_ref` or `S_ref^2`.
pub fn discrepancy_rmse(s_ref: &[f64], s_mon: &[f64], normalization: Normalization) -> Result<f64> {
    if s_ref.len() != s_mon.len() {
        return Err(ProblemError::LengthMismatch(s_ref.len(), s_mon.len()));
    }
    if s_ref.is_empty() {
        return Err(ProblemError::InvalidParameter("empty strain field".into()));
    }
    let low: Vec<usize> = s_ref
        .iter()
        .enumerate()
        .filter(|(_, v)| !(v.abs() >= RMSE_FLOOR))
        .map(|(i, _)| i)
        .collect();
    if !low.is_empty() {
        return Err(ProblemError::BelowFloor(low));
    }
    let sum: f64 = s_ref
        .iter()
        .zip(s_mon)
        .map(|(r, m)| {
            let w = match normalization {
                Normalization::Reference => *r,
                Normalization::ReferenceSquared => r * r,
            };
            (r - m).powi(2) / w
        })
        .sum();
    Ok((sum / s_ref.len() as f64).sqrt())
}

/// The sensor layout and field formulas.
#[derive(Clone, Debug)]
pub struct PlateModel {
    sensors: Vec<(f64, f64)>,
}

impl Default for PlateModel {
    fn default() -> Self {
        let mut sensors = Vec::with_capacity(NX * NY);
        for j in 0..NY {
            for i in 0..NX {
                sensors.push((
                    (i as f64 + 0.5) * WIDTH / NX as f64,
                    (j as f64 + 0.5) * LENGTH / NY as f64,
                ));
            }
        }
        Self { sensors }
    }
}

fn widths(q3: f64) -> (f64, f64) {
    (4.0 + q3, 10.0 + q3 / 3.0)
}

impl PlateModel {
    pub fn sensors(&self) -> &[(f64, f64)] {
        &self.sensors
    }

    fn baseline(py: f64) -> f64 {
        1.0 + 0.5 * py / LENGTH
    }

    /// Field with the near bump and far term blurred by an isotropic Gaussian
    /// of standard deviation `blur` (0 = high fidelity).
    fn field(&self, q: &[f64], blur: f64) -> StrainField {
        let (q1, q2, q3, q4) = (q[0], q[1], q[2], q[3]);
        let (wx, wy) = widths(q3);
        let b2 = blur * blur;
        let (sx, sy) = ((wx * wx + b2).sqrt(), (wy * wy + b2).sqrt());
        let near = NEAR_PEAK * q4 * (wx * wy) / (sx * sy);
        let r2 = FAR_RADIUS * FAR_RADIUS + b2;
        let far = FAR_PEAK * q4 * (wx * wy / FAR_AREA) * (FAR_RADIUS * FAR_RADIUS / r2);
        self.sensors
            .iter()
            .map(|&(px, py)| {
                let (dx, dy) = (px - q1, py - q2);
                Self::baseline(py)
                    + near * (-0.5 * (dx * dx / (sx * sx) + dy * dy / (sy * sy))).exp()
                    + far * (-0.5 * (dx * dx + dy * dy) / r2).exp()
            })
            .collect()
    }

    pub fn hf_field(&self, q: &[f64]) -> StrainField {
        self.field(q, 0.0)
    }

    pub fn lf_field(&self, q: &[f64]) -> StrainField {
        self.field(q, SMOOTHING)
    }
}

/// `d = 4` over `(q1, q2, q3, q4)`, two levels with `lambda = (0.2, 1)`;
/// `psi = (q3, q4)`. The objective attains 0 exactly at `q_true` at the
/// high fidelity.
pub fn plate_identification_problem(
    q_true: [f64; 4],
    normalization: Normalization,
) -> Result<MultifidelityProblem> {
    if q_true
        .iter()
        .zip(PLATE_BOUNDS)
        .any(|(v, (lo, hi))| !(*v >= lo && *v <= hi))
    {
        return Err(ProblemError::InvalidParameter(format!(
            "q_true {q_true:?} outside {PLATE_BOUNDS:?}"
        )));
    }
    let model = Arc::new(PlateModel::default());
    let reference = Arc::new(model.hf_field(&q_true));
    let (m1, r1) = (model.clone(), reference.clone());
    let (m2, r2) = (model, reference);
    Ok(MultifidelityProblem::new(
        "plate",
        vec!["q1".into(), "q2".into(), "q3".into(), "q4".into()],
        PLATE_BOUNDS.to_vec(),
        vec![0.2, 1.0],
        vec![
            Arc::new(move |q: &[f64]| {
                discrepancy_rmse(&r1, &m1.lf_field(q), normalization).unwrap_or(f64::NAN)
            }),
            Arc::new(move |q: &[f64]| {
                discrepancy_rmse(&r2, &m2.hf_field(q), normalization).unwrap_or(f64::NAN)
            }),
        ],
    )?
    .with_psi(vec![2, 3], "cut length q3 and load q4 (coordinates 3, 4)")
    .with_ground_truth(GroundTruth {
        x: q_true.to_vec(),
        value: 0.0,
    }))
}

/// Hidden damage states for replicated studies: Latin hypercube samples
/// with the cut length drawn on a square-root scale, so that short
/// (incipient) cuts are over-represented. Positions and loads stay within
/// the central 80% of their ranges; `q3` lies in `[1, 27]`.
pub fn sample_plate_truths(count: usize, seed: u64) -> Vec<[f64; 4]> {
    let unit = vec![(0.0, 1.0); 4];
    latin_hypercube(count, &unit, seed)
        .into_iter()
        .map(|u| {
            [
                WIDTH * (0.1 + 0.8 * u[0]),
                LENGTH * (0.1 + 0.8 * u[1]),
                1.0 + 26.0 * u[2] * u[2],
                20.0 * (0.1 + 0.8 * u[3]),
            ]
        })
        .collect()
}
