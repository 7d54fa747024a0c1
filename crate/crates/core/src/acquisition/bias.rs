//! Physics-aware bias terms (the `alpha4` factor).

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::{AcquisitionError, Result};

/// A multiplicative preference for queries at `(x, level)`.
///
/// Implementations must return exactly 1 below the top level and a finite,
/// positive value at the top level for every in-domain `x`.
pub trait PhysicsBias: Send + Sync {
    fn alpha4(&self, x: &[f64], level: usize, levels: usize) -> Result<f64>;
}

/// `alpha4 = M_s / (M_s - M)` at the top level, 1 below.
pub fn mach_bias(mach: f64, level: usize, levels: usize, sonic: f64) -> Result<f64> {
    if !(mach.is_finite() && sonic.is_finite()) {
        return Err(AcquisitionError::NonFinite("mach number"));
    }
    if level < levels {
        return Ok(1.0);
    }
    if mach >= sonic {
        return Err(AcquisitionError::Domain(format!(
            "mach bias needs M < M_s, got M = {mach}, M_s = {sonic}"
        )));
    }
    Ok(sonic / (sonic - mach))
}

/// `alpha4 = 0.5 q3max/q3 + 0.5/(q4max - q4)` at the top level, 1 below.
pub fn damage_bias(
    q3: f64,
    q4: f64,
    level: usize,
    levels: usize,
    q3max: f64,
    q4max: f64,
) -> Result<f64> {
    if ![q3, q4, q3max, q4max].iter().all(|v| v.is_finite()) {
        return Err(AcquisitionError::NonFinite("damage parameters"));
    }
    if level < levels {
        return Ok(1.0);
    }
    if q3 <= 0.0 {
        return Err(AcquisitionError::Domain(format!(
            "damage bias needs q3 > 0, got {q3}"
        )));
    }
    if q4 >= q4max {
        return Err(AcquisitionError::Domain(format!(
            "damage bias needs q4 < q4max = {q4max}, got {q4}"
        )));
    }
    Ok(0.5 * q3max / q3 + 0.5 / (q4max - q4))
}

/// Bias selection as written in run configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum BiasSpec {
    Identity,
    Mach {
        #[serde(default = "sonic")]
        ms: f64,
        /// 0-based index of the Mach coordinate.
        index: usize,
    },
    Damage {
        #[serde(default = "q3max")]
        q3max: f64,
        #[serde(default = "q4max")]
        q4max: f64,
        /// 0-based indices of the (q3, q4) coordinates.
        indices: [usize; 2],
    },
    /// Arithmetic over coordinate names, applied at the top level only.
    Custom { expr: String },
}

fn sonic() -> f64 {
    1.0
}

fn q3max() -> f64 {
    30.0
}

fn q4max() -> f64 {
    20.0
}

impl BiasSpec {
    pub const NAMES: [&'static str; 4] = ["identity", "mach", "damage", "custom"];

    /// Resolves coordinate references against a problem's coordinate names.
    pub fn compile(&self, names: &[String]) -> Result<Bias> {
        let dim = names.len();
        let check = |i: usize| {
            if i < dim {
                Ok(())
            } else {
                Err(AcquisitionError::Config(format!(
                    "coordinate index {i} out of range for dimension {dim}"
                )))
            }
        };
        Ok(match self {
            BiasSpec::Identity => Bias::Identity,
            BiasSpec::Mach { ms, index } => {
                check(*index)?;
                if !(ms.is_finite() && *ms > 0.0) {
                    return Err(AcquisitionError::Config(format!("ms must be positive, got {ms}")));
                }
                Bias::Mach {
                    ms: *ms,
                    index: *index,
                }
            }
            BiasSpec::Damage {
                q3max,
                q4max,
                indices,
            } => {
                check(indices[0])?;
                check(indices[1])?;
                if !(q3max.is_finite() && *q3max > 0.0 && q4max.is_finite()) {
                    return Err(AcquisitionError::Config(
                        "q3max must be positive and q4max finite".into(),
                    ));
                }
                Bias::Damage {
                    q3max: *q3max,
                    q4max: *q4max,
                    indices: *indices,
                }
            }
            BiasSpec::Custom { expr } => Bias::Custom(
                Expr::parse(expr, names).map_err(|e| AcquisitionError::Config(e.to_string()))?,
            ),
        })
    }
}

/// A compiled [`BiasSpec`].
#[derive(Clone, Debug, PartialEq)]
pub enum Bias {
    Identity,
    Mach { ms: f64, index: usize },
    Damage { q3max: f64, q4max: f64, indices: [usize; 2] },
    Custom(Expr),
}

impl PhysicsBias for Bias {
    fn alpha4(&self, x: &[f64], level: usize, levels: usize) -> Result<f64> {
        match self {
            Bias::Identity => Ok(1.0),
            Bias::Mach { ms, index } => mach_bias(x[*index], level, levels, *ms),
            Bias::Damage {
                q3max,
                q4max,
                indices,
            } => damage_bias(x[indices[0]], x[indices[1]], level, levels, *q3max, *q4max),
            Bias::Custom(e) => {
                if level < levels {
                    return Ok(1.0);
                }
                let v = e.eval(x);
                if v.is_finite() && v > 0.0 {
                    Ok(v)
                } else {
                    Err(AcquisitionError::Domain(format!(
                        "custom bias must be finite and positive, got {v} at {x:?}"
                    )))
                }
            }
        }
    }
}
