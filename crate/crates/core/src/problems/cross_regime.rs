//! Two design variables `(w, M)` on `[-1, 1] x [0.6, 0.99]`.
//!
//! ```text
//! s(M)  = 0.02 / (1.02 - M)                      shock-like, steepens as M -> 1
//! HF    = (w - 0.3 - 0.4 (M - 0.6))^2 - 1.5 M + s(M)
//! MF    = HF + e2(M) (-1 + 0.3 cos 3w),   e2 = 0.4 (s - s(0.6)) + 0.003
//! LF    = HF + e1(M) (-1 + 0.5 sin 4w),   e1 = 0.9 (s - s(0.6)) + 0.005
//! ```
//!
//! The discrepancies are tiny in the subsonic corner and grow with `M`
//! (`e1 >= e2` everywhere), so the cheap levels are trustworthy only at low
//! `M`. The high-fidelity minimum sits at `M* = 1.02 - sqrt(0.02 / 1.5)`,
//! inside the region where the cheap levels are worst.

use std::sync::Arc;

use super::{GroundTruth, MultifidelityProblem};

const M_LOW: f64 = 0.6;

pub fn shock_term(m: f64) -> f64 {
    0.02 / (1.02 - m)
}

fn hf(w: f64, m: f64) -> f64 {
    (w - 0.3 - 0.4 * (m - M_LOW)).powi(2) - 1.5 * m + shock_term(m)
}

fn growth(m: f64) -> f64 {
    shock_term(m) - shock_term(M_LOW)
}

fn mf(w: f64, m: f64) -> f64 {
    hf(w, m) + (0.4 * growth(m) + 0.003) * (-1.0 + 0.3 * (3.0 * w).cos())
}

fn lf(w: f64, m: f64) -> f64 {
    hf(w, m) + (0.9 * growth(m) + 0.005) * (-1.0 + 0.5 * (4.0 * w).sin())
}

/// `(w*, M*, f*)` of the high-fidelity level.
pub const CROSS_REGIME_OPTIMUM: (f64, f64, f64) = {
    // sqrt(0.02 / 1.5) = 0.115470053837925...
    let m = 1.02 - 0.115_470_053_837_925_15;
    let w = 0.3 + 0.4 * (m - M_LOW);
    (w, m, -1.5 * m + 0.02 / (1.02 - m))
};

/// `d = 2`, three levels with `lambda = (0.125, 0.2, 1)`; `psi = M`.
pub fn cross_regime_problem() -> MultifidelityProblem {
    let (w, m, f) = CROSS_REGIME_OPTIMUM;
    MultifidelityProblem::new(
        "cross_regime",
        vec!["w".into(), "M".into()],
        vec![(-1.0, 1.0), (0.6, 0.99)],
        vec![0.125, 0.2, 1.0],
        vec![
            Arc::new(|x: &[f64]| lf(x[0], x[1])),
            Arc::new(|x: &[f64]| mf(x[0], x[1])),
            Arc::new(|x: &[f64]| hf(x[0], x[1])),
        ],
    )
    .expect("cross-regime definition is valid")
    .with_psi(vec![1], "Mach number M (coordinate 2)")
    .with_ground_truth(GroundTruth {
        x: vec![w, m],
        value: f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimum_is_stationary() {
        let (w, m, f) = CROSS_REGIME_OPTIMUM;
        assert!((hf(w, m) - f).abs() < 1e-12);
        for (dw, dm) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
            assert!(hf(w + dw, m + dm) > f);
        }
    }

    #[test]
    fn psi_is_mach() {
        let p = cross_regime_problem();
        assert_eq!(p.psi(&[0.2, 0.75]), vec![0.75]);
    }
}
