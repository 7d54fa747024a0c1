//! Cholesky factorization with adaptive diagonal jitter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Jitter ladder bounds, relative to the mean diagonal entry.
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

/// A successful factorization of `K + jitter * I`.
#[derive(Clone, Debug)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Factorizes `matrix + j I`, starting at `j = JITTER_START * trace/n` and
/// escalating by 10x up to `JITTER_MAX * trace/n`. `boost` scales both ends
/// of the ladder. Returns `None` when every rung fails or an entry is not
/// finite.
pub fn cholesky_with_jitter(matrix: &DMatrix<f64>, boost: f64) -> Option<JitteredCholesky> {
    cholesky_with_jitter_upto(matrix, boost, JITTER_MAX)
}

/// Same ladder, stopping at `max_relative * trace/n` instead of
/// [`JITTER_MAX`].
pub fn cholesky_with_jitter_upto(
    matrix: &DMatrix<f64>,
    boost: f64,
    max_relative: f64,
) -> Option<JitteredCholesky> {
    let n = matrix.nrows();
    if n == 0 || matrix.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mean_diag = matrix.trace() / n as f64;
    let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut jitter = JITTER_START * base * boost;
    let cap = max_relative * base * boost * (1.0 + 1e-12);
    while jitter <= cap {
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(factor) = Cholesky::new(m) {
            if factor.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Some(JitteredCholesky { factor, jitter });
            }
        }
        jitter *= 10.0;
    }
    None
}

/// Iteration cap for [`refine`], on top of the system size.
const MAX_REFINEMENTS: usize = 50;

/// Solves `k a = r` by conjugate gradients preconditioned with the jittered
/// factor `lower` (of `k + D`), starting from `a`. The jitter only
/// stabilizes the factorization; a noise-free mean should pass through the
/// data. Stops once `max |k a - r| <= tol` and returns the iterate with the
/// smallest residual.
pub fn refine(k: &DMatrix<f64>, lower: &DMatrix<f64>, r: &DVector<f64>, a: DVector<f64>, tol: f64) -> DVector<f64> {
    let precondition = |v: &DVector<f64>| {
        let w = lower.solve_lower_triangular(v).expect("positive diagonal");
        lower.tr_solve_lower_triangular(&w).expect("positive diagonal")
    };
    let target = tol.max(1e-14 * r.amax());
    let mut x = a;
    let mut res = r - k * &x;
    let mut best = (res.amax(), x.clone());
    let mut z = precondition(&res);
    let mut p = z.clone();
    let mut rz = res.dot(&z);
    for _ in 0..r.len() + MAX_REFINEMENTS {
        if best.0 <= target || !(rz > 0.0) {
            break;
        }
        let kp = k * &p;
        let curvature = p.dot(&kp);
        if !(curvature > 0.0) {
            break;
        }
        let step = rz / curvature;
        x.axpy(step, &p, 1.0);
        res.axpy(-step, &kp, 1.0);
        let size = (r - k * &x).amax();
        if size < best.0 {
            best = (size, x.clone());
        }
        z = precondition(&res);
        let rz_next = res.dot(&z);
        p = &z + &p * (rz_next / rz);
        rz = rz_next;
    }
    best.1
}
