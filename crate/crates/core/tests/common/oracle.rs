//! Dense reference implementation of the multifidelity GP posterior.
//!
//! Shares no code with the library: the cross-level covariance is written as
//! the plain recursion over the autoregressive definition, and the kernel
//! matrix is inverted with Gauss-Jordan elimination.

#![allow(dead_code)]

#[derive(Clone, Debug)]
pub struct OracleLevel {
    pub roughness: Vec<f64>,
    pub variance: f64,
    pub rho: f64,
    pub beta: f64,
}

pub struct Oracle {
    pub levels: Vec<OracleLevel>,
    pub bounds: Vec<(f64, f64)>,
    pub xs: Vec<Vec<f64>>,
    pub ls: Vec<usize>,
    pub ys: Vec<f64>,
    /// Added to the diagonal of each level's observations (noise variance
    /// plus any factorization jitter), indexed by level - 1. Used for
    /// variances and the likelihood.
    pub diagonal: Vec<f64>,
    /// Diagonal for the posterior mean: the mean is solved against the
    /// unjittered matrix.
    pub noise: f64,
}

fn unit(bounds: &[(f64, f64)], x: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
        .collect()
}

pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn log_det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m = a.to_vec();
    let mut acc = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        acc += p.abs().ln();
        for row in col + 1..n {
            let f = m[row][col] / p;
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    acc
}

impl Oracle {
    fn base(&self, level: usize, u: &[f64], v: &[f64]) -> f64 {
        let h = &self.levels[level - 1];
        let s: f64 = (0..u.len())
            .map(|m| h.roughness[m] * (u[m] - v[m]) * (u[m] - v[m]))
            .sum();
        h.variance * (-s).exp()
    }

    /// cov(f_p(u), f_q(v)) on unit-cube inputs.
    pub fn cov(&self, p: usize, u: &[f64], q: usize, v: &[f64]) -> f64 {
        if p == 1 && q == 1 {
            self.base(1, u, v)
        } else if p > q {
            self.levels[p - 1].rho * self.cov(p - 1, u, q, v)
        } else if q > p {
            self.levels[q - 1].rho * self.cov(p, u, q - 1, v)
        } else {
            let rho = self.levels[p - 1].rho;
            rho * rho * self.cov(p - 1, u, p - 1, v) + self.base(p, u, v)
        }
    }

    pub fn prior_mean(&self, level: usize) -> f64 {
        if level == 1 {
            0.0
        } else {
            self.levels[level - 1].rho * self.prior_mean(level - 1) + self.levels[level - 1].beta
        }
    }

    pub fn kernel_matrix(&self) -> Vec<Vec<f64>> {
        self.kernel_matrix_with(&self.diagonal)
    }

    fn kernel_matrix_with(&self, diagonal: &[f64]) -> Vec<Vec<f64>> {
        let n = self.xs.len();
        let us: Vec<_> = self.xs.iter().map(|x| unit(&self.bounds, x)).collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut v = self.cov(self.ls[i], &us[i], self.ls[j], &us[j]);
                        if i == j {
                            v += diagonal[self.ls[i] - 1];
                        }
                        v
                    })
                    .collect()
            })
            .collect()
    }

    fn residual(&self) -> Vec<f64> {
        self.ys
            .iter()
            .zip(&self.ls)
            .map(|(y, l)| y - self.prior_mean(*l))
            .collect()
    }

    fn kvec(&self, x: &[f64], level: usize) -> Vec<f64> {
        let u = unit(&self.bounds, x);
        self.xs
            .iter()
            .zip(&self.ls)
            .map(|(xj, lj)| self.cov(level, &u, *lj, &unit(&self.bounds, xj)))
            .collect()
    }

    fn quad(kinv: &[Vec<f64>], a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i] * kinv[i][j] * b[j];
            }
        }
        s
    }

    /// (mean, variance) of level `level` at `x`.
    pub fn posterior(&self, x: &[f64], level: usize) -> (f64, f64) {
        let kinv = invert(&self.kernel_matrix());
        let k = self.kvec(x, level);
        let u = unit(&self.bounds, x);
        let exact = invert(&self.kernel_matrix_with(&vec![self.noise; self.levels.len()]));
        let mean = self.prior_mean(level) + Self::quad(&exact, &k, &self.residual());
        let var = self.cov(level, &u, level, &u) - Self::quad(&kinv, &k, &k);
        (mean, var)
    }

    /// Posterior covariance between levels `p` and `q` at the same `x`.
    pub fn posterior_cross(&self, x: &[f64], p: usize, q: usize) -> f64 {
        let kinv = invert(&self.kernel_matrix());
        let u = unit(&self.bounds, x);
        self.cov(p, &u, q, &u) - Self::quad(&kinv, &self.kvec(x, p), &self.kvec(x, q))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let k = self.kernel_matrix();
        let r = self.residual();
        let n = r.len() as f64;
        -0.5 * Self::quad(&invert(&k), &r, &r)
            - 0.5 * log_det(&k)
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Standard normal CDF: Maclaurin series of erf near the origin, the
/// Laplace continued fraction of erfc in the tails.
pub fn normal_cdf_series(z: f64) -> f64 {
    if z.abs() > 3.0 {
        let x = z.abs() / std::f64::consts::SQRT_2;
        let mut t = x;
        for k in (1..=300).rev() {
            t = x + (k as f64 / 2.0) / t;
        }
        let tail = 0.5 * (-x * x).exp() / (std::f64::consts::PI.sqrt() * t);
        return if z < 0.0 { tail } else { 1.0 - tail };
    }
    let x = z / std::f64::consts::SQRT_2;
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x * x / n as f64;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 {
            break;
        }
    }
    0.5 + sum / std::f64::consts::PI.sqrt()
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Textbook expected improvement for minimization.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    let z = (best - mean) / sd;
    sd * (z * normal_cdf_series(z) + normal_pdf(z))
}
