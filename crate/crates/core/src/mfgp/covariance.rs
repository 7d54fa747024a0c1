use nalgebra::DMatrix;

use super::{LevelHyperparameters, MfgpError, ObservationSet, Result};

/// Gaussian correlation kernel `s2 * exp(-sum_m w_m (x_m - x2_m)^2)`.
pub fn kernel(x: &[f64], x2: &[f64], hyper: &LevelHyperparameters) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(MfgpError::DimensionMismatch {
            expected: x.len(),
            got: x2.len(),
        });
    }
    if hyper.roughness.len() != x.len() {
        return Err(MfgpError::DimensionMismatch {
            expected: hyper.roughness.len(),
            got: x.len(),
        });
    }
    Ok(gaussian(x, x2, &hyper.roughness, hyper.process_variance))
}

#[inline]
pub(crate) fn gaussian(x: &[f64], x2: &[f64], roughness: &[f64], variance: f64) -> f64 {
    let mut s = 0.0;
    for ((a, b), w) in x.iter().zip(x2).zip(roughness) {
        let d = a - b;
        s += w * d * d;
    }
    variance * (-s).exp()
}

/// Prior covariance of the autoregressive hierarchy.
///
/// With `c_1 = k_1` and `c_l = rho_l^2 c_{l-1} + k_l`, the covariance between
/// `f_p(u)` and `f_q(v)` for `p <= q` is `(rho_{p+1} ... rho_q) c_p(u, v)`.
#[derive(Clone, Debug)]
pub struct CovarianceStructure {
    hyper: Vec<LevelHyperparameters>,
    // chain[a][b] = product of rho over levels a+1..=b (0-based, a <= b)
    chain: Vec<Vec<f64>>,
    prior_var: Vec<f64>,
    prior_mean: Vec<f64>,
}

impl CovarianceStructure {
    pub fn new(hyper: &[LevelHyperparameters], dim: usize) -> Result<Self> {
        if hyper.is_empty() {
            return Err(MfgpError::LevelOutOfRange {
                level: 0,
                levels: 0,
            });
        }
        for (i, h) in hyper.iter().enumerate() {
            h.validate(i + 1, dim)?;
        }
        let levels = hyper.len();
        let rho: Vec<f64> = hyper.iter().map(|h| h.scaling.unwrap_or(1.0)).collect();
        let mut chain = vec![vec![0.0; levels]; levels];
        for a in 0..levels {
            chain[a][a] = 1.0;
            for b in a + 1..levels {
                chain[a][b] = chain[a][b - 1] * rho[b];
            }
        }
        let mut prior_var = Vec::with_capacity(levels);
        let mut prior_mean = Vec::with_capacity(levels);
        for l in 0..levels {
            let (v, m) = if l == 0 {
                (hyper[0].process_variance, 0.0)
            } else {
                (
                    rho[l] * rho[l] * prior_var[l - 1] + hyper[l].process_variance,
                    rho[l] * prior_mean[l - 1] + hyper[l].trend.unwrap_or(0.0),
                )
            };
            prior_var.push(v);
            prior_mean.push(m);
        }
        Ok(Self {
            hyper: hyper.to_vec(),
            chain,
            prior_var,
            prior_mean,
        })
    }

    pub fn levels(&self) -> usize {
        self.hyper.len()
    }

    pub fn hyperparameters(&self) -> &[LevelHyperparameters] {
        &self.hyper
    }

    /// Constant prior mean of level `level` (1-based).
    pub fn prior_mean(&self, level: usize) -> f64 {
        self.prior_mean[level - 1]
    }

    /// Prior variance `c_l(x, x)` of level `level` (1-based).
    pub fn prior_variance(&self, level: usize) -> f64 {
        self.prior_var[level - 1]
    }

    /// Product of scaling factors linking `lower` to `upper` (1-based, lower <= upper).
    pub fn chain(&self, lower: usize, upper: usize) -> f64 {
        self.chain[lower - 1][upper - 1]
    }

    /// Writes `c_1(u, v) .. c_upto(u, v)` into `out[..upto]`.
    pub(crate) fn level_covariances(&self, u: &[f64], v: &[f64], upto: usize, out: &mut [f64]) {
        let mut acc = 0.0;
        for l in 0..upto {
            let h = &self.hyper[l];
            let k = gaussian(u, v, &h.roughness, h.process_variance);
            acc = if l == 0 {
                k
            } else {
                let rho = h.scaling.unwrap_or(1.0);
                rho * rho * acc + k
            };
            out[l] = acc;
        }
    }

    /// Covariance between `f_p(u)` and `f_q(v)`; levels are 1-based and the
    /// points are in unit-cube coordinates.
    pub fn covariance(&self, u: &[f64], p: usize, v: &[f64], q: usize) -> f64 {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let mut buf = [0.0; 8];
        let mut heap;
        let c: &mut [f64] = if lo <= buf.len() {
            &mut buf[..lo]
        } else {
            heap = vec![0.0; lo];
            &mut heap
        };
        self.level_covariances(u, v, lo, c);
        self.chain(lo, hi) * c[lo - 1]
    }
}

/// Dense prior covariance of all observations (in dataset order) plus
/// `noise_variance` on the diagonal.
pub fn assemble_kernel_matrix(
    data: &ObservationSet,
    hyper: &[LevelHyperparameters],
    noise_variance: f64,
) -> Result<DMatrix<f64>> {
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
    let structure = CovarianceStructure::new(hyper, data.dim())?;
    let units: Vec<Vec<f64>> = data.iter().map(|o| data.to_unit(&o.x)).collect();
    let levels: Vec<usize> = data.iter().map(|o| o.level).collect();
    let k = structure.matrix(&units, &levels, noise_variance);
    if k.iter().any(|v| !v.is_finite()) {
        return Err(MfgpError::NonFinite("kernel matrix entry"));
    }
    Ok(k)
}

impl CovarianceStructure {
    pub(crate) fn matrix(&self, units: &[Vec<f64>], levels: &[usize], noise_variance: f64) -> DMatrix<f64> {
        let n = units.len();
        let mut k = DMatrix::zeros(n, n);
        let mut c = vec![0.0; self.levels()];
        for i in 0..n {
            for j in 0..=i {
                let (lo, hi) = if levels[i] <= levels[j] {
                    (levels[i], levels[j])
                } else {
                    (levels[j], levels[i])
                };
                self.level_covariances(&units[i], &units[j], lo, &mut c);
                let v = self.chain(lo, hi) * c[lo - 1];
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += noise_variance;
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mfgp::Observation;

    #[test]
    fn kernel_values() {
        let h = LevelHyperparameters::base(vec![1.0], 2.0);
        assert_eq!(kernel(&[0.3], &[0.3], &h).unwrap(), 2.0);
        let h = LevelHyperparameters::base(vec![1.0], 1.0);
        assert!((kernel(&[0.0], &[1.0], &h).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        let h = LevelHyperparameters::base(vec![1.0, 2.0], 1.0);
        let v = kernel(&[0.0, 0.0], &[1.0, 1.0], &h).unwrap();
        assert!((v - (-3.0_f64).exp()).abs() < 1e-15);
        assert!((v - 0.049_787).abs() < 1e-6);
        assert!(kernel(&[0.0], &[1.0, 2.0], &h).is_err());
    }

    #[test]
    fn single_observation_matrix() {
        let mut d = ObservationSet::new(vec![(0.0, 1.0)], 1).unwrap();
        d.push(Observation { x: vec![0.4], level: 1, y: 1.0 }).unwrap();
        let k = assemble_kernel_matrix(&d, &[LevelHyperparameters::base(vec![3.0], 1.0)], 0.0).unwrap();
        assert_eq!(k.nrows(), 1);
        assert_eq!(k[(0, 0)], 1.0);
    }

    #[test]
    fn zero_discrepancy_is_rank_one() {
        let mut d = ObservationSet::new(vec![(0.0, 1.0)], 2).unwrap();
        d.push(Observation { x: vec![0.4], level: 1, y: 1.0 }).unwrap();
        d.push(Observation { x: vec![0.4], level: 2, y: 1.0 }).unwrap();
        let hyper = [
            LevelHyperparameters::base(vec![3.0], 1.7),
            LevelHyperparameters::discrepancy(vec![1.0], 0.0, 1.0, 0.0),
        ];
        let k = assemble_kernel_matrix(&d, &hyper, 0.0).unwrap();
        assert!(k.iter().all(|v| *v == 1.7));
    }

    #[test]
    fn matrix_is_exactly_symmetric() {
        let mut d = ObservationSet::new(vec![(0.0, 1.0), (0.0, 1.0)], 3).unwrap();
        for (i, l) in [1, 1, 2, 3, 2, 1].iter().enumerate() {
            let t = i as f64 / 6.0;
            d.push(Observation { x: vec![t, (3.0 * t).fract()], level: *l, y: t }).unwrap();
        }
        let hyper = [
            LevelHyperparameters::base(vec![3.0, 0.5], 1.7),
            LevelHyperparameters::discrepancy(vec![1.0, 2.0], 0.3, -0.8, 0.1),
            LevelHyperparameters::discrepancy(vec![4.0, 1.0], 0.2, 1.3, 0.0),
        ];
        let k = assemble_kernel_matrix(&d, &hyper, 0.01).unwrap();
        assert_eq!((&k - k.transpose()).abs().max(), 0.0);
    }

    #[test]
    fn prior_moments_follow_recursion() {
        let hyper = [
            LevelHyperparameters::base(vec![1.0], 2.0),
            LevelHyperparameters::discrepancy(vec![1.0], 0.5, 0.5, 1.0),
            LevelHyperparameters::discrepancy(vec![1.0], 0.25, 2.0, -1.0),
        ];
        let s = CovarianceStructure::new(&hyper, 1).unwrap();
        assert_eq!(s.prior_variance(1), 2.0);
        assert_eq!(s.prior_variance(2), 0.25 * 2.0 + 0.5);
        assert_eq!(s.prior_variance(3), 4.0 * 1.0 + 0.25);
        assert_eq!(s.prior_mean(2), 1.0);
        assert_eq!(s.prior_mean(3), 2.0 * 1.0 - 1.0);
        assert_eq!(s.chain(1, 3), 1.0);
        assert_eq!(s.covariance(&[0.2], 1, &[0.2], 3), 2.0 * 0.5 * 2.0);
    }
}
