//! Box-constrained Nelder-Mead simplex search.
//!
//! Trial points are projected onto the box before evaluation, so the
//! objective is never queried outside `[lower, upper]`. The starting point is
//! always a vertex of the initial simplex, which means the returned value is
//! never worse than the value at the start.

/// Options for [`minimize`].
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Hard cap on objective evaluations (including the initial simplex).
    pub max_evals: usize,
    /// Initial edge length, as a fraction of each coordinate's range.
    pub initial_step: f64,
    /// Relative spread of vertex values below which the search stops.
    pub ftol: f64,
    /// Absolute vertex spread (in box units) below which the search stops.
    pub xtol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 400,
            initial_step: 0.1,
            ftol: 1e-10,
            xtol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(*lo, *hi);
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `f` over the box `[lower, upper]` starting from `start`.
pub fn minimize<F>(
    mut f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &SimplexOptions,
) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    debug_assert_eq!(lower.len(), n);
    debug_assert_eq!(upper.len(), n);

    let mut x0 = start.to_vec();
    project(&mut x0, lower, upper);
    let f0 = sanitize(f(&x0));
    let mut evals = 1;
    if n == 0 || opts.max_evals <= 1 {
        return SimplexResult {
            x: x0,
            value: f0,
            evals,
        };
    }

    let mut vertices: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    vertices.push((x0.clone(), f0));
    for i in 0..n {
        let range = upper[i] - lower[i];
        let step = opts.initial_step * if range > 0.0 { range } else { 1.0 };
        let mut v = x0.clone();
        v[i] = if v[i] + step <= upper[i] {
            v[i] + step
        } else {
            v[i] - step
        };
        project(&mut v, lower, upper);
        let fv = sanitize(f(&v));
        evals += 1;
        vertices.push((v, fv));
    }

    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];

    while evals < opts.max_evals {
        // stable sort keeps the start vertex ahead of equal-valued ones
        vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = vertices[0].1;
        let worst = vertices[n].1;

        let spread_f = (worst - best).abs();
        let spread_x = vertices[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&vertices[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max);
        if best.is_finite() && spread_f <= opts.ftol * (1.0 + best.abs()) && spread_x <= opts.xtol
        {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (v, _) in &vertices[..n] {
            for (c, vi) in centroid.iter_mut().zip(v) {
                *c += vi / n as f64;
            }
        }

        let worst_x = vertices[n].0.clone();
        let along = |coef: f64, out: &mut Vec<f64>| {
            for i in 0..n {
                out[i] = centroid[i] + coef * (worst_x[i] - centroid[i]);
            }
            project(out, lower, upper);
        };

        along(-1.0, &mut trial);
        let f_reflect = sanitize(f(&trial));
        evals += 1;
        let second_worst = vertices[n - 1].1;

        if f_reflect < best {
            let reflected = trial.clone();
            along(-2.0, &mut trial);
            let f_expand = sanitize(f(&trial));
            evals += 1;
            vertices[n] = if f_expand < f_reflect {
                (trial.clone(), f_expand)
            } else {
                (reflected, f_reflect)
            };
            continue;
        }
        if f_reflect < second_worst {
            vertices[n] = (trial.clone(), f_reflect);
            continue;
        }

        let (coef, reference) = if f_reflect < worst {
            (-0.5, f_reflect)
        } else {
            (0.5, worst)
        };
        along(coef, &mut trial);
        let f_contract = sanitize(f(&trial));
        evals += 1;
        if f_contract < reference {
            vertices[n] = (trial.clone(), f_contract);
            continue;
        }

        // shrink toward the best vertex
        let best_x = vertices[0].0.clone();
        for (v, fv) in vertices.iter_mut().skip(1) {
            if evals >= opts.max_evals {
                break;
            }
            for (vi, bi) in v.iter_mut().zip(&best_x) {
                *vi = bi + 0.5 * (*vi - bi);
            }
            project(v, lower, upper);
            *fv = sanitize(f(v));
            evals += 1;
        }
    }

    vertices.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = vertices.swap_remove(0);
    SimplexResult { x, value, evals }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = SimplexOptions {
            max_evals: 5000,
            ..Default::default()
        };
        let r = minimize(rosen, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-3, "{:?}", r);
        assert!((r.x[1] - 1.0).abs() < 1e-3, "{:?}", r);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| x[0] + x[1];
        let r = minimize(f, &[0.5, 0.5], &[0.0, 0.2], &[1.0, 1.0], &Default::default());
        assert!(r.x[0] >= 0.0 && r.x[1] >= 0.2);
        assert!((r.value - 0.2).abs() < 1e-6);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| (x[0] * 7.0).sin() + (x[1] * 3.0).cos();
        let start = [0.3, 0.8];
        let f0 = f(&start);
        let opts = SimplexOptions {
            max_evals: 5,
            ..Default::default()
        };
        let r = minimize(f, &start, &[0.0, 0.0], &[1.0, 1.0], &opts);
        assert!(r.value <= f0);
        assert!(r.evals <= 5 + 2);
    }

    #[test]
    fn nan_is_treated_as_worst() {
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { (x[0] - 0.2).powi(2) };
        let r = minimize(f, &[0.4], &[0.0], &[1.0], &Default::default());
        assert!((r.x[0] - 0.2).abs() < 1e-4);
    }
}
