use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Mixes a base seed with a stream index (splitmix64 finalizer), so that
/// per-level and per-iteration generators are independent but reproducible.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` points in the box, one per row/column bin in every coordinate.
pub fn latin_hypercube(n: usize, bounds: &[(f64, f64)], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![Vec::with_capacity(bounds.len()); n];
    for &(lo, hi) in bounds {
        let mut bins: Vec<usize> = (0..n).collect();
        bins.shuffle(&mut rng);
        for (p, bin) in points.iter_mut().zip(bins) {
            let u = (bin as f64 + rng.random::<f64>()) / n as f64;
            p.push(lo + u * (hi - lo));
        }
    }
    points
}

/// Initial sample counts per level (lowest first) and the design seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitPlan {
    pub counts: Vec<usize>,
    pub seed: u64,
}

/// Cumulative cost `B` of all evaluations and the stopping threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetState {
    pub consumed: f64,
    pub max: f64,
}

impl BudgetState {
    pub fn new(max: f64) -> Self {
        Self { consumed: 0.0, max }
    }

    pub fn charge(&mut self, lambda: f64) {
        self.consumed += lambda;
    }

    /// The loop stops once `consumed >= max`; the last query may therefore
    /// overshoot by at most one top-level cost.
    pub fn exhausted(&self) -> bool {
        self.consumed >= self.max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_per_bin() {
        let pts = latin_hypercube(4, &[(0.0, 1.0)], 9);
        let mut bins: Vec<usize> = pts.iter().map(|p| (p[0] * 4.0) as usize).collect();
        bins.sort();
        assert_eq!(bins, vec![0, 1, 2, 3]);
    }

    #[test]
    fn deterministic_and_inside() {
        let b = [(-1.0, 1.0), (0.6, 0.99)];
        let a = latin_hypercube(7, &b, 5);
        assert_eq!(a, latin_hypercube(7, &b, 5));
        assert_ne!(a, latin_hypercube(7, &b, 6));
        for p in &a {
            assert!(p[0] >= -1.0 && p[0] <= 1.0 && p[1] >= 0.6 && p[1] <= 0.99);
        }
        assert_eq!(latin_hypercube(1, &b, 0).len(), 1);
    }

    #[test]
    fn budget_overshoot_rule() {
        let mut b = BudgetState::new(1.0);
        b.charge(0.5);
        assert!(!b.exhausted());
        b.charge(0.5);
        assert!(b.exhausted());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
