//! Halton low-discrepancy points in the unit cube.

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// The `index`-th Halton point in `dim` dimensions (`dim <= 32`).
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton sequence supports up to 32 dimensions");
    PRIMES[..dim]
        .iter()
        .map(|&b| radical_inverse(index, b))
        .collect()
}

/// `count` Halton points starting at `first`, each shifted by `shift`
/// modulo 1 (Cranley-Patterson rotation).
pub fn shifted_halton(first: u64, count: usize, shift: &[f64]) -> Vec<Vec<f64>> {
    (0..count as u64)
        .map(|i| {
            halton(first + i, shift.len())
                .into_iter()
                .zip(shift)
                .map(|(h, s)| (h + s).fract())
                .collect()
        })
        .collect()
}
