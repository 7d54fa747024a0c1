use std::sync::Arc;

use super::{GroundTruth, MultifidelityProblem};

/// Location and value of the high-fidelity minimum on [0, 1].
pub const FORRESTER_OPTIMUM: (f64, f64) = (0.757_248_758_5, -6.020_740_055_767_083);

pub fn forrester_hf(x: f64) -> f64 {
    (6.0 * x - 2.0).powi(2) * (12.0 * x - 4.0).sin()
}

pub fn forrester_lf(x: f64) -> f64 {
    0.5 * forrester_hf(x) + 10.0 * (x - 0.5) - 5.0
}

/// `d = 1` on [0, 1], two levels with `lambda = (0.125, 1)`.
pub fn forrester_pair() -> MultifidelityProblem {
    MultifidelityProblem::new(
        "forrester",
        vec!["x".into()],
        vec![(0.0, 1.0)],
        vec![0.125, 1.0],
        vec![
            Arc::new(|x: &[f64]| forrester_lf(x[0])),
            Arc::new(|x: &[f64]| forrester_hf(x[0])),
        ],
    )
    .expect("forrester definition is valid")
    .with_ground_truth(GroundTruth {
        x: vec![FORRESTER_OPTIMUM.0],
        value: FORRESTER_OPTIMUM.1,
    })
}
