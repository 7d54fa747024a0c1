#![allow(dead_code)]

pub mod oracle;

use oracle::{Oracle, OracleLevel};
use pamfbo::mfgp::{LevelHyperparameters, MfGpModel, Observation, ObservationSet};

pub fn obs(x: &[f64], level: usize, y: f64) -> Observation {
    Observation {
        x: x.to_vec(),
        level,
        y,
    }
}

pub fn oracle_for(model: &MfGpModel) -> Oracle {
    let data = model.data();
    Oracle {
        levels: model
            .hyperparameters()
            .iter()
            .map(|h| OracleLevel {
                roughness: h.roughness.clone(),
                variance: h.process_variance,
                rho: h.scaling.unwrap_or(1.0),
                beta: h.trend.unwrap_or(0.0),
            })
            .collect(),
        bounds: data.bounds().to_vec(),
        xs: data.iter().map(|o| o.x.clone()).collect(),
        ls: data.iter().map(|o| o.level).collect(),
        ys: data.iter().map(|o| o.y).collect(),
        diagonal: model.level_jitters().iter().map(|j| model.noise_variance() + j).collect(),
        noise: model.noise_variance(),
    }
}

pub fn close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(scale)
}

/// Four low-fidelity and two high-fidelity points on [0, 2].
pub fn toy_two_level() -> MfGpModel {
    let mut data = ObservationSet::new(vec![(0.0, 2.0)], 2).unwrap();
    for (x, y) in [(0.1, 0.3), (0.6, -0.4), (1.2, 0.9), (1.9, 0.2)] {
        data.push(obs(&[x], 1, y)).unwrap();
    }
    data.push(obs(&[0.6], 2, -0.1)).unwrap();
    data.push(obs(&[1.5], 2, 1.7)).unwrap();
    let hyper = vec![
        LevelHyperparameters::base(vec![3.0], 1.3),
        LevelHyperparameters::discrepancy(vec![5.0], 0.4, 0.8, 0.25),
    ];
    MfGpModel::with_hyperparameters(&data, hyper, 0.0).unwrap()
}
