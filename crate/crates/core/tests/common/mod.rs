#![allow(dead_code)]

use std::f64::consts::PI;

use divflow::zoo::{self, ZooParams};
use divflow::{ChartedManifold, UnitTangentState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALL: [&str; 7] = [
    "torus",
    "cylinder",
    "revolution:1/(1+x^2)",
    "hyperbolic",
    "warp:ex2",
    "warp:ex3",
    "warp:ex4",
];

pub fn build(id: &str) -> zoo::ZooManifold {
    zoo::manifold(id, &ZooParams::default()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random chart point within unit-scale distance of the basepoint.
pub fn near_point(id: &str, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match id {
        "torus" => vec![rng.random::<f64>(), rng.random::<f64>()],
        "cylinder" | "revolution:1/(1+x^2)" => {
            vec![rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0 * PI)]
        }
        "hyperbolic" => vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        _ => vec![
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..2.0 * PI),
        ],
    }
}

/// Uniformly random unit direction at `p`.
pub fn random_unit(m: &ChartedManifold, p: &[f64], rng: &mut ChaCha8Rng) -> UnitTangentState {
    loop {
        let c: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = c.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            let c: Vec<f64> = c.iter().map(|a| a / n).collect();
            return UnitTangentState::from_frame(m, 0, p.to_vec(), &c).unwrap();
        }
    }
}

pub fn random_state(id: &str, m: &ChartedManifold, rng: &mut ChaCha8Rng) -> UnitTangentState {
    let p = near_point(id, rng);
    random_unit(m, &p, rng)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
