#![allow(dead_code)]

use mapsurrogate::design::{lhs_maximin, uniform_sample, SaConfig};
use mapsurrogate::gp::GpConfig;
use mapsurrogate::{Domain, Ensemble, GridSpec, SpatialMap};
use nalgebra::DMatrix;

pub fn toy_map(x: &[f64], grid: &GridSpec) -> SpatialMap {
    SpatialMap::from_fn(*grid, |z1, z2| {
        x[0] * (std::f64::consts::TAU * z1).sin()
            + (x[1] + 0.5) * (-((z1 - x[2]).powi(2) + (z2 - 0.5).powi(2)) / 0.05).exp()
            + x[0] * x[1] * z2
    })
    .unwrap()
}

pub fn toy_grid(n: usize) -> GridSpec {
    GridSpec::new(n, n, Domain::square(0.0, 1.0)).unwrap()
}

pub fn toy_ensemble_from(inputs: DMatrix<f64>, grid: &GridSpec) -> Ensemble {
    let maps = (0..inputs.nrows())
        .map(|i| toy_map(&inputs.row(i).iter().copied().collect::<Vec<_>>(), grid))
        .collect();
    Ensemble::new(inputs, maps, vec![(0.0, 1.0); 3]).unwrap()
}

pub fn toy_ensemble(n: usize, grid_n: usize, seed: u64) -> Ensemble {
    let cfg = SaConfig { stall_factor: 10, max_proposals: 20_000, ..SaConfig::default() };
    let d = lhs_maximin(n, 3, seed, &cfg).unwrap();
    toy_ensemble_from(d.points, &toy_grid(grid_n))
}

pub fn toy_test_inputs(n: usize, seed: u64) -> DMatrix<f64> {
    uniform_sample(n, 3, seed).points
}

pub fn fast_gp() -> GpConfig {
    GpConfig { multistarts: 3, max_iter: 60, ..GpConfig::default() }
}
