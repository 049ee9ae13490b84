//! Shared fixtures for the benchmarks.

use mapsurrogate::benchfn::{campbell2d_ensemble, Campbell2dSpec};
use mapsurrogate::design::{lhs_maximin, SaConfig};
use mapsurrogate::gp::GpConfig;
use mapsurrogate::select::SelectionTarget;
use mapsurrogate::{Ensemble, PipelineConfig, SelectionConfig};

/// Campbell2D ensemble on a short-annealed LHS.
pub fn campbell_fixture(n: usize, resolution: usize) -> Ensemble {
    let spec = Campbell2dSpec::with_resolution(resolution, resolution);
    let sa = SaConfig { stall_factor: 2, max_proposals: 20_000, ..SaConfig::default() };
    let x = lhs_maximin(n, 8, 1, &sa).unwrap().scaled(&spec.bounds).unwrap();
    campbell2d_ensemble(&x, &spec).unwrap()
}

/// Pipeline settings scaled to the fixture size.
pub fn bench_config(k_tilde: usize, n_pc: usize) -> PipelineConfig {
    PipelineConfig {
        selection: SelectionConfig::Energy { target: SelectionTarget::Count(k_tilde) },
        n_pc,
        gp: GpConfig { multistarts: 2, ..GpConfig::default() },
        ..PipelineConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_trains() {
        let ens = campbell_fixture(20, 16);
        assert_eq!(ens.len(), 20);
        let m = mapsurrogate::train(&ens, &bench_config(40, 2)).unwrap();
        assert_eq!(m.n_pc(), 2);
    }
}
