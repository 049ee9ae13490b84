//! Train the wavelet surrogate on Campbell2D and report test-set Q².

use std::time::Instant;

use mapsurrogate::benchfn::{campbell2d_ensemble, q2, Campbell2dSpec};
use mapsurrogate::design::{lhs_maximin, uniform_sample, SaConfig};
use mapsurrogate::pipeline::train_timed;
use mapsurrogate::{run_sensitivity, SensitivityOptions, BasisConfig, PipelineConfig, WaveletFamily};

fn main() -> mapsurrogate::Result<()> {
    let levels = std::env::args().nth(1).and_then(|s| s.parse().ok());
    let spec = Campbell2dSpec::default();
    let t = Instant::now();
    let design = lhs_maximin(200, 8, 1, &SaConfig::default())?;
    println!("design {:.1}s, maximin {:.4}", t.elapsed().as_secs_f64(), design.criterion.unwrap());
    let train_set = campbell2d_ensemble(&design.scaled(&spec.bounds)?, &spec)?;
    let config = PipelineConfig {
        basis: BasisConfig::Wavelet { family: WaveletFamily::D4, levels },
        ..PipelineConfig::default()
    };
    let (model, timings) = train_timed(&train_set, &config)?;
    println!("{}\n{timings}", model.report());
    let test = campbell2d_ensemble(&uniform_sample(1000, 8, 2).scaled(&spec.bounds)?, &spec)?;
    let pred = model.predict_maps(test.inputs())?;
    println!("Q2 = {:.4}", q2(test.outputs(), &pred)?);
    let t = Instant::now();
    let sa = run_sensitivity(&model, &SensitivityOptions::default())?;
    println!("sensitivity {:.1}s", t.elapsed().as_secs_f64());
    for i in 0..8 {
        println!("X{}: first {:.3} total {:.3}", i + 1, sa.gsi.first_order[i], sa.gsi.total[i]);
    }
    Ok(())
}
