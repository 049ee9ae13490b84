//! Campbell2D benchmark, map error metrics and fold partitioning.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Ensemble, GridSpec, SpatialMap};
use crate::sensitivity::quantile_sorted;

pub use crate::pipeline::cv::{kfold_tune, CvConfigResult, CvReport, TuneCandidate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Campbell2dSpec {
    pub bounds: Vec<(f64, f64)>,
    pub domain: Domain,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl Default for Campbell2dSpec {
    fn default() -> Self {
        Campbell2dSpec {
            bounds: vec![(-1.0, 5.0); 8],
            domain: Domain::square(-90.0, 90.0),
            n_rows: 64,
            n_cols: 64,
        }
    }
}

impl Campbell2dSpec {
    pub fn with_resolution(n_rows: usize, n_cols: usize) -> Self {
        Campbell2dSpec { n_rows, n_cols, ..Self::default() }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n_rows, self.n_cols, self.domain)
    }
}

/// Campbell2D at one location.
pub fn campbell2d_at(x: &[f64], z1: f64, z2: f64) -> f64 {
    let t1 = x[0] * (-(0.8 * z1 + 0.2 * z2 - 10.0 * x[1]).powi(2) / (60.0 * x[0] * x[0])).exp();
    let t2 = (x[1] + x[3]) * ((0.5 * z1 + 0.5 * z2) * x[0] / 500.0).exp();
    let t3 = x[4] * (x[2] - 2.0) * (-(0.4 * z1 + 0.6 * z2 - 20.0 * x[5]).powi(2) / (40.0 * x[4] * x[4])).exp();
    let t4 = (x[5] + x[7]) * ((0.3 * z1 + 0.7 * z2) * x[6] / 250.0).exp();
    t1 + t2 + t3 + t4
}

/// Campbell2D map on `grid`.
pub fn campbell2d(x: &[f64], grid: &GridSpec) -> Result<SpatialMap> {
    if x.len() != 8 {
        return Err(Error::Shape(format!("Campbell2D takes 8 inputs, got {}", x.len())));
    }
    if x[0] == 0.0 || x[4] == 0.0 {
        return Err(Error::InvalidArgument("Campbell2D is singular at x1 = 0 or x5 = 0".into()));
    }
    SpatialMap::from_fn(*grid, |z1, z2| campbell2d_at(x, z1, z2))
}

/// Evaluate Campbell2D at every row of `inputs` (input units).
pub fn campbell2d_ensemble(inputs: &DMatrix<f64>, spec: &Campbell2dSpec) -> Result<Ensemble> {
    let grid = spec.grid()?;
    let maps = (0..inputs.nrows())
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = inputs.row(i).iter().copied().collect();
            campbell2d(&x, &grid).map_err(|e| Error::DesignRow { row: i, message: e.to_string() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(inputs.clone(), maps, spec.bounds.clone())
}

fn check_pairs(truth: &[SpatialMap], pred: &[SpatialMap]) -> Result<GridSpec> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::Shape(format!("{} truth maps vs {} predictions", truth.len(), pred.len())));
    }
    let g = *truth[0].grid();
    for (i, m) in truth.iter().chain(pred).enumerate() {
        if *m.grid() != g {
            return Err(Error::Map { index: i % truth.len(), message: "grid differs from the first truth map".into() });
        }
    }
    Ok(g)
}

/// Pixelwise root mean squared error over the sample.
pub fn rmse_map(truth: &[SpatialMap], pred: &[SpatialMap]) -> Result<SpatialMap> {
    let g = check_pairs(truth, pred)?;
    let n = truth.len() as f64;
    let vals = (0..g.n_pixels())
        .map(|p| {
            let s: f64 = truth.iter().zip(pred).map(|(t, q)| (t.values()[p] - q.values()[p]).powi(2)).sum();
            (s / n).sqrt()
        })
        .collect();
    SpatialMap::new(g, vals)
}

/// `1 - mean_z MSE(z) / mean_z Var(z)` with population variances.
pub fn q2(truth: &[SpatialMap], pred: &[SpatialMap]) -> Result<f64> {
    let g = check_pairs(truth, pred)?;
    let n = truth.len() as f64;
    let (mut mse, mut var) = (0.0, 0.0);
    for p in 0..g.n_pixels() {
        let m = truth.iter().map(|t| t.values()[p]).sum::<f64>() / n;
        var += truth.iter().map(|t| (t.values()[p] - m).powi(2)).sum::<f64>() / n;
        mse += truth.iter().zip(pred).map(|(t, q)| (t.values()[p] - q.values()[p]).powi(2)).sum::<f64>() / n;
    }
    if var == 0.0 {
        return Err(Error::Degenerate("truth maps have zero spatial variance".into()));
    }
    Ok(1.0 - mse / var)
}

/// Type-7 quantile of the pixel values of a map.
pub fn map_quantile(map: &SpatialMap, p: f64) -> f64 {
    let mut v = map.values().to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

/// Shuffle `0..n` and cut it into `k` folds whose sizes differ by at most one.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("cannot split {n} samples into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = idx[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}
