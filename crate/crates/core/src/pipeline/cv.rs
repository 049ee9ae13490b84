//! k-fold cross-validation over (K~, n_pc) candidates.
//!
//! Candidates sharing a K~ share their fits: one model is trained per fold
//! with the largest requested n_pc, and smaller n_pc values reuse its
//! leading components (component `l` does not depend on how many follow).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{train, PipelineConfig};
use crate::benchfn::{kfold_partition, map_quantile, rmse_map};
use crate::error::{Error, Result};
use crate::grid::{Ensemble, SpatialMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TuneCandidate {
    pub k_tilde: usize,
    pub n_pc: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfigResult {
    pub candidate: TuneCandidate,
    /// Spatial root mean of each fold's RMSE map.
    pub fold_rmse: Vec<f64>,
    /// Spatial mean of the fold-averaged RMSE map.
    pub mean_rmse: f64,
    /// 90% quantile (type 7) of the fold-averaged RMSE map; the score.
    pub q90: f64,
    pub error: Option<String>,
}

impl CvConfigResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k_folds: usize,
    pub seed: u64,
    pub results: Vec<CvConfigResult>,
    pub best: Option<TuneCandidate>,
}

impl CvReport {
    pub fn best_result(&self) -> Option<&CvConfigResult> {
        let b = self.best?;
        self.results.iter().find(|r| r.candidate == b)
    }

    /// CSV with one row per candidate: `k_tilde,n_pc,fold_1..fold_k,mean,q90,error`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let folds: Vec<String> = (1..=self.k_folds).map(|f| format!("fold_{f}")).collect();
        writeln!(out, "k_tilde,n_pc,{},mean,q90,error", folds.join(",")).expect("write to memory");
        for r in &self.results {
            let fr: Vec<String> = if r.fold_rmse.len() == self.k_folds {
                r.fold_rmse.iter().map(f64::to_string).collect()
            } else {
                vec![String::new(); self.k_folds]
            };
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.candidate.k_tilde,
                r.candidate.n_pc,
                fr.join(","),
                r.mean_rmse,
                r.q90,
                err
            )
            .expect("write to memory");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Cross-validate every candidate on `ensemble`; `base` supplies all other
/// pipeline settings. The winner minimizes the q90 score, ties going to
/// the smaller `(K~, n_pc)`. Failing candidates are reported, not fatal.
pub fn kfold_tune(
    ensemble: &Ensemble,
    base: &PipelineConfig,
    candidates: &[TuneCandidate],
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no CV candidates".into()));
    }
    let folds = kfold_partition(ensemble.len(), k, seed)?;
    let mut cands = candidates.to_vec();
    cands.sort();
    cands.dedup();

    let mut results = Vec::new();
    let mut k_values: Vec<usize> = cands.iter().map(|c| c.k_tilde).collect();
    k_values.dedup();
    for kt in k_values {
        let group: Vec<TuneCandidate> = cands.iter().copied().filter(|c| c.k_tilde == kt).collect();
        let n_max = group.iter().map(|c| c.n_pc).max().expect("non-empty group");
        // per fold: sum of squared errors per pixel for each n_pc in the group
        let mut fold_maps: Vec<Vec<SpatialMap>> = vec![Vec::new(); group.len()];
        let mut failure: Option<String> = None;
        for (fi, test) in folds.iter().enumerate() {
            let train_idx: Vec<usize> = (0..ensemble.len()).filter(|i| test.binary_search(i).is_err()).collect();
            let mut cfg = base.with_k_tilde(kt);
            cfg.n_pc = n_max;
            let model = match train(&ensemble.subset(&train_idx), &cfg) {
                Ok(m) => m,
                Err(e) => {
                    failure = Some(format!("fold {}: {e}", fi + 1));
                    break;
                }
            };
            let truth: Vec<SpatialMap> = test.iter().map(|&i| ensemble.outputs()[i].clone()).collect();
            for (gi, c) in group.iter().enumerate() {
                let pred = test
                    .iter()
                    .map(|&i| model.predict_map_truncated(&ensemble.input_row(i), c.n_pc))
                    .collect::<Result<Vec<_>>>();
                match pred.and_then(|p| rmse_map(&truth, &p)) {
                    Ok(m) => fold_maps[gi].push(m),
                    Err(e) => {
                        failure = Some(format!("fold {}: {e}", fi + 1));
                        break;
                    }
                }
            }
            if failure.is_some() {
                break;
            }
        }
        for (gi, c) in group.iter().enumerate() {
            results.push(match &failure {
                Some(msg) => CvConfigResult {
                    candidate: *c,
                    fold_rmse: vec![],
                    mean_rmse: f64::NAN,
                    q90: f64::NAN,
                    error: Some(msg.clone()),
                },
                None => summarize(*c, &fold_maps[gi])?,
            });
        }
    }
    let best = results
        .iter()
        .filter(|r| !r.failed())
        .min_by(|a, b| a.q90.total_cmp(&b.q90).then(a.candidate.cmp(&b.candidate)))
        .map(|r| r.candidate);
    Ok(CvReport { k_folds: k, seed, results, best })
}

fn summarize(candidate: TuneCandidate, maps: &[SpatialMap]) -> Result<CvConfigResult> {
    let grid = *maps[0].grid();
    let n_pix = grid.n_pixels();
    let avg: Vec<f64> = (0..n_pix)
        .map(|p| maps.iter().map(|m| m.values()[p]).sum::<f64>() / maps.len() as f64)
        .collect();
    let avg = SpatialMap::new(grid, avg)?;
    let fold_rmse = maps
        .iter()
        .map(|m| (m.values().iter().map(|v| v * v).sum::<f64>() / n_pix as f64).sqrt())
        .collect();
    Ok(CvConfigResult {
        candidate,
        fold_rmse,
        mean_rmse: avg.values().iter().sum::<f64>() / n_pix as f64,
        q90: map_quantile(&avg, 0.9),
        error: None,
    })
}
