//! Choosing the `K~` basis coefficients that go into PCA.
//!
//! Two criteria are provided. `energy_select` ranks orthonormal-basis
//! coefficients by their mean share of each map's squared norm.
//! `lasso_select` fits every map with an L1 penalty (any basis, no
//! orthonormality needed) and ranks coefficients by how often they are
//! nonzero.
//!
//! Coefficients that are not kept are frozen at their sample mean when a
//! map is reconstructed.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Energy,
    Lasso,
}

/// How many coefficients to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionTarget {
    /// Largest prefix whose cumulative mean energy stays `<= p`.
    Proportion(f64),
    /// Exactly this many (capped at `K`).
    Count(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub mode: SelectionMode,
    /// Kept original indices, best first.
    pub kept: Vec<usize>,
    /// The remaining indices, in ranking order.
    pub discarded: Vec<usize>,
    /// Per-coefficient score: mean energy share (energy mode) or
    /// selection frequency (lasso mode). Length `K`.
    pub lambda: Vec<f64>,
    /// Sample means of the discarded coefficients, aligned with `discarded`.
    pub fill_means: Vec<f64>,
}

impl SelectionResult {
    pub fn n_total(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_kept(&self) -> usize {
        self.kept.len()
    }

    /// Sum of `lambda` over the kept coefficients.
    pub fn retained_score(&self) -> f64 {
        self.kept.iter().map(|&k| self.lambda[k]).sum()
    }

    /// Gather the kept columns of an `n x K` matrix.
    pub fn kept_columns(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(coeffs.nrows(), self.kept.len(), |i, j| coeffs[(i, self.kept[j])])
    }

    /// Assemble a full `K`-vector from kept values and the fill means.
    pub fn assemble(&self, kept_values: &[f64]) -> Result<Vec<f64>> {
        if kept_values.len() != self.kept.len() {
            return Err(Error::Shape(format!(
                "{} values for {} kept coefficients",
                kept_values.len(),
                self.kept.len()
            )));
        }
        let mut full = vec![0.0; self.n_total()];
        for (&k, &v) in self.kept.iter().zip(kept_values) {
            full[k] = v;
        }
        for (&k, &v) in self.discarded.iter().zip(&self.fill_means) {
            full[k] = v;
        }
        Ok(full)
    }
}

fn column_means(coeffs: &DMatrix<f64>, cols: &[usize]) -> Vec<f64> {
    let n = coeffs.nrows() as f64;
    cols.iter().map(|&k| coeffs.column(k).sum() / n).collect()
}

/// Stable ranking by decreasing score, ties to the lower index.
fn rank_desc(score: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..score.len()).collect();
    order.sort_by(|&a, &b| {
        score[b]
            .partial_cmp(&score[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Mean proportion of energy per coefficient over the rows of an
/// `n x K` matrix of orthonormal-basis coefficients.
pub fn mean_energy_shares(coeffs: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (n, k) = coeffs.shape();
    if n == 0 || k == 0 {
        return Err(Error::Shape("empty coefficient matrix".into()));
    }
    let mut lambda = vec![0.0; k];
    for i in 0..n {
        let row = coeffs.row(i);
        let energy: f64 = row.iter().map(|v| v * v).sum();
        if !(energy > 0.0) {
            return Err(Error::ZeroEnergy { index: i });
        }
        for (l, v) in lambda.iter_mut().zip(row.iter()) {
            *l += v * v / energy;
        }
    }
    lambda.iter_mut().for_each(|l| *l /= n as f64);
    Ok(lambda)
}

pub fn energy_select(coeffs: &DMatrix<f64>, target: SelectionTarget) -> Result<SelectionResult> {
    let lambda = mean_energy_shares(coeffs)?;
    let order = rank_desc(&lambda);
    let k_total = lambda.len();
    let n_keep = match target {
        SelectionTarget::Count(c) => {
            if c == 0 {
                return Err(Error::InvalidArgument("cannot keep zero coefficients".into()));
            }
            c.min(k_total)
        }
        SelectionTarget::Proportion(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidArgument(format!("energy proportion {p} not in (0, 1]")));
            }
            let mut acc = 0.0;
            let mut n = 0;
            for &k in &order {
                if acc + lambda[k] > p + 1e-12 {
                    break;
                }
                acc += lambda[k];
                n += 1;
            }
            // the top coefficient alone may already exceed p
            n.max(1)
        }
    };
    let kept = order[..n_keep].to_vec();
    let discarded = order[n_keep..].to_vec();
    let fill_means = column_means(coeffs, &discarded);
    Ok(SelectionResult {
        mode: SelectionMode::Energy,
        kept,
        discarded,
        lambda,
        fill_means,
    })
}

/// Pixel design stored column by column as sparse `(pixel, weight)` lists.
#[derive(Clone, Debug)]
pub struct SparseDesign {
    n_pixels: usize,
    columns: Vec<Vec<(usize, f64)>>,
    sq_norms: Vec<f64>,
}

impl SparseDesign {
    pub fn new(n_pixels: usize, columns: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if let Some((k, _)) = columns
            .iter()
            .enumerate()
            .find(|(_, c)| c.iter().any(|&(p, _)| p >= n_pixels))
        {
            return Err(Error::Shape(format!("design column {k} references a pixel out of range")));
        }
        let sq_norms = columns
            .iter()
            .map(|c| c.iter().map(|(_, v)| v * v).sum())
            .collect();
        Ok(SparseDesign {
            n_pixels,
            columns,
            sq_norms,
        })
    }

    pub fn from_dense(b: &DMatrix<f64>) -> Result<Self> {
        let columns = (0..b.ncols())
            .map(|k| {
                b.column(k)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(p, v)| (p, *v))
                    .collect()
            })
            .collect();
        SparseDesign::new(b.nrows(), columns)
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn transpose_times(&self, y: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| c.iter().map(|&(p, v)| v * y[p]).sum())
            .collect()
    }

    pub fn times(&self, alpha: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_pixels];
        for (c, &a) in self.columns.iter().zip(alpha) {
            if a != 0.0 {
                for &(p, v) in c {
                    out[p] += v * a;
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Stop when no coefficient moves by more than this in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-6,
            max_sweeps: 10_000,
        }
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `min ||y - B a||^2 + penalty * ||a||_1`.
/// Returns the coefficients and the number of sweeps used.
pub fn lasso_fit(
    design: &SparseDesign,
    y: &[f64],
    penalty: f64,
    opts: &LassoOptions,
) -> Result<(Vec<f64>, usize)> {
    if y.len() != design.n_pixels {
        return Err(Error::Shape(format!(
            "target has {} pixels, design has {}",
            y.len(),
            design.n_pixels
        )));
    }
    if !(penalty >= 0.0) {
        return Err(Error::InvalidArgument(format!("penalty {penalty} must be >= 0")));
    }
    let half = 0.5 * penalty;
    let mut alpha = vec![0.0; design.n_columns()];
    let mut resid = y.to_vec();
    let mut last_change = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let mut max_change: f64 = 0.0;
        for (k, col) in design.columns.iter().enumerate() {
            let nrm = design.sq_norms[k];
            if nrm == 0.0 {
                continue;
            }
            let old = alpha[k];
            let rho: f64 = col.iter().map(|&(p, v)| v * resid[p]).sum::<f64>() + nrm * old;
            let new = soft_threshold(rho, half) / nrm;
            let delta = new - old;
            if delta != 0.0 {
                for &(p, v) in col {
                    resid[p] -= v * delta;
                }
                alpha[k] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        last_change = max_change;
        if max_change < opts.tol {
            return Ok((alpha, sweep));
        }
    }
    Err(Error::NoConvergence {
        sweeps: opts.max_sweeps,
        last_change,
    })
}

/// Lasso-fit every target with a common penalty and keep the `k_target`
/// coefficients most often nonzero (ties: larger mean `|a|`, then lower
/// index). Returns the selection and the `n x K` fitted coefficients.
pub fn lasso_select(
    targets: &[Vec<f64>],
    design: &SparseDesign,
    penalty: f64,
    k_target: usize,
    opts: &LassoOptions,
) -> Result<(SelectionResult, DMatrix<f64>)> {
    if targets.is_empty() {
        return Err(Error::Shape("no targets".into()));
    }
    if k_target == 0 {
        return Err(Error::InvalidArgument("cannot keep zero coefficients".into()));
    }
    let fits = targets
        .par_iter()
        .map(|y| lasso_fit(design, y, penalty, opts).map(|(a, _)| a))
        .collect::<Result<Vec<_>>>()?;
    let n = fits.len();
    let k = design.n_columns();
    let coeffs = DMatrix::from_fn(n, k, |i, j| fits[i][j]);
    let freq: Vec<f64> = (0..k)
        .map(|j| coeffs.column(j).iter().filter(|v| **v != 0.0).count() as f64 / n as f64)
        .collect();
    let mean_abs: Vec<f64> = (0..k)
        .map(|j| coeffs.column(j).iter().map(|v| v.abs()).sum::<f64>() / n as f64)
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        freq[b]
            .partial_cmp(&freq[a])
            .unwrap_or(Ordering::Equal)
            .then(mean_abs[b].partial_cmp(&mean_abs[a]).unwrap_or(Ordering::Equal))
            .then(a.cmp(&b))
    });
    let active = freq.iter().filter(|&&f| f > 0.0).count();
    let n_keep = k_target.min(active);
    if n_keep == 0 {
        return Err(Error::EmptySelection);
    }
    let kept = order[..n_keep].to_vec();
    let discarded = order[n_keep..].to_vec();
    let fill_means = column_means(&coeffs, &discarded);
    Ok((
        SelectionResult {
            mode: SelectionMode::Lasso,
            kept,
            discarded,
            lambda: freq,
            fill_means,
        },
        coeffs,
    ))
}
