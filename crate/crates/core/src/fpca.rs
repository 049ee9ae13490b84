//! PCA of basis coefficients under a Gram metric.
//!
//! PCA with metric `G = R R^T` on coefficients `alpha` is ordinary PCA on
//! `R^T alpha`. The fit therefore maps the centered coefficients through
//! `R^T`, takes a thin SVD, and maps the principal directions back with
//! `w = R^-T v` so that `w_l^T G w_m = delta_lm`.
//!
//! Eigenvalues use the `1/(n-1)` sample covariance. Every quantity built
//! from them downstream (explained inertia, sensitivity weights) is a ratio
//! and does not depend on that choice.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::bspline::GramMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct FpcaModel {
    mean: Vec<f64>,
    /// Full spectrum, descending (length `min(n, K~)`).
    eigenvalues: Vec<f64>,
    /// Principal directions in orthonormalized coordinates, `K~ x n_pc`.
    directions: DMatrix<f64>,
    /// `G`-orthonormal eigenvectors in the original coordinates, `K~ x n_pc`.
    eigenvectors: DMatrix<f64>,
    /// Training scores, `n x n_pc`.
    scores: DMatrix<f64>,
    gram: GramMatrix,
}

fn center(coeffs: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (n, k) = coeffs.shape();
    let mean: Vec<f64> = (0..k).map(|j| coeffs.column(j).sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, k, |i, j| coeffs[(i, j)] - mean[j]);
    (mean, centered)
}

fn rows_through(gram: &GramMatrix, m: &DMatrix<f64>, f: impl Fn(&GramMatrix, &[f64]) -> Result<Vec<f64>>) -> Result<DMatrix<f64>> {
    let (n, k) = m.shape();
    let mut out = DMatrix::zeros(n, k);
    for i in 0..n {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        let mapped = f(gram, &row)?;
        for (j, v) in mapped.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Fit metric PCA to `n x K~` coefficients and keep `n_pc` components.
pub fn fit_fpca(coeffs: &DMatrix<f64>, gram: GramMatrix, n_pc: usize) -> Result<FpcaModel> {
    let (n, k) = coeffs.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 samples, got {n}")));
    }
    if gram.dim() != k {
        return Err(Error::Shape(format!(
            "metric is {}-dimensional but there are {k} coefficients",
            gram.dim()
        )));
    }
    if n_pc == 0 || n_pc > (n - 1).min(k) {
        return Err(Error::InvalidArgument(format!(
            "n_pc = {n_pc} must lie in 1..={}",
            (n - 1).min(k)
        )));
    }
    let (mean, centered) = center(coeffs);
    let c = rows_through(&gram, &centered, GramMatrix::apply_rt)?;

    let svd = c.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));

    let denom = (n - 1) as f64;
    let eigenvalues: Vec<f64> = order.iter().map(|&i| sv[i] * sv[i] / denom).collect();
    if !(eigenvalues[0] > 0.0) {
        return Err(Error::Degenerate("coefficients have zero variance".into()));
    }

    let mut directions = DMatrix::zeros(k, n_pc);
    let mut eigenvectors = DMatrix::zeros(k, n_pc);
    let mut scores = DMatrix::zeros(n, n_pc);
    for (l, &src) in order.iter().take(n_pc).enumerate() {
        let v: Vec<f64> = vt.row(src).iter().copied().collect();
        let mut w = gram.apply_rt_inv(&v)?;
        // largest-magnitude entry of w positive
        let (_, pivot) = w
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(best, val), (_, &x)| if x.abs() > best { (x.abs(), x) } else { (best, val) });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        w.iter_mut().for_each(|x| *x *= sign);
        for j in 0..k {
            directions[(j, l)] = sign * v[j];
            eigenvectors[(j, l)] = w[j];
        }
        for i in 0..n {
            scores[(i, l)] = sign * u[(i, src)] * sv[src];
        }
    }
    Ok(FpcaModel {
        mean,
        eigenvalues,
        directions,
        eigenvectors,
        scores,
        gram,
    })
}

impl FpcaModel {
    /// Rebuild a model from stored parts.
    pub fn from_parts(
        mean: Vec<f64>,
        eigenvalues: Vec<f64>,
        directions: DMatrix<f64>,
        eigenvectors: DMatrix<f64>,
        scores: DMatrix<f64>,
        gram: GramMatrix,
    ) -> Result<Self> {
        let k = mean.len();
        let n_pc = directions.ncols();
        if directions.nrows() != k
            || eigenvectors.shape() != (k, n_pc)
            || scores.ncols() != n_pc
            || gram.dim() != k
            || eigenvalues.len() < n_pc
        {
            return Err(Error::Shape("inconsistent PCA parts".into()));
        }
        Ok(FpcaModel {
            mean,
            eigenvalues,
            directions,
            eigenvectors,
            scores,
            gram,
        })
    }

    pub fn n_pc(&self) -> usize {
        self.directions.ncols()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn retained_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.n_pc()]
    }

    pub fn total_inertia(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Fraction of the total inertia carried by the retained components.
    pub fn explained_inertia(&self) -> f64 {
        self.retained_eigenvalues().iter().sum::<f64>() / self.total_inertia()
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn directions(&self) -> &DMatrix<f64> {
        &self.directions
    }

    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// `t_l = w_l^T G (alpha - mean)`.
    pub fn transform(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.dim() {
            return Err(Error::Shape(format!(
                "{} coefficients for a {}-dimensional PCA",
                alpha.len(),
                self.dim()
            )));
        }
        let centered: Vec<f64> = alpha.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let c = DVector::from_vec(self.gram.apply_rt(&centered)?);
        Ok((self.directions.transpose() * c).iter().copied().collect())
    }

    /// `mean + sum_l t_l w_l`.
    pub fn reconstruct(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.len() != self.n_pc() {
            return Err(Error::Shape(format!(
                "{} scores for {} components",
                scores.len(),
                self.n_pc()
            )));
        }
        let t = DVector::from_column_slice(scores);
        let delta = &self.eigenvectors * t;
        Ok(self.mean.iter().zip(delta.iter()).map(|(m, d)| m + d).collect())
    }

    /// Eigenvalue weights for aggregating per-component sensitivity
    /// indices. With `include_discarded` the denominator is the full
    /// spectrum, so the weights sum to the explained inertia instead of 1.
    pub fn sensitivity_weights(&self, include_discarded: bool) -> Vec<f64> {
        eigenvalue_weights(self.retained_eigenvalues(), include_discarded.then(|| self.total_inertia()))
    }
}

/// `lambda_l / denom`, with `denom` the sum of `retained` unless given.
pub fn eigenvalue_weights(retained: &[f64], denom: Option<f64>) -> Vec<f64> {
    let total = denom.unwrap_or_else(|| retained.iter().sum());
    retained.iter().map(|l| l / total).collect()
}
