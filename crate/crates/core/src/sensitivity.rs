//! Variance-based sensitivity analysis.
//!
//! Scalar indices come from the two-sample pick-freeze design: base samples
//! `A` and `B` plus the `d` matrices `AB_i` (`A` with column `i` taken from
//! `B`), `n0 (d + 2)` evaluations in total. First-order indices use
//! `mean f(B) (f(AB_i) - f(A)) / V` (outputs centered by their pooled
//! mean, which makes the estimate shift-invariant), total indices the Jansen form
//! `mean (f(A) - f(AB_i))^2 / (2 V)`, with `V` the variance of the pooled
//! `f(A), f(B)` values.
//!
//! Map-valued outputs are aggregated either through PCA eigenvalue weights
//! or through trace ratios with a Gram matrix.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{random_lhs, CellSampling};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SobolSampling {
    /// Random-in-cell Latin hypercubes for `A` and `B`.
    Lhs,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SobolConfig {
    pub n0: usize,
    pub sampling: SobolSampling,
    /// Bootstrap replicates for confidence intervals; 0 disables them.
    pub bootstrap: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for SobolConfig {
    fn default() -> Self {
        SobolConfig {
            n0: 10_000,
            sampling: SobolSampling::Lhs,
            bootstrap: 200,
            confidence: 0.95,
            seed: 0,
        }
    }
}

/// Pairwise (cascade) summation; the fixed reduction tree keeps results
/// identical however the inputs were produced.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

fn mean(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

/// The `A`, `B` base samples in input units.
#[derive(Clone, Debug)]
pub struct SobolSamples {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl SobolSamples {
    pub fn draw(bounds: &[(f64, f64)], n0: usize, sampling: SobolSampling, seed: u64) -> Result<Self> {
        let d = bounds.len();
        if d == 0 {
            return Err(Error::InvalidArgument("no inputs".into()));
        }
        if n0 < 2 {
            return Err(Error::InvalidArgument(format!("n0 = {n0} is too small")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit = || match sampling {
            SobolSampling::Lhs => random_lhs(n0, d, CellSampling::Random, &mut rng),
            SobolSampling::Uniform => DMatrix::from_fn(n0, d, |_, _| rng.random::<f64>()),
        };
        let (ua, ub) = (unit(), unit());
        let a = crate::design::scale_to_bounds(&ua, bounds)?;
        let b = crate::design::scale_to_bounds(&ub, bounds)?;
        Ok(SobolSamples { a, b })
    }

    pub fn n0(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// All evaluation points stacked as `A; B; AB_1; ...; AB_d`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n0, d) = self.a.shape();
        DMatrix::from_fn(n0 * (d + 2), d, |r, j| {
            let (block, i) = (r / n0, r % n0);
            match block {
                0 => self.a[(i, j)],
                1 => self.b[(i, j)],
                k => {
                    if k - 2 == j {
                        self.b[(i, j)]
                    } else {
                        self.a[(i, j)]
                    }
                }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

/// Bootstrap replicates of `(first_order, total)`, each `bootstrap x d`.
pub type Replicates = (Vec<Vec<f64>>, Vec<Vec<f64>>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolEstimate {
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
    pub n0: usize,
    pub evaluations: usize,
    pub variance: f64,
    pub first_order_estimator: String,
    pub total_estimator: String,
    pub first_order_ci: Option<Vec<Interval>>,
    pub total_ci: Option<Vec<Interval>>,
    /// Bootstrap replicates, `bootstrap x d`, kept for aggregation.
    #[serde(skip)]
    pub replicates: Option<Replicates>,
}

impl SobolEstimate {
    pub fn dim(&self) -> usize {
        self.first_order.len()
    }

    /// Indices clamped to `[0, 1]` for display.
    pub fn clamped(&self) -> (Vec<f64>, Vec<f64>) {
        let c = |v: &[f64]| v.iter().map(|x| x.clamp(0.0, 1.0)).collect();
        (c(&self.first_order), c(&self.total))
    }
}

/// Point estimates from outputs laid out as in [`SobolSamples::stacked`].
fn indices_for(y: &[f64], n0: usize, d: usize, rows: Option<&[usize]>) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let pick = |block: usize| -> Vec<f64> {
        match rows {
            None => y[block * n0..(block + 1) * n0].to_vec(),
            Some(r) => r.iter().map(|&i| y[block * n0 + i]).collect(),
        }
    };
    let fa = pick(0);
    let fb = pick(1);
    let m = fa.len();
    let pooled: Vec<f64> = fa.iter().chain(&fb).copied().collect();
    let mu = mean(&pooled);
    let dev: Vec<f64> = pooled.iter().map(|v| (v - mu) * (v - mu)).collect();
    let var = mean(&dev);
    let scale = pooled.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if !(var > 1e-28 * scale * scale) || var == 0.0 {
        return None;
    }
    let mut first = vec![0.0; d];
    let mut total = vec![0.0; d];
    let mut buf = vec![0.0; m];
    for i in 0..d {
        let fab = pick(2 + i);
        for k in 0..m {
            buf[k] = (fb[k] - mu) * (fab[k] - fa[k]);
        }
        first[i] = mean(&buf) / var;
        for k in 0..m {
            buf[k] = (fa[k] - fab[k]).powi(2);
        }
        total[i] = mean(&buf) / (2.0 * var);
    }
    Some((first, total, var))
}

fn percentile_interval(mut v: Vec<f64>, confidence: f64) -> Interval {
    v.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    Interval {
        low: quantile_sorted(&v, alpha),
        high: quantile_sorted(&v, 1.0 - alpha),
    }
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    assert!(!v.is_empty(), "quantile of empty data");
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn bootstrap_rows(n0: usize, reps: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b007);
    (0..reps)
        .map(|_| (0..n0).map(|_| rng.random_range(0..n0)).collect())
        .collect()
}

/// Indices from precomputed outputs (length `n0 (d + 2)`, stacked order).
pub fn sobol_from_outputs(y: &[f64], n0: usize, d: usize, config: &SobolConfig) -> Result<SobolEstimate> {
    if y.len() != n0 * (d + 2) {
        return Err(Error::Shape(format!(
            "{} outputs for n0 = {n0}, d = {d} (expected {})",
            y.len(),
            n0 * (d + 2)
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("model output {i}")));
    }
    let (first, total, var) =
        indices_for(y, n0, d, None).ok_or_else(|| Error::Degenerate("degenerate output: zero variance".into()))?;
    let (mut first_ci, mut total_ci, mut replicates) = (None, None, None);
    if config.bootstrap > 0 {
        let rows = bootstrap_rows(n0, config.bootstrap, config.seed);
        let reps: Vec<(Vec<f64>, Vec<f64>)> = rows
            .par_iter()
            .map(|r| {
                indices_for(y, n0, d, Some(r)).map_or((vec![f64::NAN; d], vec![f64::NAN; d]), |(f, t, _)| (f, t))
            })
            .collect();
        let col = |which: usize, i: usize| -> Vec<f64> {
            reps.iter()
                .map(|r| if which == 0 { r.0[i] } else { r.1[i] })
                .filter(|v| v.is_finite())
                .collect()
        };
        first_ci = Some((0..d).map(|i| percentile_interval(col(0, i), config.confidence)).collect());
        total_ci = Some((0..d).map(|i| percentile_interval(col(1, i), config.confidence)).collect());
        replicates = Some(reps.into_iter().unzip());
    }
    Ok(SobolEstimate {
        first_order: first,
        total,
        n0,
        evaluations: y.len(),
        variance: var,
        first_order_estimator: "saltelli2010".into(),
        total_estimator: "jansen1999".into(),
        first_order_ci: first_ci,
        total_ci,
        replicates,
    })
}

/// First-order and total Sobol indices of a batch-evaluable scalar model.
/// The model receives one `n0 (d + 2) x d` matrix and is called once.
pub fn saltelli_sobol(
    model: impl FnOnce(&DMatrix<f64>) -> Result<Vec<f64>>,
    bounds: &[(f64, f64)],
    config: &SobolConfig,
) -> Result<SobolEstimate> {
    if config.n0 < 100 {
        return Err(Error::InvalidArgument(format!("n0 = {} must be at least 100", config.n0)));
    }
    let samples = SobolSamples::draw(bounds, config.n0, config.sampling, config.seed)?;
    let x = samples.stacked();
    let y = model(&x)?;
    sobol_from_outputs(&y, config.n0, bounds.len(), config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GsiEstimate {
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
    pub weights: Vec<f64>,
    pub components: Vec<SobolEstimate>,
    pub first_order_ci: Option<Vec<Interval>>,
    pub total_ci: Option<Vec<Interval>>,
}

/// Eigenvalue-weighted average of per-component indices. With `denom`
/// set, weights are `lambda_l / denom` instead of normalized to sum 1.
pub fn gsi_from_components(
    components: Vec<SobolEstimate>,
    eigenvalues: &[f64],
    denom: Option<f64>,
    confidence: f64,
) -> Result<GsiEstimate> {
    if components.is_empty() || components.len() != eigenvalues.len() {
        return Err(Error::Shape(format!(
            "{} component estimates for {} eigenvalues",
            components.len(),
            eigenvalues.len()
        )));
    }
    if eigenvalues.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidArgument("eigenvalues must be nonnegative".into()));
    }
    let sum: f64 = eigenvalues.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::Degenerate("all eigenvalues are zero".into()));
    }
    let total_w = denom.unwrap_or(sum);
    if !(total_w > 0.0) {
        return Err(Error::InvalidArgument(format!("weight denominator {total_w}")));
    }
    let weights: Vec<f64> = eigenvalues.iter().map(|l| l / total_w).collect();
    let d = components[0].dim();
    if components.iter().any(|c| c.dim() != d) {
        return Err(Error::Shape("component estimates differ in dimension".into()));
    }
    let combine = |get: &dyn Fn(&SobolEstimate) -> &Vec<f64>| -> Vec<f64> {
        (0..d)
            .map(|i| components.iter().zip(&weights).map(|(c, w)| w * get(c)[i]).sum())
            .collect()
    };
    let first_order = combine(&|c| &c.first_order);
    let total = combine(&|c| &c.total);

    // replicates share resampled rows across components, so they combine
    let reps: Option<Vec<&Replicates>> = components.iter().map(|c| c.replicates.as_ref()).collect();
    let (mut first_ci, mut total_ci) = (None, None);
    if let Some(reps) = reps {
        let b = reps[0].0.len();
        if b > 0 && reps.iter().all(|r| r.0.len() == b) {
            let agg = |which: usize, i: usize| -> Vec<f64> {
                (0..b)
                    .map(|r| {
                        reps.iter()
                            .zip(&weights)
                            .map(|(rep, w)| w * if which == 0 { rep.0[r][i] } else { rep.1[r][i] })
                            .sum::<f64>()
                    })
                    .filter(|v| v.is_finite())
                    .collect()
            };
            first_ci = Some((0..d).map(|i| percentile_interval(agg(0, i), confidence)).collect());
            total_ci = Some((0..d).map(|i| percentile_interval(agg(1, i), confidence)).collect());
        }
    }
    Ok(GsiEstimate {
        first_order,
        total,
        weights,
        components,
        first_order_ci: first_ci,
        total_ci,
    })
}

/// `Tr(A G) / Tr(B G)` for symmetric `A`, `B`, `G`, as elementwise sums.
pub fn gsi_gram(cov_conditional: &DMatrix<f64>, cov_total: &DMatrix<f64>, gram: &DMatrix<f64>) -> Result<f64> {
    let k = gram.nrows();
    for (name, m) in [("conditional covariance", cov_conditional), ("total covariance", cov_total), ("Gram matrix", gram)] {
        if m.shape() != (k, k) {
            return Err(Error::Shape(format!("{name} is {}x{}, expected {k}x{k}", m.nrows(), m.ncols())));
        }
    }
    let num = cov_conditional.component_mul(gram).sum();
    let den = cov_total.component_mul(gram).sum();
    if den == 0.0 {
        return Err(Error::Degenerate("zero total variance in the trace denominator".into()));
    }
    Ok(num / den)
}

/// Per-pixel indices; `None` marks a pixel whose output does not vary.
#[derive(Clone, Debug)]
pub struct PointwiseSobol {
    pub pixels: Vec<usize>,
    pub first_order: Vec<Option<Vec<f64>>>,
    pub total: Vec<Option<Vec<f64>>>,
}

impl PointwiseSobol {
    /// Dense map of input `i`'s index over `n_pixels`, `NaN` where
    /// undefined or not requested.
    pub fn map(&self, n_pixels: usize, input: usize, total: bool) -> Vec<f64> {
        let mut out = vec![f64::NAN; n_pixels];
        let src = if total { &self.total } else { &self.first_order };
        for (&p, v) in self.pixels.iter().zip(src) {
            if let Some(v) = v {
                out[p] = v[input];
            }
        }
        out
    }
}

/// Pixel indices for outputs that are affine in a few latent values:
/// `pixel_p(x) = offset_p + sum_l loadings[p, l] * latent_l(x)`.
/// `latent` holds the latent values at the stacked sample points
/// (`n0 (d + 2) x m`), so the model is evaluated once for all pixels.
pub fn pointwise_sobol(
    latent: &DMatrix<f64>,
    offset: &[f64],
    loadings: &DMatrix<f64>,
    pixels: &[usize],
    n0: usize,
    d: usize,
) -> Result<PointwiseSobol> {
    if latent.nrows() != n0 * (d + 2) {
        return Err(Error::Shape(format!("{} latent rows for n0 = {n0}, d = {d}", latent.nrows())));
    }
    if loadings.ncols() != latent.ncols() || loadings.nrows() != offset.len() {
        return Err(Error::Shape("loadings do not match latent values or offsets".into()));
    }
    if let Some(&p) = pixels.iter().find(|&&p| p >= offset.len()) {
        return Err(Error::InvalidArgument(format!("pixel {p} out of range")));
    }
    let results: Vec<Option<(Vec<f64>, Vec<f64>)>> = pixels
        .par_iter()
        .map(|&p| {
            let row = loadings.row(p);
            let y: Vec<f64> = (0..latent.nrows())
                .map(|r| offset[p] + latent.row(r).iter().zip(row.iter()).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            indices_for(&y, n0, d, None).map(|(f, t, _)| (f, t))
        })
        .collect();
    let (first_order, total) = results
        .into_iter()
        .map(|r| match r {
            Some((f, t)) => (Some(f), Some(t)),
            None => (None, None),
        })
        .unzip();
    Ok(PointwiseSobol {
        pixels: pixels.to_vec(),
        first_order,
        total,
    })
}

/// CSV rows `index,kind,input,estimate,ci_low,ci_high`.
pub fn write_indices_csv(
    path: &Path,
    names: &[String],
    first: &[f64],
    total: &[f64],
    first_ci: Option<&[Interval]>,
    total_ci: Option<&[Interval]>,
) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "index,kind,input,estimate,ci_low,ci_high").expect("write to memory");
    for (kind, vals, ci) in [("first", first, first_ci), ("total", total, total_ci)] {
        for (i, v) in vals.iter().enumerate() {
            let (lo, hi) = ci.map_or((String::new(), String::new()), |c| (c[i].low.to_string(), c[i].high.to_string()));
            let name = names.get(i).cloned().unwrap_or_else(|| format!("x{}", i + 1));
            writeln!(out, "{},{kind},{name},{v},{lo},{hi}", i + 1).expect("write to memory");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n0: usize, seed: u64) -> SobolConfig {
        SobolConfig { n0, seed, bootstrap: 50, ..SobolConfig::default() }
    }

    fn rows(x: &DMatrix<f64>, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..x.nrows()).map(|i| f(&x.row(i).iter().copied().collect::<Vec<_>>())).collect()
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&v), 249_750.0);
    }

    #[test]
    fn stacked_layout() {
        let s = SobolSamples::draw(&[(0.0, 1.0), (0.0, 1.0)], 3, SobolSampling::Uniform, 1).unwrap();
        let x = s.stacked();
        assert_eq!(x.nrows(), 12);
        assert_eq!(x[(6, 0)], s.b[(0, 0)]);
        assert_eq!(x[(6, 1)], s.a[(0, 1)]);
        assert_eq!(x[(9, 0)], s.a[(0, 0)]);
        assert_eq!(x[(9, 1)], s.b[(0, 1)]);
    }

    #[test]
    fn single_variable() {
        let b = [(0.0, 1.0), (0.0, 1.0)];
        let e = saltelli_sobol(|x| Ok(rows(x, |r| r[0])), &b, &cfg(10_000, 1)).unwrap();
        assert_eq!(e.evaluations, 40_000);
        assert!((e.first_order[0] - 1.0).abs() < 0.02 && e.first_order[1].abs() < 0.02);
        assert!((e.total[0] - 1.0).abs() < 0.02 && e.total[1].abs() < 0.02);
    }

    #[test]
    fn additive_pair() {
        let b = [(0.0, 1.0), (0.0, 1.0)];
        let e = saltelli_sobol(|x| Ok(rows(x, |r| r[0] + r[1])), &b, &cfg(10_000, 2)).unwrap();
        for i in 0..2 {
            assert!((e.first_order[i] - 0.5).abs() < 0.03, "{:?}", e.first_order);
        }
    }

    #[test]
    fn pure_interaction() {
        let b = [(-1.0, 1.0), (-1.0, 1.0)];
        let e = saltelli_sobol(|x| Ok(rows(x, |r| r[0] * r[1])), &b, &cfg(10_000, 3)).unwrap();
        for i in 0..2 {
            assert!(e.first_order[i].abs() < 0.05);
            assert!((e.total[i] - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn additive_total_equals_first_within_bootstrap_error() {
        let b = vec![(0.0, 1.0); 3];
        let f = |r: &[f64]| r[0] + 2.0 * r[1] * r[1] + (3.0 * r[2]).sin();
        let e = saltelli_sobol(|x| Ok(rows(x, f)), &b, &SobolConfig { n0: 10_000, seed: 5, ..SobolConfig::default() }).unwrap();
        let (rf, rt) = e.replicates.as_ref().unwrap();
        for i in 0..3 {
            let diffs: Vec<f64> = rf.iter().zip(rt).map(|(a, b)| b[i] - a[i]).collect();
            let m = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let se = (diffs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64).sqrt();
            assert!((e.total[i] - e.first_order[i]).abs() <= 3.0 * se, "input {i}: se {se}");
        }
    }

    #[test]
    fn scale_invariant_and_reproducible() {
        let b = vec![(0.0, 1.0); 3];
        let f = |r: &[f64]| r[0] * r[1] + r[2];
        let a = saltelli_sobol(|x| Ok(rows(x, f)), &b, &cfg(500, 9)).unwrap();
        let s = saltelli_sobol(|x| Ok(rows(x, |r| -3.5 * f(r))), &b, &cfg(500, 9)).unwrap();
        for i in 0..3 {
            assert!((a.first_order[i] - s.first_order[i]).abs() < 1e-12);
            assert!((a.total[i] - s.total[i]).abs() < 1e-12);
        }
        let again = saltelli_sobol(|x| Ok(rows(x, f)), &b, &cfg(500, 9)).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn constant_output_is_degenerate() {
        let b = [(0.0, 1.0)];
        let r = saltelli_sobol(|x| Ok(vec![2.0; x.nrows()]), &b, &cfg(200, 0));
        assert!(matches!(r, Err(Error::Degenerate(_))));
        assert!(saltelli_sobol(|x| Ok(vec![0.0; x.nrows()]), &b, &cfg(50, 0)).is_err());
    }

    fn fake(first: Vec<f64>, total: Vec<f64>) -> SobolEstimate {
        SobolEstimate {
            first_order: first,
            total,
            n0: 1,
            evaluations: 0,
            variance: 1.0,
            first_order_estimator: String::new(),
            total_estimator: String::new(),
            first_order_ci: None,
            total_ci: None,
            replicates: None,
        }
    }

    #[test]
    fn gsi_weighting() {
        let one = gsi_from_components(vec![fake(vec![0.3, 0.6], vec![0.4, 0.7])], &[2.0], None, 0.95).unwrap();
        assert_eq!(one.first_order, vec![0.3, 0.6]);
        let g = gsi_from_components(
            vec![fake(vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]), fake(vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0])],
            &[3.0, 1.0],
            None,
            0.95,
        )
        .unwrap();
        assert_eq!(g.first_order, vec![0.75, 0.25, 0.0]);
        assert!(gsi_from_components(vec![fake(vec![1.0], vec![1.0])], &[0.0], None, 0.95).is_err());
        let partial = gsi_from_components(vec![fake(vec![1.0], vec![1.0])], &[1.0], Some(2.0), 0.95).unwrap();
        assert_eq!(partial.first_order, vec![0.5]);
    }

    #[test]
    fn gram_ratio_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut spd = |k: usize| {
            let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            &m * m.transpose()
        };
        let (a, b, g) = (spd(5), spd(5), spd(5));
        let r = gsi_gram(&a, &b, &g).unwrap();
        let oracle = (&a * &g).trace() / (&b * &g).trace();
        assert!((r - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
        assert_eq!(gsi_gram(&b, &b, &g).unwrap(), 1.0);
        assert!(gsi_gram(&a, &DMatrix::zeros(5, 5), &g).is_err());
        assert!(gsi_gram(&a, &b, &DMatrix::zeros(4, 4)).is_err());
    }

    #[test]
    fn pointwise_separable_and_constant_pixels() {
        let b = vec![(0.0, 1.0); 2];
        let s = SobolSamples::draw(&b, 500, SobolSampling::Lhs, 4).unwrap();
        let x = s.stacked();
        // one latent value x1; pixel 0 constant, pixels 1,2 proportional to x1
        let latent = DMatrix::from_fn(x.nrows(), 1, |r, _| x[(r, 0)]);
        let loadings = DMatrix::from_row_slice(3, 1, &[0.0, 2.0, -1.0]);
        let pw = pointwise_sobol(&latent, &[1.0, 0.0, 3.0], &loadings, &[0, 1, 2], 500, 2).unwrap();
        assert!(pw.first_order[0].is_none());
        for p in 1..3 {
            let f = pw.first_order[p].as_ref().unwrap();
            assert!((f[0] - 1.0).abs() < 0.02, "{f:?}");
            assert_eq!(f[1], 0.0);
        }
        let (a, b) = (pw.first_order[1].as_ref().unwrap(), pw.first_order[2].as_ref().unwrap());
        assert!((a[0] - b[0]).abs() < 1e-12);
        assert!(pw.map(3, 0, false)[0].is_nan());
    }

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.9) - 3.7).abs() < 1e-12);
    }
}
