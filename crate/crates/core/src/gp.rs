//! Ordinary kriging with a tensor-product Matérn 5/2 kernel.
//!
//! Inputs are mapped to `[0, 1]^d` with the design bounds and targets are
//! standardized; both transforms live in the model. The covariance is
//! `sigma2 * (R(theta) + eta * I)`, with `R` the product correlation and
//! `eta` a small relative nugget. For fixed lengthscales the constant trend
//! `beta` and the variance `sigma2` have closed forms, so only `log theta`
//! is optimized (box-constrained BFGS with analytic gradient, several
//! starts).

use std::cmp::Ordering;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

/// One-dimensional Matérn 5/2 correlation at scaled distance `r >= 0`.
pub fn matern52(r: f64) -> f64 {
    (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * (-SQRT5 * r).exp()
}

/// `sigma2 * prod_j m(|x_j - y_j| / theta_j)`.
pub fn kernel_matern52(x: &[f64], y: &[f64], theta: &[f64], sigma2: f64) -> Result<f64> {
    if x.len() != y.len() || x.len() != theta.len() {
        return Err(Error::Shape("kernel arguments differ in dimension".into()));
    }
    if let Some(t) = theta.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::InvalidArgument(format!("lengthscale {t} must be positive")));
    }
    Ok(sigma2 * correlation(x, y, theta))
}

#[inline]
fn correlation(x: &[f64], y: &[f64], theta: &[f64]) -> f64 {
    let mut poly = 1.0;
    let mut dist = 0.0;
    for ((a, b), t) in x.iter().zip(y).zip(theta) {
        let r = (a - b).abs() / t;
        poly *= 1.0 + SQRT5 * r + 5.0 / 3.0 * r * r;
        dist += r;
    }
    poly * (-SQRT5 * dist).exp()
}

/// `theta * d m / d theta / m` for one axis, i.e. the log-lengthscale
/// derivative factor of the correlation.
#[inline]
fn dlog_factor(r: f64) -> f64 {
    let p = 1.0 + SQRT5 * r + 5.0 / 3.0 * r * r;
    5.0 / 3.0 * r * r * (1.0 + SQRT5 * r) / p
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub multistarts: usize,
    /// Lengthscale box in normalized input units.
    pub lengthscale_bounds: (f64, f64),
    /// Range the multistart seeds are drawn from (inside the box).
    pub start_range: (f64, f64),
    /// Relative nugget; escalated x10 on Cholesky failure up to `max_nugget`.
    pub nugget: f64,
    pub max_nugget: f64,
    pub max_iter: usize,
    /// Projected-gradient tolerance on the negative log-likelihood in
    /// log-lengthscale coordinates, relative to `1 + |log-likelihood|`.
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            multistarts: 5,
            lengthscale_bounds: (1e-2, 1e2),
            start_range: (0.05, 2.0),
            nugget: 1e-8,
            max_nugget: 1e-4,
            max_iter: 150,
            grad_tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimStatus {
    /// Projected gradient below tolerance with every lengthscale interior.
    Converged,
    /// Projected gradient below tolerance with some lengthscale on the box.
    AtBound,
    /// Objective stopped decreasing before the gradient test was met.
    Stalled,
    MaxIterations,
    /// Constant target: nothing to optimize.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub status: OptimStatus,
    /// `None` for a constant target, whose likelihood is unbounded.
    pub log_likelihood: Option<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Log-likelihood at each multistart seed before optimization
    /// (`None` where the correlation matrix was not factorizable).
    pub start_log_likelihoods: Vec<Option<f64>>,
    /// Log-likelihood reached from each seed.
    pub final_log_likelihoods: Vec<Option<f64>>,
    pub nugget: f64,
}

/// Profiled likelihood pieces for one `theta`.
struct Profile {
    neg_loglik: f64,
    grad: Vec<f64>,
}

fn scaled_deltas(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    // |x_p - x_q| per dimension for p < q, row-major over pairs
    let (n, d) = x.shape();
    let mut out = vec![Vec::with_capacity(n * (n - 1) / 2); d];
    for p in 0..n {
        for q in p + 1..n {
            for (j, o) in out.iter_mut().enumerate() {
                o.push((x[(p, j)] - x[(q, j)]).abs());
            }
        }
    }
    out
}

fn corr_matrix(x: &DMatrix<f64>, theta: &[f64], eta: f64) -> DMatrix<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut r = DMatrix::zeros(n, n);
    for p in 0..n {
        r[(p, p)] = 1.0 + eta;
        for q in p + 1..n {
            let v = correlation(&rows[p], &rows[q], theta);
            r[(p, q)] = v;
            r[(q, p)] = v;
        }
    }
    r
}

struct Gls {
    chol: Cholesky<f64, Dyn>,
    beta: f64,
    sigma2: f64,
    resid_weights: DVector<f64>,
    log_det: f64,
}

fn gls(r: DMatrix<f64>, y: &DVector<f64>) -> Option<Gls> {
    let n = y.len();
    let chol = Cholesky::new(r)?;
    let ones = DVector::from_element(n, 1.0);
    let ri_one = chol.solve(&ones);
    let ri_y = chol.solve(y);
    let beta = ri_y.sum() / ri_one.sum();
    let resid = y - DVector::from_element(n, beta);
    let a = chol.solve(&resid);
    let sigma2 = resid.dot(&a) / n as f64;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return None;
    }
    Some(Gls {
        chol,
        beta,
        sigma2,
        resid_weights: a,
        log_det,
    })
}

/// Negative concentrated log-likelihood (up to the `n/2 (1 + ln 2 pi)`
/// constant) and its gradient with respect to `log theta`.
fn profile(x: &DMatrix<f64>, deltas: &[Vec<f64>], y: &DVector<f64>, log_theta: &[f64], eta: f64) -> Option<Profile> {
    let n = x.nrows();
    let theta: Vec<f64> = log_theta.iter().map(|u| u.exp()).collect();
    let r = corr_matrix(x, &theta, eta);
    let fit = gls(r.clone(), y)?;
    let sigma2 = fit.sigma2.max(f64::MIN_POSITIVE);
    let neg_loglik = 0.5 * (n as f64 * sigma2.ln() + fit.log_det);
    let rinv = fit.chol.inverse();
    let a = &fit.resid_weights;
    let mut grad = vec![0.0; theta.len()];
    for (j, g) in grad.iter_mut().enumerate() {
        let (mut tr, mut quad) = (0.0, 0.0);
        let mut idx = 0;
        for p in 0..n {
            for q in p + 1..n {
                let s = deltas[j][idx] / theta[j];
                idx += 1;
                let dr = r[(p, q)] * dlog_factor(s);
                // symmetric off-diagonal pair counted twice
                tr += 2.0 * rinv[(p, q)] * dr;
                quad += 2.0 * a[p] * a[q] * dr;
            }
        }
        *g = 0.5 * (tr - quad / sigma2);
    }
    Some(Profile { neg_loglik, grad })
}

struct BoxResult {
    x: Vec<f64>,
    f: f64,
    grad: Vec<f64>,
    status: OptimStatus,
    iterations: usize,
}

fn projected_grad_norm(x: &[f64], g: &[f64], lo: f64, hi: f64) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| ((xi - gi).clamp(lo, hi) - xi).abs())
        .fold(0.0, f64::max)
}

/// Projected BFGS with backtracking on a box `[lo, hi]^d`.
fn minimize_box(
    mut f: impl FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    x0: Vec<f64>,
    lo: f64,
    hi: f64,
    max_iter: usize,
    tol: f64,
) -> Option<BoxResult> {
    let d = x0.len();
    let mut x: Vec<f64> = x0.iter().map(|v| v.clamp(lo, hi)).collect();
    let (mut fx, mut g) = f(&x)?;
    let mut h = DMatrix::<f64>::identity(d, d);
    let mut stall = 0;
    let on_bound = |x: &[f64], g: &[f64]| -> Vec<bool> {
        x.iter()
            .zip(g)
            .map(|(&xi, &gi)| (xi <= lo + 1e-12 && gi > 0.0) || (xi >= hi - 1e-12 && gi < 0.0))
            .collect()
    };
    for it in 0..max_iter {
        let pg = projected_grad_norm(&x, &g, lo, hi);
        let active = on_bound(&x, &g);
        if pg < tol * (1.0 + fx.abs()) {
            let status = if active.iter().any(|&a| a) {
                OptimStatus::AtBound
            } else {
                OptimStatus::Converged
            };
            return Some(BoxResult { x, f: fx, grad: g, status, iterations: it });
        }
        let gf = DVector::from_fn(d, |i, _| if active[i] { 0.0 } else { g[i] });
        let mut hf = h.clone();
        for i in 0..d {
            if active[i] {
                for k in 0..d {
                    hf[(i, k)] = 0.0;
                    hf[(k, i)] = 0.0;
                }
            }
        }
        let mut p = -(&hf * &gf);
        if p.dot(&gf) >= 0.0 {
            h = DMatrix::identity(d, d);
            p = -gf.clone();
        }
        // limit the step to a unit move in log-lengthscale
        let pmax = p.amax();
        if pmax > 2.0 {
            p *= 2.0 / pmax;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = (0..d).map(|i| (x[i] + t * p[i]).clamp(lo, hi)).collect();
            let step: f64 = (0..d).map(|i| g[i] * (xn[i] - x[i])).sum();
            if let Some((fnew, gnew)) = f(&xn) {
                if fnew <= fx + 1e-4 * step {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            return Some(BoxResult { x, f: fx, grad: g, status: OptimStatus::Stalled, iterations: it });
        };
        let s = DVector::from_fn(d, |i, _| xn[i] - x[i]);
        let yv = DVector::from_fn(d, |i, _| gnew[i] - g[i]);
        let sy = s.dot(&yv);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let id = DMatrix::<f64>::identity(d, d);
            let left = &id - rho * &s * yv.transpose();
            let right = &id - rho * &yv * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
        }
        if (fx - fnew).abs() <= 1e-12 * (1.0 + fx.abs()) {
            stall += 1;
        } else {
            stall = 0;
        }
        x = xn;
        fx = fnew;
        g = gnew;
        if stall >= 5 {
            return Some(BoxResult { x, f: fx, grad: g, status: OptimStatus::Stalled, iterations: it + 1 });
        }
    }
    Some(BoxResult { x, f: fx, grad: g, status: OptimStatus::MaxIterations, iterations: max_iter })
}

/// Newton refinement of a BFGS result on the coordinates off the box,
/// with a finite-difference Hessian of the analytic gradient. Steps are
/// kept only while they shrink the projected gradient, so the result lands
/// on the stationary point rather than anywhere inside the tolerance ball.
fn newton_polish(
    mut f: impl FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    start: BoxResult,
    lo: f64,
    hi: f64,
) -> BoxResult {
    const STEPS: usize = 8;
    const H: f64 = 1e-5;
    let mut r = start;
    for _ in 0..STEPS {
        let pg = projected_grad_norm(&r.x, &r.grad, lo, hi);
        if pg <= 1e-13 * (1.0 + r.f.abs()) {
            break;
        }
        let free: Vec<usize> = (0..r.x.len())
            .filter(|&i| {
                let (xi, gi) = (r.x[i], r.grad[i]);
                !((xi <= lo + 1e-12 && gi > 0.0) || (xi >= hi - 1e-12 && gi < 0.0))
            })
            .collect();
        if free.is_empty() {
            break;
        }
        let m = free.len();
        let mut hess = DMatrix::zeros(m, m);
        for (a, &i) in free.iter().enumerate() {
            let (mut xp, mut xm) = (r.x.clone(), r.x.clone());
            xp[i] += H;
            xm[i] -= H;
            let (Some((_, gp)), Some((_, gm))) = (f(&xp), f(&xm)) else {
                return r;
            };
            for (b, &k) in free.iter().enumerate() {
                hess[(b, a)] = (gp[k] - gm[k]) / (2.0 * H);
            }
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let Some(chol) = Cholesky::new(hess) else {
            break;
        };
        let step = chol.solve(&DVector::from_fn(m, |a, _| -r.grad[free[a]]));
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..6 {
            let mut xn = r.x.clone();
            for (a, &i) in free.iter().enumerate() {
                xn[i] = (xn[i] + t * step[a]).clamp(lo, hi);
            }
            if let Some((fnew, gnew)) = f(&xn) {
                let pgn = projected_grad_norm(&xn, &gnew, lo, hi);
                if pgn < pg && fnew <= r.f + 1e-10 * (1.0 + r.f.abs()) {
                    next = Some(BoxResult { x: xn, f: fnew, grad: gnew, status: r.status, iterations: r.iterations + 1 });
                    break;
                }
            }
            t *= 0.5;
        }
        match next {
            Some(n) => r = n,
            None => break,
        }
    }
    r
}

/// Space-filling seeds: one Latin-hypercube midpoint per start and axis,
/// log-uniform over `range`.
fn seed_points(d: usize, starts: usize, range: (f64, f64), seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (range.0.ln(), range.1.ln());
    let cols: Vec<Vec<usize>> = (0..d)
        .map(|_| {
            let mut p: Vec<usize> = (0..starts).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    (0..starts)
        .map(|s| {
            (0..d)
                .map(|j| a + (b - a) * (cols[j][s] as f64 + 0.5) / starts as f64)
                .collect()
        })
        .collect()
}

/// The optimizer works with a jitter `eta` relative to the signal
/// variance. The final model uses an absolute jitter of `eta` times the
/// target variance (1 after standardization), i.e. `eta / sigma2` in
/// correlation units, escalated x10 while the factorization fails.
fn final_nugget(xn: &DMatrix<f64>, ys: &DVector<f64>, theta: &[f64], eta: f64) -> Option<f64> {
    let sigma2 = gls(corr_matrix(xn, theta, eta), ys)?.sigma2;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return None;
    }
    let mut e = eta / sigma2;
    loop {
        if gls(corr_matrix(xn, theta, e), ys).is_some() {
            return Some(e);
        }
        if e >= eta {
            return None;
        }
        e = (e * 10.0).min(eta);
    }
}

#[derive(Clone, Debug)]
pub struct GpModel {
    bounds: Vec<(f64, f64)>,
    raw_inputs: DMatrix<f64>,
    x: DMatrix<f64>,
    y: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    theta: Vec<f64>,
    eta: f64,
    beta: f64,
    sigma2: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    weights: DVector<f64>,
    report: FitReport,
}

fn normalize(bounds: &[(f64, f64)], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != bounds.len() {
        return Err(Error::Shape(format!(
            "inputs have {} columns, bounds describe {}",
            x.ncols(),
            bounds.len()
        )));
    }
    Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let (lo, hi) = bounds[j];
        (x[(i, j)] - lo) / (hi - lo)
    }))
}

fn standardize(y: &[f64]) -> (f64, f64, DVector<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let scale = var.sqrt();
    let scale = if scale > 0.0 && scale.is_finite() { scale } else { 0.0 };
    let ys = if scale > 0.0 {
        DVector::from_iterator(y.len(), y.iter().map(|v| (v - mean) / scale))
    } else {
        DVector::zeros(y.len())
    };
    (mean, scale, ys)
}

impl GpModel {
    /// Fit by concentrated maximum likelihood.
    pub fn fit(x: &DMatrix<f64>, y: &[f64], bounds: &[(f64, f64)], config: &GpConfig) -> Result<GpModel> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("GP needs at least 2 points, got {n}")));
        }
        if y.len() != n {
            return Err(Error::Shape(format!("{n} inputs but {} targets", y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GP target".into()));
        }
        let (lo, hi) = config.lengthscale_bounds;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidArgument(format!("lengthscale bounds ({lo}, {hi})")));
        }
        let xn = normalize(bounds, x)?;
        let d = xn.ncols();
        let (_, scale, ys) = standardize(y);
        if scale == 0.0 {
            let theta = vec![1.0; d];
            let report = FitReport {
                status: OptimStatus::Degenerate,
                log_likelihood: None,
                gradient_norm: 0.0,
                iterations: 0,
                start_log_likelihoods: vec![],
                final_log_likelihoods: vec![],
                nugget: config.nugget,
            };
            return GpModel::assemble(bounds, x, y, theta, config.nugget, report);
        }
        let deltas = scaled_deltas(&xn);
        let const_term = 0.5 * n as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        let (llo, lhi) = (lo.ln(), hi.ln());
        let range = (
            config.start_range.0.clamp(lo, hi),
            config.start_range.1.clamp(lo, hi),
        );
        let starts = seed_points(d, config.multistarts.max(1), range, config.seed);

        let mut eta = config.nugget;
        loop {
            let obj = |u: &[f64]| profile(&xn, &deltas, &ys, u, eta).map(|p| (p.neg_loglik, p.grad));
            let start_vals: Vec<Option<f64>> = starts.iter().map(|s| obj(s).map(|(f, _)| -f - const_term)).collect();
            if start_vals.iter().any(Option::is_some) {
                let mut runs: Vec<Option<BoxResult>> = starts
                    .iter()
                    .zip(&start_vals)
                    .map(|(s, v)| v.and_then(|_| minimize_box(obj, s.clone(), llo, lhi, config.max_iter, config.grad_tol)))
                    .collect();
                let best = runs
                    .iter()
                    .enumerate()
                    .filter_map(|(i, r)| r.as_ref().map(|r| (i, r.f)))
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
                if let Some((bi, _)) = best {
                    let mut r = newton_polish(obj, runs[bi].take().unwrap(), llo, lhi);
                    let pg = projected_grad_norm(&r.x, &r.grad, llo, lhi);
                    if pg < config.grad_tol * (1.0 + r.f.abs()) {
                        let at_bound = r.x.iter().zip(&r.grad).any(|(&xi, &gi)| (xi <= llo + 1e-12 && gi > 0.0) || (xi >= lhi - 1e-12 && gi < 0.0));
                        r.status = if at_bound { OptimStatus::AtBound } else { OptimStatus::Converged };
                    }
                    let final_lls = runs
                        .iter()
                        .enumerate()
                        .map(|(i, o)| if i == bi { Some(-r.f - const_term) } else { o.as_ref().map(|o| -o.f - const_term) })
                        .collect();
                    let report = FitReport {
                        status: r.status,
                        log_likelihood: Some(-r.f - const_term),
                        gradient_norm: pg,
                        iterations: r.iterations,
                        start_log_likelihoods: start_vals.clone(),
                        final_log_likelihoods: final_lls,
                        nugget: eta,
                    };
                    let theta: Vec<f64> = r.x.iter().map(|u| u.exp()).collect();
                    if let Some(m) = final_nugget(&xn, &ys, &theta, eta)
                        .and_then(|e| GpModel::assemble(bounds, x, y, theta.clone(), e, FitReport { nugget: e, ..report.clone() }).ok())
                        .or_else(|| GpModel::assemble(bounds, x, y, theta, eta, report).ok())
                    {
                        return Ok(m);
                    }
                }
            }
            if eta * 10.0 > config.max_nugget * (1.0 + 1e-9) {
                let r = corr_matrix(&xn, &starts[0].iter().map(|u| u.exp()).collect::<Vec<_>>(), 0.0);
                let eig = r.symmetric_eigenvalues();
                let (mn, mx) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v.abs())));
                return Err(Error::NotPositiveDefinite(format!(
                    "GP correlation matrix stays singular up to nugget {eta:e} (condition estimate {:e})",
                    if mn > 0.0 { mx / mn } else { f64::INFINITY }
                )));
            }
            eta *= 10.0;
        }
    }

    /// Build a model from fixed hyperparameters; `beta` and `sigma2` are
    /// re-profiled from the data.
    pub fn assemble(
        bounds: &[(f64, f64)],
        x: &DMatrix<f64>,
        y: &[f64],
        theta: Vec<f64>,
        eta: f64,
        report: FitReport,
    ) -> Result<GpModel> {
        let xn = normalize(bounds, x)?;
        if theta.len() != xn.ncols() || theta.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidArgument("bad lengthscales".into()));
        }
        let (y_mean, y_scale, ys) = standardize(y);
        let n = xn.nrows();
        let (chol, beta, sigma2, weights) = if y_scale == 0.0 {
            (None, 0.0, 0.0, DVector::zeros(n))
        } else {
            let fit = gls(corr_matrix(&xn, &theta, eta), &ys).ok_or_else(|| {
                Error::NotPositiveDefinite(format!("GP correlation matrix with nugget {eta:e}"))
            })?;
            (Some(fit.chol), fit.beta, fit.sigma2, fit.resid_weights)
        };
        Ok(GpModel {
            bounds: bounds.to_vec(),
            raw_inputs: x.clone(),
            x: xn,
            y: y.to_vec(),
            y_mean,
            y_scale,
            theta,
            eta,
            beta,
            sigma2,
            chol,
            weights,
            report,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Lengthscales in normalized input units.
    pub fn lengthscales(&self) -> &[f64] {
        &self.theta
    }

    pub fn nugget(&self) -> f64 {
        self.eta
    }

    /// Training targets in original units.
    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    /// Training inputs in original units.
    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.raw_inputs
    }

    /// Signal variance in target units.
    pub fn signal_variance(&self) -> f64 {
        self.sigma2 * self.y_scale * self.y_scale
    }

    /// Shift of the fitted mean away from each training target caused by
    /// the nugget: `mean(x_i) = y_i - shift_i` exactly.
    pub fn nugget_shifts(&self) -> Vec<f64> {
        self.weights.iter().map(|a| self.y_scale * self.eta * a).collect()
    }

    /// Constant trend in target units.
    pub fn trend(&self) -> f64 {
        self.y_mean + self.y_scale * self.beta
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    fn cross_corr(&self, q: &[f64]) -> DVector<f64> {
        let mut row = vec![0.0; q.len()];
        DVector::from_fn(self.x.nrows(), |i, _| {
            for (j, r) in row.iter_mut().enumerate() {
                *r = self.x[(i, j)];
            }
            correlation(&row, q, &self.theta)
        })
    }

    fn normalize_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    /// Predictive mean at each row of `xq` (original units).
    pub fn predict_mean(&self, xq: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_query(xq)?;
        Ok((0..xq.nrows())
            .map(|i| {
                let q: Vec<f64> = xq.row(i).iter().copied().collect();
                self.mean_at(&q)
            })
            .collect())
    }

    pub fn mean_at(&self, x: &[f64]) -> f64 {
        if self.chol.is_none() {
            return self.y_mean;
        }
        let q = self.normalize_point(x);
        let c = self.cross_corr(&q);
        self.y_mean + self.y_scale * (self.beta + c.dot(&self.weights))
    }

    /// Predictive mean and variance (clamped at 0), original units.
    pub fn predict(&self, xq: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_query(xq)?;
        let mut mean = Vec::with_capacity(xq.nrows());
        let mut var = Vec::with_capacity(xq.nrows());
        for i in 0..xq.nrows() {
            let x: Vec<f64> = xq.row(i).iter().copied().collect();
            match &self.chol {
                None => {
                    mean.push(self.y_mean);
                    var.push(0.0);
                }
                Some(chol) => {
                    let q = self.normalize_point(&x);
                    let c = self.cross_corr(&q);
                    mean.push(self.y_mean + self.y_scale * (self.beta + c.dot(&self.weights)));
                    let v = chol.l_dirty().solve_lower_triangular(&c).expect("positive diagonal");
                    let s = (1.0 + self.eta - v.norm_squared()).max(0.0);
                    var.push(self.sigma2 * s * self.y_scale * self.y_scale);
                }
            }
        }
        Ok((mean, var))
    }

    fn check_query(&self, xq: &DMatrix<f64>) -> Result<()> {
        if xq.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "query has {} columns, model has {} inputs",
                xq.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Concentrated log-likelihood and its `log theta` gradient at the
    /// model's own data and nugget, for arbitrary lengthscales.
    pub fn log_likelihood_at(&self, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (_, _, ys) = standardize(&self.y);
        let n = self.x.nrows();
        let deltas = scaled_deltas(&self.x);
        let u: Vec<f64> = theta.iter().map(|t| t.ln()).collect();
        let p = profile(&self.x, &deltas, &ys, &u, self.eta)?;
        let c = 0.5 * n as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln());
        Some((-p.neg_loglik - c, p.grad.iter().map(|g| -g).collect()))
    }
}
