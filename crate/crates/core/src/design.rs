//! Latin hypercube and uniform designs on `[0, 1]^d`, with scaling to a box.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::write_design_csv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSampling {
    Midpoint,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaConfig {
    pub cells: CellSampling,
    /// Geometric cooling factor applied every `10 n` proposals.
    pub cooling: f64,
    /// Stop after `n * d * stall_factor` proposals without improving the best.
    pub stall_factor: usize,
    /// Hard cap on proposals.
    pub max_proposals: usize,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            cells: CellSampling::Midpoint,
            cooling: 0.95,
            stall_factor: 100,
            max_proposals: 2_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    /// `n x d` points in the unit cube.
    pub points: DMatrix<f64>,
    /// Minimum pairwise Euclidean distance (LHS designs only).
    pub criterion: Option<f64>,
    /// Criterion of the random starting LHS before annealing.
    pub start_criterion: Option<f64>,
    pub seed: u64,
}

impl Design {
    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Points mapped affinely onto `bounds`.
    pub fn scaled(&self, bounds: &[(f64, f64)]) -> Result<DMatrix<f64>> {
        scale_to_bounds(&self.points, bounds)
    }

    pub fn write_csv(&self, path: &Path, bounds: &[(f64, f64)]) -> Result<()> {
        let header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        write_design_csv(path, &self.scaled(bounds)?, Some(&header))
    }
}

fn check_bounds(bounds: &[(f64, f64)], d: usize) -> Result<()> {
    if bounds.len() != d {
        return Err(Error::Shape(format!("{} bounds for {d} columns", bounds.len())));
    }
    for (j, (lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidArgument(format!("bound {j}: [{lo}, {hi}]")));
        }
    }
    Ok(())
}

pub fn scale_to_bounds(unit: &DMatrix<f64>, bounds: &[(f64, f64)]) -> Result<DMatrix<f64>> {
    check_bounds(bounds, unit.ncols())?;
    Ok(DMatrix::from_fn(unit.nrows(), unit.ncols(), |i, j| {
        let (lo, hi) = bounds[j];
        lo + unit[(i, j)] * (hi - lo)
    }))
}

pub fn unscale_from_bounds(x: &DMatrix<f64>, bounds: &[(f64, f64)]) -> Result<DMatrix<f64>> {
    check_bounds(bounds, x.ncols())?;
    Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let (lo, hi) = bounds[j];
        (x[(i, j)] - lo) / (hi - lo)
    }))
}

/// True when every column, scaled by `n` and floored, is a permutation.
pub fn is_latin(points: &DMatrix<f64>) -> bool {
    let n = points.nrows();
    (0..points.ncols()).all(|j| {
        let mut seen = vec![false; n];
        points.column(j).iter().all(|&u| {
            let c = (u * n as f64).floor();
            if !(c >= 0.0 && c < n as f64) || seen[c as usize] {
                return false;
            }
            seen[c as usize] = true;
            true
        })
    })
}

fn cell_value(cell: usize, n: usize, cells: CellSampling, rng: &mut ChaCha8Rng) -> f64 {
    let off = match cells {
        CellSampling::Midpoint => 0.5,
        CellSampling::Random => rng.random::<f64>(),
    };
    let u = (cell as f64 + off) / n as f64;
    // keep the point inside its cell despite rounding
    u.min(((cell + 1) as f64 / n as f64).next_down())
}

/// Random Latin hypercube: independent permutation per column.
pub fn random_lhs(n: usize, d: usize, cells: CellSampling, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, d);
    for j in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        for (i, &c) in perm.iter().enumerate() {
            m[(i, j)] = cell_value(c, n, cells, rng);
        }
    }
    m
}

/// Squared distances with per-row minima, updated after column swaps.
struct DistanceState {
    d2: Vec<f64>,
    n: usize,
    row_min: Vec<f64>,
}

impl DistanceState {
    fn new(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        let mut d2 = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let s: f64 = (0..x.ncols()).map(|j| (x[(a, j)] - x[(b, j)]).powi(2)).sum();
                d2[a * n + b] = s;
                d2[b * n + a] = s;
            }
        }
        let mut st = DistanceState { d2, n, row_min: vec![0.0; n] };
        for r in 0..n {
            st.row_min[r] = st.scan_row(r);
        }
        st
    }

    fn scan_row(&self, r: usize) -> f64 {
        (0..self.n)
            .filter(|&s| s != r)
            .map(|s| self.d2[r * self.n + s])
            .fold(f64::INFINITY, f64::min)
    }

    fn min_d2(&self) -> f64 {
        self.row_min.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Apply the distance change from swapping `x[a, j]` and `x[b, j]`
    /// (`x` already swapped).
    fn apply_swap(&mut self, x: &DMatrix<f64>, a: usize, b: usize, j: usize) {
        let n = self.n;
        let (xa, xb) = (x[(a, j)], x[(b, j)]);
        for r in 0..n {
            if r == a || r == b {
                continue;
            }
            let xr = x[(r, j)];
            for (row, new_v, old_v) in [(a, xa, xb), (b, xb, xa)] {
                let delta = (new_v - xr).powi(2) - (old_v - xr).powi(2);
                let old = self.d2[row * n + r];
                let new = old + delta;
                self.d2[row * n + r] = new;
                self.d2[r * n + row] = new;
                if new < self.row_min[r] {
                    self.row_min[r] = new;
                } else if old == self.row_min[r] && new > old {
                    self.row_min[r] = self.scan_row(r);
                }
            }
        }
        self.row_min[a] = self.scan_row(a);
        self.row_min[b] = self.scan_row(b);
    }
}

/// Minimum pairwise Euclidean distance between rows.
pub fn maximin_criterion(x: &DMatrix<f64>) -> f64 {
    if x.nrows() < 2 {
        return f64::INFINITY;
    }
    DistanceState::new(x).min_d2().sqrt()
}

/// Maximin Latin hypercube by simulated annealing over within-column swaps.
pub fn lhs_maximin(n: usize, d: usize, seed: u64, config: &SaConfig) -> Result<Design> {
    if n < 2 || d == 0 {
        return Err(Error::InvalidArgument(format!("LHS needs n >= 2 and d >= 1, got n={n}, d={d}")));
    }
    if !(config.cooling > 0.0 && config.cooling < 1.0) {
        return Err(Error::InvalidArgument(format!("cooling factor {}", config.cooling)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_lhs(n, d, config.cells, &mut rng);
    let mut state = DistanceState::new(&x);
    let start = state.min_d2().sqrt();
    let mut current = start;
    let mut best = (start, x.clone());

    let propose = |rng: &mut ChaCha8Rng| {
        let j = rng.random_range(0..d);
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        (a, b, j)
    };

    // initial temperature from the spread of criterion changes over trial swaps
    let mut t = {
        let mut probe_x = x.clone();
        let mut probe = DistanceState::new(&probe_x);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..n.max(20) {
            let (a, b, j) = propose(&mut rng);
            probe_x.swap((a, j), (b, j));
            probe.apply_swap(&probe_x, a, b, j);
            let c = probe.min_d2().sqrt();
            lo = lo.min(c);
            hi = hi.max(c);
        }
        let spread = hi - lo;
        if spread > 0.0 {
            spread
        } else {
            1e-3 * start.max(1e-12)
        }
    };

    let stall_limit = n * d * config.stall_factor;
    let epoch = 10 * n;
    let mut since_best = 0;
    for step in 1..=config.max_proposals {
        let (a, b, j) = propose(&mut rng);
        x.swap((a, j), (b, j));
        state.apply_swap(&x, a, b, j);
        let cand = state.min_d2().sqrt();
        let delta = cand - current;
        let accept = delta >= 0.0 || rng.random::<f64>() < (delta / t).exp();
        if accept {
            current = cand;
        } else {
            x.swap((a, j), (b, j));
            state.apply_swap(&x, a, b, j);
        }
        if current > best.0 {
            best = (current, x.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= stall_limit {
                break;
            }
        }
        if step % epoch == 0 {
            t *= config.cooling;
        }
    }
    Ok(Design {
        points: best.1,
        criterion: Some(best.0),
        start_criterion: Some(start),
        seed,
    })
}

/// I.i.d. uniform sample on the unit cube.
pub fn uniform_sample(n: usize, d: usize, seed: u64) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
    // from_fn fills column-major; that order is part of the seeded output
    Design {
        points,
        criterion: None,
        start_criterion: None,
        seed,
    }
}
