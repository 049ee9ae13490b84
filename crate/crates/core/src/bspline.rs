//! Degree-1 (hat function) tensor-product B-splines on a rectangle.
//!
//! Basis function `(k1, k2)` is `phi_k1(z1) * phi_k2(z2)`, flattened
//! row-major as `k1 * K2 + k2`. Because both the pixel design and the Gram
//! matrix factor as Kronecker products, every operation here works on the
//! two small per-axis factors instead of the `K x K` matrices.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, GridSpec, SpatialMap};

const EDGE_TOL: f64 = 1e-12;

/// Hat functions on one axis, one per knot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HatBasis {
    knots: Vec<f64>,
}

impl HatBasis {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidArgument(
                "a hat basis needs at least two knots".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(
                "knots must be finite and strictly increasing".into(),
            ));
        }
        Ok(HatBasis { knots })
    }

    /// `count` equally spaced knots including both endpoints.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two knots per axis, got {count}"
            )));
        }
        let h = (hi - lo) / (count - 1) as f64;
        let mut knots: Vec<f64> = (0..count).map(|i| lo + i as f64 * h).collect();
        knots[count - 1] = hi;
        HatBasis::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The (at most two) nonzero basis values at `z`, as `(index, value)`.
    pub fn eval(&self, z: f64) -> Result<[(usize, f64); 2]> {
        let t = &self.knots;
        let (lo, hi) = (t[0], t[t.len() - 1]);
        let tol = EDGE_TOL * (hi - lo);
        if !(z >= lo - tol && z <= hi + tol) {
            return Err(Error::InvalidArgument(format!(
                "point {z} outside knot span [{lo}, {hi}]"
            )));
        }
        let z = z.clamp(lo, hi);
        // first interval whose right knot is >= z
        let i = t.partition_point(|&k| k < z).clamp(1, t.len() - 1) - 1;
        let h = t[i + 1] - t[i];
        let right = (z - t[i]) / h;
        Ok([(i, 1.0 - right), (i + 1, right)])
    }

    /// Dense `zs.len() x K` evaluation matrix.
    pub fn design(&self, zs: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(zs.len(), self.len());
        for (p, &z) in zs.iter().enumerate() {
            for (k, v) in self.eval(z)? {
                m[(p, k)] += v;
            }
        }
        Ok(m)
    }

    /// Exact `L2(Lebesgue)` Gram matrix (tridiagonal).
    pub fn gram(&self) -> DMatrix<f64> {
        let t = &self.knots;
        let k = t.len();
        let mut g = DMatrix::zeros(k, k);
        for i in 0..k - 1 {
            let h = t[i + 1] - t[i];
            g[(i, i)] += h / 3.0;
            g[(i + 1, i + 1)] += h / 3.0;
            g[(i, i + 1)] = h / 6.0;
            g[(i + 1, i)] = h / 6.0;
        }
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsplineBasis {
    /// Functions of `z1` (varying along map columns).
    pub axis1: HatBasis,
    /// Functions of `z2` (varying along map rows).
    pub axis2: HatBasis,
}

impl BsplineBasis {
    pub fn new(axis1: HatBasis, axis2: HatBasis) -> Self {
        BsplineBasis { axis1, axis2 }
    }

    /// Equally spaced knots covering `domain`, `k1` along `z1` and `k2` along `z2`.
    pub fn uniform(domain: &Domain, k1: usize, k2: usize) -> Result<Self> {
        Ok(BsplineBasis {
            axis1: HatBasis::uniform(domain.z1.0, domain.z1.1, k1)?,
            axis2: HatBasis::uniform(domain.z2.0, domain.z2.1, k2)?,
        })
    }

    pub fn k1(&self) -> usize {
        self.axis1.len()
    }

    pub fn k2(&self) -> usize {
        self.axis2.len()
    }

    pub fn len(&self) -> usize {
        self.k1() * self.k2()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis designs `(E1: n_cols x K1, E2: n_rows x K2)`.
    pub fn axis_designs(&self, grid: &GridSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((
            self.axis1.design(&grid.z1_coords())?,
            self.axis2.design(&grid.z2_coords())?,
        ))
    }

    /// Full `n_pixels x K` design matrix, pixel and function both row-major.
    pub fn eval_basis(&self, grid: &GridSpec) -> Result<DMatrix<f64>> {
        let (e1, e2) = self.axis_designs(grid)?;
        let (k1n, k2n) = (self.k1(), self.k2());
        let mut b = DMatrix::zeros(grid.n_pixels(), self.len());
        for k in 0..grid.n_rows {
            for l in 0..grid.n_cols {
                let p = k * grid.n_cols + l;
                for a in 0..k1n {
                    let w1 = e1[(l, a)];
                    if w1 == 0.0 {
                        continue;
                    }
                    for c in 0..k2n {
                        b[(p, a * k2n + c)] = w1 * e2[(k, c)];
                    }
                }
            }
        }
        Ok(b)
    }

    pub fn gram(&self) -> Result<GramMatrix> {
        GramMatrix::tensor(self.axis1.gram(), self.axis2.gram())
    }

    pub fn projector(&self, grid: &GridSpec) -> Result<BsplineProjector> {
        BsplineProjector::new(self.clone(), *grid)
    }
}

fn chol(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Row-major `K1 x K2` view of a flat coefficient vector.
fn as_block(v: &[f64], k1: usize, k2: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(k1, k2, v)
}

fn block_to_vec(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter());
    }
    out
}

#[derive(Clone, Debug)]
enum GramRepr {
    Tensor {
        g1: DMatrix<f64>,
        g2: DMatrix<f64>,
        r1: DMatrix<f64>,
        r2: DMatrix<f64>,
    },
    Dense {
        g: DMatrix<f64>,
        r: DMatrix<f64>,
    },
    Identity(usize),
}

/// Symmetric positive definite metric `G` together with its lower Cholesky
/// factor `R` (`R R^T = G`).
#[derive(Clone, Debug)]
pub struct GramMatrix {
    repr: GramRepr,
}

impl GramMatrix {
    pub fn tensor(g1: DMatrix<f64>, g2: DMatrix<f64>) -> Result<Self> {
        let r1 = chol(g1.clone(), "axis-1 Gram matrix")?.l();
        let r2 = chol(g2.clone(), "axis-2 Gram matrix")?.l();
        Ok(GramMatrix {
            repr: GramRepr::Tensor { g1, g2, r1, r2 },
        })
    }

    pub fn dense(g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::Shape("Gram matrix must be square".into()));
        }
        let r = chol(g.clone(), "Gram matrix")?.l();
        Ok(GramMatrix {
            repr: GramRepr::Dense { g, r },
        })
    }

    pub fn identity(k: usize) -> Self {
        GramMatrix {
            repr: GramRepr::Identity(k),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.repr, GramRepr::Identity(_))
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            GramRepr::Tensor { g1, g2, .. } => g1.nrows() * g2.nrows(),
            GramRepr::Dense { g, .. } => g.nrows(),
            GramRepr::Identity(k) => *k,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            GramRepr::Tensor { g1, g2, .. } => {
                let k2 = g2.nrows();
                g1[(i / k2, j / k2)] * g2[(i % k2, j % k2)]
            }
            GramRepr::Dense { g, .. } => g[(i, j)],
            GramRepr::Identity(_) => f64::from(u8::from(i == j)),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.repr {
            GramRepr::Tensor { g1, g2, .. } => g1.kronecker(g2),
            GramRepr::Dense { g, .. } => g.clone(),
            GramRepr::Identity(k) => DMatrix::identity(*k, *k),
        }
    }

    pub fn cholesky_dense(&self) -> DMatrix<f64> {
        match &self.repr {
            GramRepr::Tensor { r1, r2, .. } => r1.kronecker(r2),
            GramRepr::Dense { r, .. } => r.clone(),
            GramRepr::Identity(k) => DMatrix::identity(*k, *k),
        }
    }

    /// `G[idx, idx]`.
    pub fn restricted(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.entry(idx[a], idx[b]))
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::Shape(format!(
                "vector of length {n} for a {}-dimensional metric",
                self.dim()
            )));
        }
        Ok(())
    }

    /// `R^T alpha`: coordinates in the orthonormalized basis.
    pub fn apply_rt(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        self.check_len(alpha.len())?;
        Ok(match &self.repr {
            GramRepr::Tensor { r1, r2, .. } => {
                let a = as_block(alpha, r1.nrows(), r2.nrows());
                block_to_vec(&(r1.transpose() * a * r2))
            }
            GramRepr::Dense { r, .. } => {
                (r.transpose() * nalgebra::DVector::from_column_slice(alpha))
                    .iter()
                    .copied()
                    .collect()
            }
            GramRepr::Identity(_) => alpha.to_vec(),
        })
    }

    /// `R^-T c`: inverse of [`GramMatrix::apply_rt`].
    pub fn apply_rt_inv(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_len(c.len())?;
        let solve_upper = |r: &DMatrix<f64>, m: &DMatrix<f64>| {
            r.transpose()
                .solve_upper_triangular(m)
                .expect("Cholesky factor has a positive diagonal")
        };
        Ok(match &self.repr {
            GramRepr::Tensor { r1, r2, .. } => {
                let cm = as_block(c, r1.nrows(), r2.nrows());
                // A = R1^-T C R2^-1
                let left = solve_upper(r1, &cm);
                let a = solve_upper(r2, &left.transpose()).transpose();
                block_to_vec(&a)
            }
            GramRepr::Dense { r, .. } => {
                let v = DMatrix::from_column_slice(c.len(), 1, c);
                solve_upper(r, &v).iter().copied().collect()
            }
            GramRepr::Identity(_) => c.to_vec(),
        })
    }

    /// `alpha^T G alpha`.
    pub fn quad_form(&self, alpha: &[f64]) -> Result<f64> {
        self.check_len(alpha.len())?;
        Ok(match &self.repr {
            GramRepr::Tensor { g1, g2, .. } => {
                let a = as_block(alpha, g1.nrows(), g2.nrows());
                (g1 * &a * g2).component_mul(&a).sum()
            }
            GramRepr::Dense { g, .. } => {
                let v = nalgebra::DVector::from_column_slice(alpha);
                v.dot(&(g * &v))
            }
            GramRepr::Identity(_) => alpha.iter().map(|a| a * a).sum(),
        })
    }
}

/// `c = R^T alpha`.
pub fn orthonormalize(alpha: &[f64], gram: &GramMatrix) -> Result<Vec<f64>> {
    gram.apply_rt(alpha)
}

/// `alpha = R^-T c`.
pub fn deorthonormalize(c: &[f64], gram: &GramMatrix) -> Result<Vec<f64>> {
    gram.apply_rt_inv(c)
}

/// Discrete least-squares projection of maps onto a [`BsplineBasis`] on a
/// fixed pixel grid.
#[derive(Clone, Debug)]
pub struct BsplineProjector {
    basis: BsplineBasis,
    grid: GridSpec,
    e1: DMatrix<f64>,
    e2: DMatrix<f64>,
    n1: Cholesky<f64, Dyn>,
    n2: Cholesky<f64, Dyn>,
}

impl BsplineProjector {
    pub fn new(basis: BsplineBasis, grid: GridSpec) -> Result<Self> {
        let (e1, e2) = basis.axis_designs(&grid)?;
        let rank_err = |axis: &str| {
            Error::NotPositiveDefinite(format!(
                "normal equations along {axis} are singular: some knot interval has no covering pixels"
            ))
        };
        let n1 = Cholesky::new(e1.transpose() * &e1).ok_or_else(|| rank_err("z1"))?;
        let n2 = Cholesky::new(e2.transpose() * &e2).ok_or_else(|| rank_err("z2"))?;
        Ok(BsplineProjector {
            basis,
            grid,
            e1,
            e2,
            n1,
            n2,
        })
    }

    pub fn basis(&self) -> &BsplineBasis {
        &self.basis
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Least-squares coefficients of a row-major pixel buffer.
    pub fn project_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.grid.n_pixels() {
            return Err(Error::Shape(format!(
                "{} values for a {}-pixel grid",
                values.len(),
                self.grid.n_pixels()
            )));
        }
        let y = DMatrix::from_row_slice(self.grid.n_rows, self.grid.n_cols, values);
        // Y = E2 A^T E1^T  =>  A^T = (E2'E2)^-1 E2' Y E1 (E1'E1)^-1
        let rhs = self.e2.transpose() * y * &self.e1;
        let left = self.n2.solve(&rhs);
        let at = self.n1.solve(&left.transpose()).transpose();
        Ok(block_to_vec(&at.transpose()))
    }

    pub fn project(&self, map: &SpatialMap) -> Result<Vec<f64>> {
        if map.grid() != &self.grid {
            return Err(Error::Shape("map grid differs from projector grid".into()));
        }
        self.project_values(map.values())
    }

    /// `B alpha` as a row-major pixel buffer.
    pub fn reconstruct_values(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.basis.len() {
            return Err(Error::Shape(format!(
                "{} coefficients for a {}-function basis",
                alpha.len(),
                self.basis.len()
            )));
        }
        let a = as_block(alpha, self.basis.k1(), self.basis.k2());
        let y = &self.e2 * a.transpose() * self.e1.transpose();
        Ok(block_to_vec(&y))
    }

    pub fn reconstruct(&self, alpha: &[f64]) -> Result<SpatialMap> {
        SpatialMap::new(self.grid, self.reconstruct_values(alpha)?)
    }

    /// Column `k` of the pixel design as sparse `(pixel, value)` pairs.
    pub fn design_column(&self, k: usize) -> Vec<(usize, f64)> {
        let k2n = self.basis.k2();
        let (a, c) = (k / k2n, k % k2n);
        let mut out = Vec::new();
        for row in 0..self.grid.n_rows {
            let w2 = self.e2[(row, c)];
            if w2 == 0.0 {
                continue;
            }
            for col in 0..self.grid.n_cols {
                let w1 = self.e1[(col, a)];
                if w1 != 0.0 {
                    out.push((row * self.grid.n_cols + col, w1 * w2));
                }
            }
        }
        out
    }
}
