//! Orthonormal separable 2-D discrete wavelet transform (Haar and
//! Daubechies D4) with periodic boundaries.
//!
//! One level filters every row, then every column, of the current
//! approximation block and keeps the even-indexed outputs. The next level
//! recurses on the low/low block. With periodic extension the transform is
//! an orthogonal matrix, so energy is preserved and the inverse is the
//! transpose.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WaveletFamily {
    Haar,
    D4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub levels: usize,
}

impl WaveletSpec {
    pub fn new(family: WaveletFamily, levels: usize) -> Self {
        WaveletSpec { family, levels }
    }

    /// Deepest level usable on an `n_rows x n_cols` grid.
    pub fn max_levels(n_rows: usize, n_cols: usize) -> usize {
        let mut j = 0;
        while n_rows % (1 << (j + 1)) == 0 && n_cols % (1 << (j + 1)) == 0 {
            j += 1;
        }
        j
    }

    pub fn check_shape(&self, n_rows: usize, n_cols: usize) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidArgument("wavelet levels must be >= 1".into()));
        }
        let block = 1usize
            .checked_shl(self.levels as u32)
            .ok_or_else(|| Error::InvalidArgument(format!("{} levels", self.levels)))?;
        if n_rows % block != 0 || n_cols % block != 0 {
            return Err(Error::Shape(format!(
                "{n_rows}x{n_cols} is not divisible by 2^{} = {block}",
                self.levels
            )));
        }
        Ok(())
    }
}

/// Quadrature-mirror filter pair.
#[derive(Clone, Debug)]
pub struct FilterBank {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl FilterBank {
    fn from_low(low: Vec<f64>) -> Self {
        let n = low.len();
        let high = (0..n)
            .map(|k| if k % 2 == 0 { low[n - 1 - k] } else { -low[n - 1 - k] })
            .collect();
        FilterBank { low, high }
    }

    /// Largest violation of the orthonormality and vanishing-moment
    /// constraints a valid filter pair must satisfy.
    pub fn constraint_residual(&self) -> f64 {
        let h = &self.low;
        let g = &self.high;
        let n = h.len();
        let mut worst: f64 = 0.0;
        let mut check = |v: f64| worst = worst.max(v.abs());
        check(h.iter().sum::<f64>() - std::f64::consts::SQRT_2);
        for shift in (0..n).step_by(2) {
            let ip: f64 = (0..n - shift).map(|k| h[k] * h[k + shift]).sum();
            check(if shift == 0 { ip - 1.0 } else { ip });
        }
        check(g.iter().sum::<f64>());
        if n >= 4 {
            check(g.iter().enumerate().map(|(k, v)| k as f64 * v).sum::<f64>());
        }
        check((0..n).map(|k| h[k] * g[k]).sum::<f64>());
        worst
    }
}

fn d4_lowpass() -> Vec<f64> {
    let s3 = 3f64.sqrt();
    let denom = 4.0 * std::f64::consts::SQRT_2;
    vec![
        (1.0 + s3) / denom,
        (3.0 + s3) / denom,
        (3.0 - s3) / denom,
        (1.0 - s3) / denom,
    ]
}

/// Filters for `family`. The constraints are checked once per process.
pub fn filter_bank(family: WaveletFamily) -> &'static FilterBank {
    static HAAR: OnceLock<FilterBank> = OnceLock::new();
    static D4: OnceLock<FilterBank> = OnceLock::new();
    let (cell, make): (_, fn() -> Vec<f64>) = match family {
        WaveletFamily::Haar => (&HAAR, || vec![std::f64::consts::FRAC_1_SQRT_2; 2]),
        WaveletFamily::D4 => (&D4, d4_lowpass),
    };
    cell.get_or_init(|| {
        let bank = FilterBank::from_low(make());
        let r = bank.constraint_residual();
        assert!(r < 1e-12, "{family:?} filter violates its constraints by {r:e}");
        bank
    })
}

fn analyze(x: &[f64], lo: &mut [f64], hi: &mut [f64], f: &FilterBank) {
    let n = x.len();
    for i in 0..n / 2 {
        let (mut a, mut d) = (0.0, 0.0);
        for (k, (&h, &g)) in f.low.iter().zip(&f.high).enumerate() {
            let v = x[(2 * i + k) % n];
            a += h * v;
            d += g * v;
        }
        lo[i] = a;
        hi[i] = d;
    }
}

fn synthesize(lo: &[f64], hi: &[f64], x: &mut [f64], f: &FilterBank) {
    let n = x.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n / 2 {
        for (k, (&h, &g)) in f.low.iter().zip(&f.high).enumerate() {
            x[(2 * i + k) % n] += h * lo[i] + g * hi[i];
        }
    }
}

/// One level of detail sub-bands, each `rows x cols`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DetailBands {
    pub rows: usize,
    pub cols: usize,
    /// Low-pass along rows, high-pass along columns.
    pub horizontal: Vec<f64>,
    /// High-pass along rows, low-pass along columns.
    pub vertical: Vec<f64>,
    pub diagonal: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoeffs {
    pub n_rows: usize,
    pub n_cols: usize,
    /// `details[0]` is level 1 (finest).
    pub details: Vec<DetailBands>,
    pub approx: Vec<f64>,
}

impl WaveletCoeffs {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn len(&self) -> usize {
        self.approx.len() + self.details.iter().map(|b| 3 * b.rows * b.cols).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sum_squares(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        sq(&self.approx)
            + self
                .details
                .iter()
                .map(|b| sq(&b.horizontal) + sq(&b.vertical) + sq(&b.diagonal))
                .sum::<f64>()
    }

    fn validate(&self) -> Result<()> {
        let j = self.levels();
        if j == 0 {
            return Err(Error::Shape("no detail levels".into()));
        }
        for (lvl, b) in self.details.iter().enumerate() {
            let (r, c) = (self.n_rows >> (lvl + 1), self.n_cols >> (lvl + 1));
            let n = r * c;
            if (b.rows, b.cols) != (r, c)
                || b.horizontal.len() != n
                || b.vertical.len() != n
                || b.diagonal.len() != n
            {
                return Err(Error::Shape(format!(
                    "level {} sub-bands should be {r}x{c}",
                    lvl + 1
                )));
            }
        }
        if self.approx.len() != (self.n_rows >> j) * (self.n_cols >> j) {
            return Err(Error::Shape("approximation band has the wrong size".into()));
        }
        Ok(())
    }

    /// Approximation band first, then levels coarse to fine, each as
    /// horizontal, vertical, diagonal; row-major inside a band.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.approx);
        for b in self.details.iter().rev() {
            v.extend_from_slice(&b.horizontal);
            v.extend_from_slice(&b.vertical);
            v.extend_from_slice(&b.diagonal);
        }
        v
    }

    pub fn from_vector(v: &[f64], n_rows: usize, n_cols: usize, levels: usize) -> Result<Self> {
        WaveletSpec::new(WaveletFamily::Haar, levels).check_shape(n_rows, n_cols)?;
        if v.len() != n_rows * n_cols {
            return Err(Error::Shape(format!(
                "coefficient vector has length {}, expected {}",
                v.len(),
                n_rows * n_cols
            )));
        }
        let na = (n_rows >> levels) * (n_cols >> levels);
        let approx = v[..na].to_vec();
        let mut off = na;
        let mut details = Vec::with_capacity(levels);
        for lvl in (1..=levels).rev() {
            let (r, c) = (n_rows >> lvl, n_cols >> lvl);
            let n = r * c;
            let mut take = || {
                let s = v[off..off + n].to_vec();
                off += n;
                s
            };
            let horizontal = take();
            let vertical = take();
            let diagonal = take();
            details.push(DetailBands {
                rows: r,
                cols: c,
                horizontal,
                vertical,
                diagonal,
            });
        }
        details.reverse();
        Ok(WaveletCoeffs {
            n_rows,
            n_cols,
            details,
            approx,
        })
    }
}

fn block_pass(buf: &mut [f64], stride: usize, rows: usize, cols: usize, f: &FilterBank, inverse: bool) {
    // rows
    let mut line = vec![0.0; cols.max(rows)];
    let mut lo = vec![0.0; cols.max(rows) / 2];
    let mut hi = vec![0.0; cols.max(rows) / 2];
    let row_pass = |buf: &mut [f64], line: &mut [f64], lo: &mut [f64], hi: &mut [f64]| {
        for k in 0..rows {
            let row = &mut buf[k * stride..k * stride + cols];
            if inverse {
                lo[..cols / 2].copy_from_slice(&row[..cols / 2]);
                hi[..cols / 2].copy_from_slice(&row[cols / 2..]);
                synthesize(&lo[..cols / 2], &hi[..cols / 2], row, f);
            } else {
                line[..cols].copy_from_slice(row);
                let (l, h) = row.split_at_mut(cols / 2);
                analyze(&line[..cols], l, h, f);
            }
        }
    };
    let col_pass = |buf: &mut [f64], line: &mut [f64], lo: &mut [f64], hi: &mut [f64]| {
        let h = rows / 2;
        for l in 0..cols {
            if inverse {
                for k in 0..h {
                    lo[k] = buf[k * stride + l];
                    hi[k] = buf[(k + h) * stride + l];
                }
                synthesize(&lo[..h], &hi[..h], &mut line[..rows], f);
                for k in 0..rows {
                    buf[k * stride + l] = line[k];
                }
            } else {
                for k in 0..rows {
                    line[k] = buf[k * stride + l];
                }
                analyze(&line[..rows], &mut lo[..h], &mut hi[..h], f);
                for k in 0..h {
                    buf[k * stride + l] = lo[k];
                    buf[(k + h) * stride + l] = hi[k];
                }
            }
        }
    };
    if inverse {
        col_pass(buf, &mut line, &mut lo, &mut hi);
        row_pass(buf, &mut line, &mut lo, &mut hi);
    } else {
        row_pass(buf, &mut line, &mut lo, &mut hi);
        col_pass(buf, &mut line, &mut lo, &mut hi);
    }
}

fn copy_block(buf: &[f64], stride: usize, r0: usize, c0: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for k in r0..r0 + rows {
        out.extend_from_slice(&buf[k * stride + c0..k * stride + c0 + cols]);
    }
    out
}

fn paste_block(buf: &mut [f64], stride: usize, r0: usize, c0: usize, cols: usize, src: &[f64]) {
    for (i, row) in src.chunks(cols).enumerate() {
        let k = r0 + i;
        buf[k * stride + c0..k * stride + c0 + cols].copy_from_slice(row);
    }
}

/// Forward transform of a row-major `n_rows x n_cols` buffer.
pub fn forward(values: &[f64], n_rows: usize, n_cols: usize, spec: WaveletSpec) -> Result<WaveletCoeffs> {
    spec.check_shape(n_rows, n_cols)?;
    if values.len() != n_rows * n_cols {
        return Err(Error::Shape(format!(
            "{} values for {n_rows}x{n_cols}",
            values.len()
        )));
    }
    let f = filter_bank(spec.family);
    let mut buf = values.to_vec();
    let mut details = Vec::with_capacity(spec.levels);
    let (mut r, mut c) = (n_rows, n_cols);
    for _ in 0..spec.levels {
        block_pass(&mut buf, n_cols, r, c, f, false);
        let (hr, hc) = (r / 2, c / 2);
        details.push(DetailBands {
            rows: hr,
            cols: hc,
            horizontal: copy_block(&buf, n_cols, hr, 0, hr, hc),
            vertical: copy_block(&buf, n_cols, 0, hc, hr, hc),
            diagonal: copy_block(&buf, n_cols, hr, hc, hr, hc),
        });
        r = hr;
        c = hc;
    }
    Ok(WaveletCoeffs {
        n_rows,
        n_cols,
        details,
        approx: copy_block(&buf, n_cols, 0, 0, r, c),
    })
}

/// Inverse transform back to a row-major buffer.
pub fn inverse(coeffs: &WaveletCoeffs, family: WaveletFamily) -> Result<Vec<f64>> {
    coeffs.validate()?;
    let f = filter_bank(family);
    let (n_rows, n_cols) = (coeffs.n_rows, coeffs.n_cols);
    let mut buf = vec![0.0; n_rows * n_cols];
    let j = coeffs.levels();
    paste_block(&mut buf, n_cols, 0, 0, n_cols >> j, &coeffs.approx);
    for lvl in (0..j).rev() {
        let b = &coeffs.details[lvl];
        let (hr, hc) = (b.rows, b.cols);
        paste_block(&mut buf, n_cols, hr, 0, hc, &b.horizontal);
        paste_block(&mut buf, n_cols, 0, hc, hc, &b.vertical);
        paste_block(&mut buf, n_cols, hr, hc, hc, &b.diagonal);
        block_pass(&mut buf, n_cols, 2 * hr, 2 * hc, f, true);
    }
    Ok(buf)
}

pub fn dwt2_forward(map: &SpatialMap, spec: WaveletSpec) -> Result<WaveletCoeffs> {
    forward(map.values(), map.n_rows(), map.n_cols(), spec)
}

pub fn dwt2_inverse(
    coeffs: &WaveletCoeffs,
    spec: WaveletSpec,
    grid: &crate::grid::GridSpec,
) -> Result<SpatialMap> {
    if coeffs.levels() != spec.levels || (coeffs.n_rows, coeffs.n_cols) != (grid.n_rows, grid.n_cols) {
        return Err(Error::Shape(format!(
            "coefficients ({}x{}, {} levels) do not match spec/grid ({}x{}, {} levels)",
            coeffs.n_rows,
            coeffs.n_cols,
            coeffs.levels(),
            grid.n_rows,
            grid.n_cols,
            spec.levels
        )));
    }
    SpatialMap::new(*grid, inverse(coeffs, spec.family)?)
}

pub fn coeffs_to_vector(coeffs: &WaveletCoeffs) -> Vec<f64> {
    coeffs.to_vector()
}

pub fn vector_to_coeffs(v: &[f64], n_rows: usize, n_cols: usize, levels: usize) -> Result<WaveletCoeffs> {
    WaveletCoeffs::from_vector(v, n_rows, n_cols, levels)
}
