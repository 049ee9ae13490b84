//! Discretized spatial maps, input ensembles and their on-disk formats.
//!
//! Maps are stored row-major. Pixel `(k, l)` sits at
//! `z = (a1 + l * dz1, b2 - k * dz2)`: columns run along `z1`, rows run
//! along `z2` from the top (largest `z2`) down, the usual image layout.
//!
//! Two map formats are supported: plain CSV of the value matrix, and a
//! binary `.grid` file made of a 16-byte header (8-byte magic, `n_rows`,
//! `n_cols` as little-endian `u32`) followed by the row-major values as
//! little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 8] = b"MAPGRID\0";
pub const GRID_HEADER_LEN: usize = 16;

/// Rectangle `[a1, b1] x [a2, b2]` in spatial units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub z1: (f64, f64),
    pub z2: (f64, f64),
}

impl Domain {
    pub fn square(lo: f64, hi: f64) -> Self {
        Domain {
            z1: (lo, hi),
            z2: (lo, hi),
        }
    }

    pub fn area(&self) -> f64 {
        (self.z1.1 - self.z1.0) * (self.z2.1 - self.z2.0)
    }
}

/// Shape and placement of a rectangular pixel grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_rows: usize,
    pub n_cols: usize,
    pub domain: Domain,
}

impl GridSpec {
    pub fn new(n_rows: usize, n_cols: usize, domain: Domain) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Shape(format!(
                "grid must have at least one row and column, got {n_rows}x{n_cols}"
            )));
        }
        let ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && b > a;
        if !ok(domain.z1) || !ok(domain.z2) {
            return Err(Error::InvalidArgument(format!(
                "degenerate domain {domain:?}"
            )));
        }
        Ok(GridSpec {
            n_rows,
            n_cols,
            domain,
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Grid spacing `(dz1, dz2)`; zero along an axis with a single point.
    pub fn spacing(&self) -> (f64, f64) {
        let step = |(a, b): (f64, f64), n: usize| {
            if n > 1 {
                (b - a) / (n - 1) as f64
            } else {
                0.0
            }
        };
        (
            step(self.domain.z1, self.n_cols),
            step(self.domain.z2, self.n_rows),
        )
    }

    fn z1_at(&self, l: usize) -> f64 {
        let (dz1, _) = self.spacing();
        if l + 1 == self.n_cols && self.n_cols > 1 {
            self.domain.z1.1
        } else {
            self.domain.z1.0 + l as f64 * dz1
        }
    }

    fn z2_at(&self, k: usize) -> f64 {
        let (_, dz2) = self.spacing();
        if k + 1 == self.n_rows && self.n_rows > 1 {
            self.domain.z2.0
        } else {
            self.domain.z2.1 - k as f64 * dz2
        }
    }

    /// `z1` coordinate of every column.
    pub fn z1_coords(&self) -> Vec<f64> {
        (0..self.n_cols).map(|l| self.z1_at(l)).collect()
    }

    /// `z2` coordinate of every row, top row first.
    pub fn z2_coords(&self) -> Vec<f64> {
        (0..self.n_rows).map(|k| self.z2_at(k)).collect()
    }

    /// Location of pixel `(k, l)`. The last row/column lands exactly on the
    /// domain edge.
    pub fn location(&self, k: usize, l: usize) -> (f64, f64) {
        (self.z1_at(l), self.z2_at(k))
    }
}

/// One simulator output sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialMap {
    grid: GridSpec,
    values: Vec<f64>,
}

impl SpatialMap {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_pixels() {
            return Err(Error::Shape(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.n_rows,
                grid.n_cols
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "pixel ({}, {})",
                p / grid.n_cols,
                p % grid.n_cols
            )));
        }
        Ok(SpatialMap { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        SpatialMap {
            values: vec![0.0; grid.n_pixels()],
            grid,
        }
    }

    /// Evaluate `f(z1, z2)` at every pixel.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let z1 = grid.z1_coords();
        let z2 = grid.z2_coords();
        let mut values = Vec::with_capacity(grid.n_pixels());
        for &b in &z2 {
            for &a in &z1 {
                values.push(f(a, b));
            }
        }
        SpatialMap::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n_rows(&self) -> usize {
        self.grid.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.grid.n_cols
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.grid.n_cols + l]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Row-major copy of the values.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn unflatten(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        SpatialMap::new(grid, values)
    }

    /// Dense matrix view (`n_rows x n_cols`).
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.grid.n_rows, self.grid.n_cols, &self.values)
    }

    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn max_abs_diff(&self, other: &SpatialMap) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `n` simulator runs: design points and their output maps on a shared grid.
#[derive(Clone, Debug)]
pub struct Ensemble {
    inputs: DMatrix<f64>,
    outputs: Vec<SpatialMap>,
    bounds: Vec<(f64, f64)>,
}

impl Ensemble {
    pub fn new(
        inputs: DMatrix<f64>,
        outputs: Vec<SpatialMap>,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if inputs.nrows() != outputs.len() {
            return Err(Error::Shape(format!(
                "{} design rows but {} maps",
                inputs.nrows(),
                outputs.len()
            )));
        }
        if inputs.ncols() != bounds.len() {
            return Err(Error::Shape(format!(
                "design has {} columns but {} bounds were given",
                inputs.ncols(),
                bounds.len()
            )));
        }
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidArgument(format!(
                    "bounds of input {j} are invalid: ({lo}, {hi})"
                )));
            }
        }
        for i in 0..inputs.nrows() {
            for (j, &(lo, hi)) in bounds.iter().enumerate() {
                let v = inputs[(i, j)];
                if !v.is_finite() {
                    return Err(Error::DesignRow {
                        row: i,
                        message: format!("non-finite value in column {j}"),
                    });
                }
                if v < lo || v > hi {
                    return Err(Error::DesignRow {
                        row: i,
                        message: format!("column {j} = {v} outside [{lo}, {hi}]"),
                    });
                }
            }
        }
        if let Some(first) = outputs.first() {
            for (i, m) in outputs.iter().enumerate() {
                if m.grid() != first.grid() {
                    return Err(Error::Map {
                        index: i,
                        message: "grid differs from map 0".into(),
                    });
                }
            }
        }
        Ok(Ensemble {
            inputs,
            outputs,
            bounds,
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &[SpatialMap] {
        &self.outputs
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.outputs.first().map(SpatialMap::grid)
    }

    pub fn input_row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    /// Sub-ensemble with the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Ensemble {
        let inputs = DMatrix::from_fn(rows.len(), self.dim(), |i, j| self.inputs[(rows[i], j)]);
        Ensemble {
            inputs,
            outputs: rows.iter().map(|&i| self.outputs[i].clone()).collect(),
            bounds: self.bounds.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapFormat {
    Csv,
    Grid,
}

impl MapFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MapFormat::Csv => "csv",
            MapFormat::Grid => "grid",
        }
    }
}

/// File name of map `i` inside an ensemble directory.
pub fn map_file_name(i: usize, format: MapFormat) -> String {
    format!("{i:05}.{}", format.extension())
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Read a numeric CSV table. A first line that does not parse as numbers is
/// treated as a header and returned separately.
pub fn read_numeric_csv(path: &Path) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>)> {
    let mut rdr = csv_reader(path)?;
    let mut header = None;
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let parsed: std::result::Result<Vec<f64>, _> =
            rec.iter().map(|s| s.parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if line == 0 => header = Some(rec.iter().map(str::to_string).collect()),
            Err(e) => return Err(csv_err(path, format!("line {}: {e}", line + 1))),
        }
    }
    Ok((header, rows))
}

fn rows_to_matrix(path: &Path, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(csv_err(
            path,
            format!("row {i} has {} fields, expected {ncols}", r.len()),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_design_csv(path: &Path) -> Result<DMatrix<f64>> {
    let (_, rows) = read_numeric_csv(path)?;
    let m = rows_to_matrix(path, &rows)?;
    for i in 0..m.nrows() {
        if let Some(j) = (0..m.ncols()).find(|&j| !m[(i, j)].is_finite()) {
            return Err(Error::DesignRow {
                row: i,
                message: format!("non-finite value in column {j}"),
            });
        }
    }
    Ok(m)
}

pub fn write_design_csv(path: &Path, design: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    if let Some(h) = header {
        w.write_record(h).map_err(|e| csv_err(path, e))?;
    }
    for i in 0..design.nrows() {
        w.write_record(design.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_map_csv(path: &Path, grid: &GridSpec) -> Result<SpatialMap> {
    let mut rdr = csv_reader(path)?;
    let mut values = Vec::with_capacity(grid.n_pixels());
    let mut n_rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != grid.n_cols {
            return Err(Error::Shape(format!(
                "{}: row {n_rows} has {} values, grid has {} columns",
                path.display(),
                rec.len(),
                grid.n_cols
            )));
        }
        for s in rec.iter() {
            values.push(
                s.parse::<f64>()
                    .map_err(|e| csv_err(path, format!("row {n_rows}: {e}")))?,
            );
        }
        n_rows += 1;
    }
    if n_rows != grid.n_rows {
        return Err(Error::Shape(format!(
            "{}: {n_rows} rows, grid has {}",
            path.display(),
            grid.n_rows
        )));
    }
    SpatialMap::new(*grid, values)
}

pub fn write_map_csv(path: &Path, map: &SpatialMap) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in map.values().chunks(map.n_cols()) {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Encode a row-major matrix in the binary `.grid` layout.
pub fn encode_grid(n_rows: usize, n_cols: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), n_rows * n_cols);
    let mut buf = Vec::with_capacity(GRID_HEADER_LEN + 8 * values.len());
    buf.extend_from_slice(GRID_MAGIC);
    buf.extend_from_slice(&(n_rows as u32).to_le_bytes());
    buf.extend_from_slice(&(n_cols as u32).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Decode a `.grid` byte buffer into `(n_rows, n_cols, values)`.
pub fn decode_grid(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f64>), String> {
    if bytes.len() < GRID_HEADER_LEN {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    if &bytes[..8] != GRID_MAGIC {
        return Err("bad magic".into());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (n_rows, n_cols) = (u32_at(8), u32_at(12));
    let body = &bytes[GRID_HEADER_LEN..];
    if body.len() != 8 * n_rows * n_cols {
        return Err(format!(
            "header says {n_rows}x{n_cols} but payload holds {} bytes",
            body.len()
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n_rows, n_cols, values))
}

pub fn read_grid_file(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes).map_err(|message| Error::GridFormat {
        path: path.to_path_buf(),
        message,
    })
}

pub fn write_grid_file(path: &Path, n_rows: usize, n_cols: usize, values: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_grid(n_rows, n_cols, values))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_map_grid(path: &Path, grid: &GridSpec) -> Result<SpatialMap> {
    let (r, c, values) = read_grid_file(path)?;
    if (r, c) != (grid.n_rows, grid.n_cols) {
        return Err(Error::Shape(format!(
            "{} is {r}x{c}, grid is {}x{}",
            path.display(),
            grid.n_rows,
            grid.n_cols
        )));
    }
    SpatialMap::new(*grid, values)
}

pub fn write_map_grid(path: &Path, map: &SpatialMap) -> Result<()> {
    write_grid_file(path, map.n_rows(), map.n_cols(), map.values())
}

fn find_map_file(dir: &Path, i: usize) -> Option<(PathBuf, MapFormat)> {
    [MapFormat::Grid, MapFormat::Csv].into_iter().find_map(|f| {
        let p = dir.join(map_file_name(i, f));
        p.is_file().then_some((p, f))
    })
}

/// Load a design CSV and its `n` map files (`00000.grid` / `00000.csv`, ...).
pub fn load_ensemble(
    design_path: &Path,
    maps_dir: &Path,
    grid: &GridSpec,
    bounds: &[(f64, f64)],
) -> Result<Ensemble> {
    let inputs = read_design_csv(design_path)?;
    let outputs = (0..inputs.nrows())
        .into_par_iter()
        .map(|i| {
            let (path, format) = find_map_file(maps_dir, i).ok_or_else(|| Error::Map {
                index: i,
                message: format!("no map file in {}", maps_dir.display()),
            })?;
            let map = match format {
                MapFormat::Grid => read_map_grid(&path, grid),
                MapFormat::Csv => read_map_csv(&path, grid),
            };
            map.map_err(|e| Error::Map {
                index: i,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(inputs, outputs, bounds.to_vec())
}

pub fn save_ensemble(
    ensemble: &Ensemble,
    design_path: &Path,
    maps_dir: &Path,
    format: MapFormat,
) -> Result<()> {
    std::fs::create_dir_all(maps_dir).map_err(|e| Error::io(maps_dir, e))?;
    let header: Vec<String> = (1..=ensemble.dim()).map(|j| format!("x{j}")).collect();
    write_design_csv(design_path, ensemble.inputs(), Some(&header))?;
    ensemble
        .outputs()
        .par_iter()
        .enumerate()
        .try_for_each(|(i, m)| {
            let path = maps_dir.join(map_file_name(i, format));
            match format {
                MapFormat::Grid => write_map_grid(&path, m),
                MapFormat::Csv => write_map_csv(&path, m),
            }
        })
}

/// Write an 8-bit binary PGM heatmap with a linear value-to-gray mapping.
/// Non-finite pixels are drawn black. Returns the `(min, max)` used.
pub fn write_pgm(path: &Path, map_rows: usize, map_cols: usize, values: &[f64]) -> Result<(f64, f64)> {
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut buf = format!("P5\n{map_cols} {map_rows}\n255\n").into_bytes();
    buf.extend(values.iter().map(|&v| {
        if v.is_finite() {
            (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    Ok((lo, hi))
}
