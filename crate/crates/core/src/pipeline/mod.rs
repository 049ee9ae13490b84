//! End-to-end surrogate: basis decomposition, coefficient selection, metric
//! PCA and one GP per retained component.

pub mod bundle;
pub mod cv;

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::{deorthonormalize, orthonormalize, BsplineBasis, BsplineProjector, GramMatrix};
use crate::error::{Error, Result, StageExt};
use crate::fpca::{fit_fpca, FpcaModel};
use crate::gp::{FitReport, GpConfig, GpModel};
use crate::grid::{Ensemble, GridSpec, SpatialMap};
use crate::select::{energy_select, lasso_select, LassoOptions, SelectionResult, SelectionTarget, SparseDesign};
use crate::sensitivity::{gsi_from_components, pointwise_sobol, sobol_from_outputs, GsiEstimate, PointwiseSobol, SobolConfig, SobolSamples};
use crate::wavelet::{self, WaveletFamily, WaveletSpec};

pub use bundle::{load_model, save_model, BUNDLE_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisConfig {
    /// `levels: None` means a single decomposition level.
    Wavelet { family: WaveletFamily, levels: Option<usize> },
    /// Degree-1 tensor B-splines with `k1` knots along z1 and `k2` along z2.
    Bspline { k1: usize, k2: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionConfig {
    Energy { target: SelectionTarget },
    Lasso {
        penalty: f64,
        k_target: usize,
        #[serde(default = "default_lasso_tol")]
        tol: f64,
        #[serde(default = "default_lasso_sweeps")]
        max_sweeps: usize,
    },
}

fn default_lasso_tol() -> f64 {
    LassoOptions::default().tol
}

fn default_lasso_sweeps() -> usize {
    LassoOptions::default().max_sweeps
}

/// Metric for the PCA step of the energy route. `Orthonormal` runs
/// identity PCA on `R^T alpha`; `Gram` runs metric PCA on raw coefficients
/// and needs every coefficient kept (unless the basis is orthonormal).
/// The lasso route always uses the Gram metric restricted to the kept set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaMetric {
    Orthonormal,
    Gram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub basis: BasisConfig,
    pub selection: SelectionConfig,
    pub metric: PcaMetric,
    pub n_pc: usize,
    pub gp: GpConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            basis: BasisConfig::Wavelet { family: WaveletFamily::D4, levels: None },
            selection: SelectionConfig::Energy { target: SelectionTarget::Count(1200) },
            metric: PcaMetric::Orthonormal,
            n_pc: 5,
            gp: GpConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    fn check(&self) -> Result<()> {
        if self.n_pc == 0 {
            return Err(Error::InvalidArgument("n_pc must be at least 1".into()));
        }
        match &self.selection {
            SelectionConfig::Energy { target: SelectionTarget::Proportion(p) } if !(*p > 0.0 && *p <= 1.0) => {
                Err(Error::InvalidArgument(format!("energy proportion {p} not in (0, 1]")))
            }
            SelectionConfig::Energy { target: SelectionTarget::Count(0) } => {
                Err(Error::InvalidArgument("cannot keep zero coefficients".into()))
            }
            SelectionConfig::Lasso { penalty, k_target, .. } if !(*penalty >= 0.0) || *k_target == 0 => {
                Err(Error::InvalidArgument(format!("lasso penalty {penalty}, k_target {k_target}")))
            }
            _ => Ok(()),
        }
    }

    /// Copy with the kept-coefficient count replaced.
    pub fn with_k_tilde(&self, k: usize) -> Self {
        let mut c = self.clone();
        c.selection = match &c.selection {
            SelectionConfig::Energy { .. } => SelectionConfig::Energy { target: SelectionTarget::Count(k) },
            SelectionConfig::Lasso { penalty, tol, max_sweeps, .. } => SelectionConfig::Lasso {
                penalty: *penalty,
                k_target: k,
                tol: *tol,
                max_sweeps: *max_sweeps,
            },
        };
        c
    }
}

/// A basis bound to a grid: decomposition into raw coefficients and
/// synthesis back to pixel values.
#[derive(Clone, Debug)]
pub enum Basis {
    Wavelet { spec: WaveletSpec, grid: GridSpec },
    Bspline { projector: BsplineProjector, gram: GramMatrix },
}

impl Basis {
    pub fn new(config: &BasisConfig, grid: &GridSpec) -> Result<Basis> {
        match *config {
            BasisConfig::Wavelet { family, levels } => {
                let levels = levels.unwrap_or(1);
                let spec = WaveletSpec::new(family, levels);
                spec.check_shape(grid.n_rows, grid.n_cols)?;
                Ok(Basis::Wavelet { spec, grid: *grid })
            }
            BasisConfig::Bspline { k1, k2 } => {
                let basis = BsplineBasis::uniform(&grid.domain, k1, k2)?;
                let gram = basis.gram()?;
                let projector = BsplineProjector::new(basis, *grid)?;
                Ok(Basis::Bspline { projector, gram })
            }
        }
    }

    pub fn n_coeffs(&self) -> usize {
        match self {
            Basis::Wavelet { grid, .. } => grid.n_pixels(),
            Basis::Bspline { projector, .. } => projector.basis().len(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        match self {
            Basis::Wavelet { grid, .. } => grid,
            Basis::Bspline { projector, .. } => projector.grid(),
        }
    }

    pub fn gram(&self) -> GramMatrix {
        match self {
            Basis::Wavelet { grid, .. } => GramMatrix::identity(grid.n_pixels()),
            Basis::Bspline { gram, .. } => gram.clone(),
        }
    }

    pub fn is_orthonormal(&self) -> bool {
        matches!(self, Basis::Wavelet { .. })
    }

    pub fn decompose(&self, values: &[f64]) -> Result<Vec<f64>> {
        match self {
            Basis::Wavelet { spec, grid } => {
                Ok(wavelet::forward(values, grid.n_rows, grid.n_cols, *spec)?.to_vector())
            }
            Basis::Bspline { projector, .. } => projector.project_values(values),
        }
    }

    pub fn synthesize(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        match self {
            Basis::Wavelet { spec, grid } => {
                let c = wavelet::vector_to_coeffs(alpha, grid.n_rows, grid.n_cols, spec.levels)?;
                wavelet::inverse(&c, spec.family)
            }
            Basis::Bspline { projector, .. } => projector.reconstruct_values(alpha),
        }
    }

    /// Pixel-domain design matrix, one sparse column per basis function.
    pub fn design(&self) -> Result<SparseDesign> {
        let n_pixels = self.grid().n_pixels();
        let columns: Vec<Vec<(usize, f64)>> = match self {
            Basis::Wavelet { .. } => (0..self.n_coeffs())
                .into_par_iter()
                .map(|k| {
                    let mut e = vec![0.0; self.n_coeffs()];
                    e[k] = 1.0;
                    self.synthesize(&e).map(|atom| {
                        atom.into_iter()
                            .enumerate()
                            .filter(|(_, v)| v.abs() > 1e-15)
                            .collect()
                    })
                })
                .collect::<Result<_>>()?,
            Basis::Bspline { projector, .. } => (0..self.n_coeffs()).map(|k| projector.design_column(k)).collect(),
        };
        SparseDesign::new(n_pixels, columns)
    }

    /// Squared norm of the constant map 1 in the basis inner product.
    fn unit_norm_sq(&self) -> f64 {
        match self {
            Basis::Wavelet { grid, .. } => grid.n_pixels() as f64,
            Basis::Bspline { projector, .. } => projector.grid().domain.area(),
        }
    }
}

/// Coordinates the kept indices refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// `c = R^T alpha`.
    Orthonormal,
    /// Raw basis coefficients `alpha`.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub n_samples: usize,
    pub n_pixels: usize,
    pub n_coeffs: usize,
    pub n_kept: usize,
    pub kept_fraction: f64,
    /// Sum of the selection scores over the kept set (mean energy for the
    /// energy route).
    pub retained_score: f64,
    pub n_pc: usize,
    pub eigenvalues: Vec<f64>,
    pub explained_inertia: f64,
    pub gp_fits: Vec<FitReport>,
    pub offset_fit: Option<FitReport>,
    /// Per training sample, `max |map - reconstruction from its scores|`.
    pub truncation_residuals: Vec<f64>,
}

impl fmt::Display for TrainingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "kept {} of {} coefficients ({:.1}%)",
            self.n_kept,
            self.n_coeffs,
            100.0 * self.kept_fraction
        )?;
        writeln!(f, "retained selection score {:.6}", self.retained_score)?;
        writeln!(
            f,
            "dimensions: {} pixels -> {} coefficients -> {} kept -> {} components",
            self.n_pixels, self.n_coeffs, self.n_kept, self.n_pc
        )?;
        writeln!(f, "explained inertia {:.4}", self.explained_inertia)?;
        for (l, r) in self.gp_fits.iter().enumerate() {
            writeln!(
                f,
                "gp {}: log-likelihood {}, status {:?}, gradient {:.2e}, nugget {:.2e}",
                l + 1,
                fmt_loglik(r.log_likelihood),
                r.status,
                r.gradient_norm,
                r.nugget
            )?;
        }
        if let Some(r) = &self.offset_fit {
            writeln!(f, "offset gp: log-likelihood {}, status {:?}", fmt_loglik(r.log_likelihood), r.status)?;
        }
        let worst = self.truncation_residuals.iter().copied().fold(0.0, f64::max);
        write!(f, "max truncation residual {worst:.4e}")
    }
}

fn fmt_loglik(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

/// Wall-clock time per stage, kept out of the model so bundles stay
/// reproducible.
#[derive(Clone, Debug, Default)]
pub struct StageTimings(pub Vec<(&'static str, f64)>);

impl fmt::Display for StageTimings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(s, t)| format!("{s} {t:.2}s")).collect();
        write!(f, "timings: {}", parts.join(", "))
    }
}

#[derive(Clone, Debug)]
pub struct SurrogateModel {
    pub(crate) config: PipelineConfig,
    pub(crate) basis: Basis,
    pub(crate) frame: Frame,
    pub(crate) selection: SelectionResult,
    pub(crate) fpca: FpcaModel,
    pub(crate) gps: Vec<GpModel>,
    /// Spatial-mean offset model (lasso route, which works on centered maps).
    pub(crate) offset: Option<GpModel>,
    pub(crate) bounds: Vec<(f64, f64)>,
    pub(crate) report: TrainingReport,
}

/// PCA metric on the kept coordinates.
fn pca_gram(basis: &Basis, frame: Frame, kept: &[usize]) -> Result<GramMatrix> {
    match frame {
        Frame::Orthonormal => Ok(GramMatrix::identity(kept.len())),
        Frame::Raw if basis.is_orthonormal() => Ok(GramMatrix::identity(kept.len())),
        Frame::Raw => {
            let full = basis.gram();
            if kept.len() == full.dim() && kept.iter().enumerate().all(|(i, &k)| i == k) {
                Ok(full)
            } else {
                GramMatrix::dense(full.restricted(kept))
            }
        }
    }
}

fn gp_config(base: &GpConfig, seed: u64, component: usize) -> GpConfig {
    GpConfig {
        seed: seed.wrapping_mul(1_000_003).wrapping_add(base.seed).wrapping_add(component as u64),
        ..base.clone()
    }
}

fn spatial_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Train a surrogate on `ensemble`.
pub fn train(ensemble: &Ensemble, config: &PipelineConfig) -> Result<SurrogateModel> {
    train_timed(ensemble, config).map(|(m, _)| m)
}

pub fn train_timed(ensemble: &Ensemble, config: &PipelineConfig) -> Result<(SurrogateModel, StageTimings)> {
    config.check().stage("config")?;
    let mut timings = StageTimings::default();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut StageTimings| {
        timings.0.push((name, clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };
    let grid = *ensemble
        .grid()
        .ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))
        .stage("basis")?;
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")).at_stage("basis"));
    }
    let basis = Basis::new(&config.basis, &grid).stage("basis")?;
    let k_total = basis.n_coeffs();
    lap("basis", &mut timings);

    let lasso = matches!(config.selection, SelectionConfig::Lasso { .. });
    let offsets: Option<Vec<f64>> = lasso.then(|| ensemble.outputs().iter().map(|m| spatial_mean(m.values())).collect());
    let targets: Vec<Vec<f64>> = ensemble
        .outputs()
        .iter()
        .enumerate()
        .map(|(i, m)| match &offsets {
            Some(o) => m.values().iter().map(|v| v - o[i]).collect(),
            None => m.values().to_vec(),
        })
        .collect();

    let (frame, selection, coeffs) = match &config.selection {
        SelectionConfig::Energy { target } => {
            let raw = targets
                .par_iter()
                .map(|y| basis.decompose(y))
                .collect::<Result<Vec<_>>>()
                .stage("decompose")?;
            let gram = basis.gram();
            let ortho = raw
                .par_iter()
                .map(|a| orthonormalize(a, &gram))
                .collect::<Result<Vec<_>>>()
                .stage("decompose")?;
            lap("decompose", &mut timings);
            let c = DMatrix::from_fn(n, k_total, |i, j| ortho[i][j]);
            let sel = energy_select(&c, *target).stage("select")?;
            if config.metric == PcaMetric::Gram && !basis.is_orthonormal() {
                if sel.n_kept() != k_total {
                    return Err(Error::InvalidArgument(format!(
                        "Gram-metric PCA on raw coefficients needs every coefficient kept ({} of {k_total} selected); use the orthonormal metric or lasso selection",
                        sel.n_kept()
                    ))
                    .at_stage("select"));
                }
                let a = DMatrix::from_fn(n, k_total, |i, j| raw[i][j]);
                let mut sel = sel;
                sel.fill_means.clear();
                (Frame::Raw, sel, a)
            } else {
                (Frame::Orthonormal, sel, c)
            }
        }
        SelectionConfig::Lasso { penalty, k_target, tol, max_sweeps } => {
            let design = basis.design().stage("decompose")?;
            lap("decompose", &mut timings);
            let opts = LassoOptions { tol: *tol, max_sweeps: *max_sweeps };
            let (sel, a) = lasso_select(&targets, &design, *penalty, *k_target, &opts).stage("select")?;
            (Frame::Raw, sel, a)
        }
    };
    lap("select", &mut timings);

    let kept = selection.kept_columns(&coeffs);
    let first = kept.row(0);
    if kept.row_iter().all(|r| r == first) {
        return Err(Error::Degenerate("degenerate ensemble: all samples have identical coefficients".into()).at_stage("pca"));
    }
    let gram = pca_gram(&basis, frame, &selection.kept).stage("pca")?;
    let fpca = fit_fpca(&kept, gram, config.n_pc).stage("pca")?;
    lap("pca", &mut timings);

    let gps = (0..config.n_pc)
        .into_par_iter()
        .map(|l| {
            let y: Vec<f64> = fpca.scores().column(l).iter().copied().collect();
            GpModel::fit(ensemble.inputs(), &y, ensemble.bounds(), &gp_config(&config.gp, config.seed, l))
        })
        .collect::<Result<Vec<_>>>()
        .stage("gp")?;
    let offset = match &offsets {
        Some(o) => Some(
            GpModel::fit(ensemble.inputs(), o, ensemble.bounds(), &gp_config(&config.gp, config.seed, config.n_pc))
                .stage("gp")?,
        ),
        None => None,
    };
    lap("gp", &mut timings);

    let mut model = SurrogateModel {
        config: config.clone(),
        basis,
        frame,
        selection,
        fpca,
        gps,
        offset,
        bounds: ensemble.bounds().to_vec(),
        report: TrainingReport {
            n_samples: n,
            n_pixels: grid.n_pixels(),
            n_coeffs: k_total,
            n_kept: 0,
            kept_fraction: 0.0,
            retained_score: 0.0,
            n_pc: config.n_pc,
            eigenvalues: vec![],
            explained_inertia: 0.0,
            gp_fits: vec![],
            offset_fit: None,
            truncation_residuals: vec![],
        },
    };
    model.report = model.build_report(ensemble).stage("report")?;
    lap("report", &mut timings);
    Ok((model, timings))
}

impl SurrogateModel {
    fn build_report(&self, ensemble: &Ensemble) -> Result<TrainingReport> {
        let residuals = (0..ensemble.len())
            .into_par_iter()
            .map(|i| {
                let t: Vec<f64> = self.fpca.scores().row(i).iter().copied().collect();
                let off = self.offset.as_ref().map_or(0.0, |g| g.targets()[i]);
                let rec = self.map_from_scores(&t, off, self.n_pc())?;
                Ok(rec
                    .iter()
                    .zip(ensemble.outputs()[i].values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(TrainingReport {
            n_samples: ensemble.len(),
            n_pixels: self.grid().n_pixels(),
            n_coeffs: self.selection.n_total(),
            n_kept: self.selection.n_kept(),
            kept_fraction: self.selection.n_kept() as f64 / self.selection.n_total() as f64,
            retained_score: self.selection.retained_score(),
            n_pc: self.n_pc(),
            eigenvalues: self.fpca.retained_eigenvalues().to_vec(),
            explained_inertia: self.fpca.explained_inertia(),
            gp_fits: self.gps.iter().map(|g| g.report().clone()).collect(),
            offset_fit: self.offset.as_ref().map(|g| g.report().clone()),
            truncation_residuals: residuals,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn selection(&self) -> &SelectionResult {
        &self.selection
    }

    pub fn fpca(&self) -> &FpcaModel {
        &self.fpca
    }

    pub fn gps(&self) -> &[GpModel] {
        &self.gps
    }

    pub fn offset_model(&self) -> Option<&GpModel> {
        self.offset.as_ref()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn grid(&self) -> &GridSpec {
        self.basis.grid()
    }

    pub fn n_pc(&self) -> usize {
        self.gps.len()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn report(&self) -> &TrainingReport {
        &self.report
    }

    /// Pixel values from the first `n_use` component scores plus an offset.
    fn map_from_scores(&self, scores: &[f64], offset: f64, n_use: usize) -> Result<Vec<f64>> {
        let mut t = scores[..n_use].to_vec();
        t.resize(self.fpca.n_pc(), 0.0);
        let kept = self.fpca.reconstruct(&t)?;
        let full = self.selection.assemble_lenient(&kept)?;
        let alpha = match self.frame {
            Frame::Orthonormal if !self.basis.is_orthonormal() => deorthonormalize(&full, &self.basis.gram())?,
            _ => full,
        };
        let mut values = self.basis.synthesize(&alpha)?;
        if offset != 0.0 {
            values.iter_mut().for_each(|v| *v += offset);
        }
        Ok(values)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("input has {} values, model expects {}", x.len(), self.dim())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction input".into()));
        }
        Ok(())
    }

    /// True when `x` lies inside the training box.
    pub fn in_bounds(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.bounds).all(|(v, (lo, hi))| (lo..=hi).contains(&v))
    }

    /// Predicted component scores (and the offset) at `x`.
    pub fn predict_scores(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_input(x)?;
        let t = self.gps.iter().map(|g| g.mean_at(x)).collect();
        let off = self.offset.as_ref().map_or(0.0, |g| g.mean_at(x));
        Ok((t, off))
    }

    pub fn predict_map(&self, x: &[f64]) -> Result<SpatialMap> {
        self.predict_map_truncated(x, self.n_pc())
    }

    /// Prediction using only the first `n_use` components.
    pub fn predict_map_truncated(&self, x: &[f64], n_use: usize) -> Result<SpatialMap> {
        if n_use == 0 || n_use > self.n_pc() {
            return Err(Error::InvalidArgument(format!("n_use = {n_use} not in 1..={}", self.n_pc())));
        }
        let (t, off) = self.predict_scores(x)?;
        SpatialMap::new(*self.grid(), self.map_from_scores(&t, off, n_use)?)
    }

    pub fn predict_maps(&self, x: &DMatrix<f64>) -> Result<Vec<SpatialMap>> {
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.predict_map(&x.row(i).iter().copied().collect::<Vec<_>>()))
            .collect()
    }

    /// Map of the offset plus the per-component pixel loadings
    /// (`n_pixels x m`, with the offset column last when present).
    pub fn linear_parts(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let k = self.fpca.n_pc();
        let mean = self.map_from_scores(&vec![0.0; k], 0.0, k)?;
        let m = k + usize::from(self.offset.is_some());
        let mut load = DMatrix::zeros(mean.len(), m);
        for l in 0..k {
            let mut e = vec![0.0; k];
            e[l] = 1.0;
            let v = self.map_from_scores(&e, 0.0, k)?;
            for p in 0..mean.len() {
                load[(p, l)] = v[p] - mean[p];
            }
        }
        if self.offset.is_some() {
            load.column_mut(k).fill(1.0);
        }
        Ok((mean, load))
    }

    /// Predicted map with the per-pixel GP variance (components treated as
    /// independent).
    pub fn predict_map_with_variance(&self, x: &[f64]) -> Result<(SpatialMap, SpatialMap)> {
        let map = self.predict_map(x)?;
        let (_, load) = self.linear_parts()?;
        let q = DMatrix::from_row_slice(1, x.len(), x);
        let mut vars: Vec<f64> = self.gps.iter().map(|g| g.predict(&q).map(|(_, v)| v[0])).collect::<Result<_>>()?;
        if let Some(g) = &self.offset {
            vars.push(g.predict(&q)?.1[0]);
        }
        let v = (0..load.nrows())
            .map(|p| vars.iter().enumerate().map(|(l, s)| s * load[(p, l)].powi(2)).sum())
            .collect();
        Ok((map, SpatialMap::new(*self.grid(), v)?))
    }

    /// Latent values (component scores, then the offset) at every row.
    pub fn latent_at(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Shape(format!("{} input columns, model expects {}", x.ncols(), self.dim())));
        }
        let mut models: Vec<&GpModel> = self.gps.iter().collect();
        if let Some(g) = &self.offset {
            models.push(g);
        }
        let cols: Vec<Vec<f64>> = models
            .iter()
            .map(|g| {
                (0..x.nrows())
                    .into_par_iter()
                    .map(|i| g.mean_at(&x.row(i).iter().copied().collect::<Vec<_>>()))
                    .collect()
            })
            .collect();
        Ok(DMatrix::from_fn(x.nrows(), cols.len(), |i, j| cols[j][i]))
    }
}

impl SelectionResult {
    /// Like [`SelectionResult::assemble`], but tolerates a selection
    /// without fill means when nothing was discarded.
    fn assemble_lenient(&self, kept_values: &[f64]) -> Result<Vec<f64>> {
        if self.discarded.is_empty() || !self.fill_means.is_empty() {
            self.assemble(kept_values)
        } else {
            Err(Error::Shape("selection has discarded coefficients but no fill means".into()))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityOptions {
    pub sobol: SobolConfig,
    /// Add discarded PCA inertia to the GSI denominator.
    pub include_discarded: bool,
    /// Pixels for pointwise indices; empty skips them.
    pub pixels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SensitivityResult {
    pub gsi: GsiEstimate,
    pub pointwise: Option<PointwiseSobol>,
    /// Surrogate evaluations per latent component.
    pub evaluations_per_component: usize,
}

/// Generalized sensitivity indices of the surrogate's map output.
pub fn run_sensitivity(model: &SurrogateModel, opts: &SensitivityOptions) -> Result<SensitivityResult> {
    let cfg = &opts.sobol;
    if cfg.n0 < 100 {
        return Err(Error::InvalidArgument(format!("n0 = {} must be at least 100", cfg.n0)).at_stage("sa"));
    }
    let d = model.dim();
    let samples = SobolSamples::draw(model.bounds(), cfg.n0, cfg.sampling, cfg.seed).stage("sa")?;
    let x = samples.stacked();
    let latent = model.latent_at(&x).stage("sa")?;
    let comps = (0..latent.ncols())
        .map(|l| {
            let y: Vec<f64> = latent.column(l).iter().copied().collect();
            sobol_from_outputs(&y, cfg.n0, d, cfg)
        })
        .collect::<Result<Vec<_>>>()
        .stage("sa")?;
    let mut weights = model.fpca.retained_eigenvalues().to_vec();
    let mut denom = opts.include_discarded.then(|| model.fpca.total_inertia());
    if let Some(g) = &model.offset {
        // constant-map variance in the basis inner product
        let t = g.targets();
        let mu = spatial_mean(t);
        let var = t.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (t.len() - 1) as f64;
        let w = var * model.basis.unit_norm_sq();
        weights.push(w);
        denom = denom.map(|dn| dn + w);
    }
    let gsi = gsi_from_components(comps, &weights, denom, cfg.confidence).stage("sa")?;
    let pointwise = if opts.pixels.is_empty() {
        None
    } else {
        let (offset, load) = model.linear_parts().stage("sa")?;
        Some(pointwise_sobol(&latent, &offset, &load, &opts.pixels, cfg.n0, d).stage("sa")?)
    };
    Ok(SensitivityResult {
        gsi,
        pointwise,
        evaluations_per_component: x.nrows(),
    })
}
