//! Run configuration: a JSON file, then command-line overrides.

use std::path::Path;

use clap::Args;
use mapsurrogate::benchfn::Campbell2dSpec;
use mapsurrogate::grid::MapFormat;
use mapsurrogate::select::{LassoOptions, SelectionTarget};
use mapsurrogate::sensitivity::SobolConfig;
use mapsurrogate::{BasisConfig, GridSpec, PcaMetric, PipelineConfig, SelectionConfig, WaveletFamily};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub bounds: Vec<(f64, f64)>,
    pub pipeline: PipelineConfig,
    pub sobol: SobolConfig,
    pub map_format: MapFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bench = Campbell2dSpec::default();
        RunConfig {
            grid: bench.grid().expect("default grid is valid"),
            bounds: bench.bounds,
            pipeline: PipelineConfig::default(),
            sobol: SobolConfig::default(),
            map_format: MapFormat::Grid,
        }
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// JSON config file; flags below override its fields
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Master seed (pipeline, GP multistarts and Sobol sampling)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Map rows
    #[arg(long, global = true)]
    pub rows: Option<usize>,
    /// Map columns
    #[arg(long, global = true)]
    pub cols: Option<usize>,
    /// Basis: wavelet-d4, wavelet-haar or bspline:K1xK2
    #[arg(long, global = true)]
    pub basis: Option<String>,
    /// Wavelet decomposition depth (default: 1)
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    /// Number of coefficients kept
    #[arg(long, global = true)]
    pub k_tilde: Option<usize>,
    /// Keep the largest prefix with at most this share of mean energy
    #[arg(long, global = true, conflicts_with = "k_tilde")]
    pub energy: Option<f64>,
    /// Switch to lasso selection with this penalty
    #[arg(long, global = true)]
    pub lasso: Option<f64>,
    /// PCA metric: orthonormal or gram
    #[arg(long, global = true)]
    pub metric: Option<String>,
    /// Number of principal components
    #[arg(long, global = true)]
    pub n_pc: Option<usize>,
    /// GP multistarts
    #[arg(long, global = true)]
    pub multistarts: Option<usize>,
    /// Sobol base sample size
    #[arg(long, global = true)]
    pub n0: Option<usize>,
    /// Bootstrap replicates for confidence intervals (0 disables)
    #[arg(long, global = true)]
    pub bootstrap: Option<usize>,
    /// Map file format: grid or csv
    #[arg(long, global = true)]
    pub format: Option<String>,
}

fn bad(msg: String) -> Failure {
    Failure::new("config", msg)
}

fn parse_basis(s: &str, levels: Option<usize>) -> Result<BasisConfig, Failure> {
    match s {
        "wavelet-d4" | "d4" => Ok(BasisConfig::Wavelet { family: WaveletFamily::D4, levels }),
        "wavelet-haar" | "haar" => Ok(BasisConfig::Wavelet { family: WaveletFamily::Haar, levels }),
        _ => {
            let dims = s.strip_prefix("bspline:").ok_or_else(|| bad(format!("unknown basis '{s}'")))?;
            let (a, b) = dims.split_once('x').ok_or_else(|| bad(format!("expected bspline:K1xK2, got '{s}'")))?;
            let k = |v: &str| v.parse::<usize>().map_err(|e| bad(format!("basis size '{v}': {e}")));
            Ok(BasisConfig::Bspline { k1: k(a)?, k2: k(b)? })
        }
    }
}

impl RunConfig {
    pub fn load(o: &Overrides) -> Result<RunConfig, Failure> {
        let mut c = match &o.config {
            Some(path) => read_json(path)?,
            None => RunConfig::default(),
        };
        c.apply(o)?;
        Ok(c)
    }

    fn apply(&mut self, o: &Overrides) -> Result<(), Failure> {
        if let Some(s) = o.seed {
            self.pipeline.seed = s;
            self.pipeline.gp.seed = s;
            self.sobol.seed = s;
        }
        if o.rows.is_some() || o.cols.is_some() {
            let r = o.rows.unwrap_or(self.grid.n_rows);
            let c = o.cols.unwrap_or(self.grid.n_cols);
            self.grid = GridSpec::new(r, c, self.grid.domain).map_err(|e| bad(e.to_string()))?;
        }
        if let Some(b) = &o.basis {
            self.pipeline.basis = parse_basis(b, o.levels)?;
        } else if let (Some(l), BasisConfig::Wavelet { levels, .. }) = (o.levels, &mut self.pipeline.basis) {
            *levels = Some(l);
        }
        if let Some(p) = o.lasso {
            let k = match &self.pipeline.selection {
                SelectionConfig::Energy { target: SelectionTarget::Count(k) } => *k,
                SelectionConfig::Lasso { k_target, .. } => *k_target,
                SelectionConfig::Energy { .. } => usize::MAX,
            };
            let d = LassoOptions::default();
            self.pipeline.selection = SelectionConfig::Lasso {
                penalty: p,
                k_target: k,
                tol: d.tol,
                max_sweeps: d.max_sweeps,
            };
        }
        if let Some(k) = o.k_tilde {
            self.pipeline = self.pipeline.with_k_tilde(k);
        }
        if let Some(p) = o.energy {
            self.pipeline.selection = SelectionConfig::Energy { target: SelectionTarget::Proportion(p) };
        }
        if let Some(m) = &o.metric {
            self.pipeline.metric = match m.as_str() {
                "orthonormal" => PcaMetric::Orthonormal,
                "gram" => PcaMetric::Gram,
                _ => return Err(bad(format!("unknown metric '{m}' (orthonormal or gram)"))),
            };
        }
        if let Some(n) = o.n_pc {
            self.pipeline.n_pc = n;
        }
        if let Some(m) = o.multistarts {
            self.pipeline.gp.multistarts = m;
        }
        if let Some(n) = o.n0 {
            self.sobol.n0 = n;
        }
        if let Some(b) = o.bootstrap {
            self.sobol.bootstrap = b;
        }
        if let Some(f) = &o.format {
            self.map_format = match f.as_str() {
                "grid" => MapFormat::Grid,
                "csv" => MapFormat::Csv,
                _ => return Err(bad(format!("unknown map format '{f}' (grid or csv)"))),
            };
        }
        Ok(())
    }
}

fn read_json(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}
