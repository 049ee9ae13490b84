//! Model bundles: a directory with `manifest.json` and one `.grid` payload
//! per array. The manifest records the format version, the training
//! config, shapes and the SHA-256 of every payload; loading checks all of
//! them and rebuilds the derived state deterministically.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{pca_gram, Basis, Frame, PipelineConfig, SurrogateModel, TrainingReport};
use crate::error::{Error, Result};
use crate::fpca::FpcaModel;
use crate::gp::{FitReport, GpModel};
use crate::grid::{decode_grid, encode_grid, GridSpec};
use crate::select::{SelectionMode, SelectionResult};

pub const BUNDLE_FORMAT: &str = "mapsurrogate-bundle";
pub const BUNDLE_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayloadEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shapes {
    pub n_samples: usize,
    pub n_inputs: usize,
    pub n_coeffs: usize,
    pub n_kept: usize,
    pub n_pc: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub config: PipelineConfig,
    pub grid: GridSpec,
    pub bounds: Vec<(f64, f64)>,
    pub frame: Frame,
    pub selection_mode: SelectionMode,
    pub shapes: Shapes,
    pub gp_reports: Vec<FitReport>,
    pub offset_report: Option<FitReport>,
    pub report: TrainingReport,
    pub payloads: Vec<PayloadEntry>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn indices_as_f64(v: &[usize]) -> Vec<f64> {
    v.iter().map(|&i| i as f64).collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `model` into directory `dir` (created if missing).
pub fn save_model(model: &SurrogateModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let inputs = model.gps.first().map(|g| g.inputs().clone()).expect("a trained model has at least one GP");
    let d = model.dim();
    let gp_params = DMatrix::from_fn(model.n_pc(), d + 1, |l, j| {
        let g = &model.gps[l];
        if j < d {
            g.lengthscales()[j]
        } else {
            g.nugget()
        }
    });
    let sel = &model.selection;
    let f = &model.fpca;
    let mut arrays: Vec<(&str, usize, usize, Vec<f64>)> = vec![
        ("inputs", inputs.nrows(), inputs.ncols(), row_major(&inputs)),
        ("lambda", 1, sel.lambda.len(), sel.lambda.clone()),
        ("kept", 1, sel.kept.len(), indices_as_f64(&sel.kept)),
        ("discarded", 1, sel.discarded.len(), indices_as_f64(&sel.discarded)),
        ("fill_means", 1, sel.fill_means.len(), sel.fill_means.clone()),
        ("pca_mean", 1, f.mean().len(), f.mean().to_vec()),
        ("eigenvalues", 1, f.eigenvalues().len(), f.eigenvalues().to_vec()),
        ("directions", f.directions().nrows(), f.directions().ncols(), row_major(f.directions())),
        ("eigenvectors", f.eigenvectors().nrows(), f.eigenvectors().ncols(), row_major(f.eigenvectors())),
        ("scores", f.scores().nrows(), f.scores().ncols(), row_major(f.scores())),
        ("gp_params", gp_params.nrows(), gp_params.ncols(), row_major(&gp_params)),
    ];
    if let Some(g) = &model.offset {
        arrays.push(("offset_targets", 1, g.targets().len(), g.targets().to_vec()));
        arrays.push(("offset_params", 1, d + 1, g.lengthscales().iter().copied().chain([g.nugget()]).collect()));
    }
    let mut payloads = Vec::new();
    for (name, rows, cols, values) in arrays {
        let bytes = encode_grid(rows, cols, &values);
        let file = format!("{name}.grid");
        let path = dir.join(&file);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        payloads.push(PayloadEntry { name: name.into(), file, rows, cols, sha256: sha256_hex(&bytes) });
    }
    let manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION.into(),
        config: model.config.clone(),
        grid: *model.grid(),
        bounds: model.bounds.clone(),
        frame: model.frame,
        selection_mode: sel.mode,
        shapes: Shapes {
            n_samples: inputs.nrows(),
            n_inputs: d,
            n_coeffs: sel.n_total(),
            n_kept: sel.n_kept(),
            n_pc: model.n_pc(),
        },
        gp_reports: model.gps.iter().map(|g| g.report().clone()).collect(),
        offset_report: model.offset.as_ref().map(|g| g.report().clone()),
        report: model.report.clone(),
        payloads,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Bundle(e.to_string()))?;
    let path = dir.join("manifest.json");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn check_version(version: &str) -> Result<()> {
    let major: u64 = version
        .split('.')
        .next()
        .and_then(|m| m.parse().ok())
        .ok_or_else(|| Error::Bundle(format!("unreadable bundle version '{version}'")))?;
    if major > SUPPORTED_MAJOR {
        return Err(Error::Bundle(format!(
            "bundle version {version} is newer than this build supports ({SUPPORTED_MAJOR}.x); upgrade to load it"
        )));
    }
    if major < SUPPORTED_MAJOR {
        return Err(Error::Bundle(format!("bundle version {version} is no longer supported")));
    }
    Ok(())
}

struct Payloads<'a> {
    dir: &'a Path,
    entries: &'a [PayloadEntry],
}

impl Payloads<'_> {
    fn get(&self, name: &str) -> Result<DMatrix<f64>> {
        let e = self
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Bundle(format!("payload '{name}' missing from manifest")))?;
        let path = self.dir.join(&e.file);
        let bytes = std::fs::read(&path).map_err(|err| Error::io(&path, err))?;
        if sha256_hex(&bytes) != e.sha256 {
            return Err(Error::Bundle(format!("payload '{name}' ({}) fails its SHA-256 check", e.file)));
        }
        let (rows, cols, values) =
            decode_grid(&bytes).map_err(|m| Error::Bundle(format!("payload '{name}': {m}")))?;
        if (rows, cols) != (e.rows, e.cols) {
            return Err(Error::Bundle(format!(
                "payload '{name}' is {rows}x{cols}, manifest says {}x{}",
                e.rows, e.cols
            )));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.get(name)?.as_slice().to_vec())
    }

    fn indices(&self, name: &str) -> Result<Vec<usize>> {
        self.vector(name)?
            .into_iter()
            .map(|v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Bundle(format!("payload '{name}' holds a non-index value {v}")))
                }
            })
            .collect()
    }
}

/// Read a bundle written by [`save_model`], verifying version and hashes.
pub fn load_model(dir: &Path) -> Result<SurrogateModel> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let head: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Bundle(format!("manifest: {e}")))?;
    if head.get("format").and_then(|v| v.as_str()) != Some(BUNDLE_FORMAT) {
        return Err(Error::Bundle(format!("{} is not a {BUNDLE_FORMAT} manifest", path.display())));
    }
    check_version(head.get("version").and_then(|v| v.as_str()).unwrap_or(""))?;
    let m: Manifest = serde_json::from_value(head).map_err(|e| Error::Bundle(format!("manifest: {e}")))?;
    let p = Payloads { dir, entries: &m.payloads };

    let basis = Basis::new(&m.config.basis, &m.grid)?;
    let selection = SelectionResult {
        mode: m.selection_mode,
        kept: p.indices("kept")?,
        discarded: p.indices("discarded")?,
        lambda: p.vector("lambda")?,
        fill_means: p.vector("fill_means")?,
    };
    if selection.n_total() != basis.n_coeffs() || selection.n_kept() + selection.discarded.len() != selection.n_total() {
        return Err(Error::Bundle("selection does not match the basis size".into()));
    }
    let gram = pca_gram(&basis, m.frame, &selection.kept)?;
    let scores = p.get("scores")?;
    let fpca = FpcaModel::from_parts(
        p.vector("pca_mean")?,
        p.vector("eigenvalues")?,
        p.get("directions")?,
        p.get("eigenvectors")?,
        scores.clone(),
        gram,
    )?;
    let inputs = p.get("inputs")?;
    let params = p.get("gp_params")?;
    let d = m.bounds.len();
    if params.shape() != (fpca.n_pc(), d + 1) || m.gp_reports.len() != fpca.n_pc() || inputs.ncols() != d {
        return Err(Error::Bundle("GP parameters do not match the PCA model".into()));
    }
    let gps = (0..fpca.n_pc())
        .map(|l| {
            let y: Vec<f64> = scores.column(l).iter().copied().collect();
            let theta: Vec<f64> = params.row(l).iter().take(d).copied().collect();
            GpModel::assemble(&m.bounds, &inputs, &y, theta, params[(l, d)], m.gp_reports[l].clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let offset = match &m.offset_report {
        Some(rep) => {
            let y = p.vector("offset_targets")?;
            let op = p.vector("offset_params")?;
            if op.len() != d + 1 {
                return Err(Error::Bundle("offset parameters have the wrong length".into()));
            }
            Some(GpModel::assemble(&m.bounds, &inputs, &y, op[..d].to_vec(), op[d], rep.clone())?)
        }
        None => None,
    };
    Ok(SurrogateModel {
        config: m.config,
        basis,
        frame: m.frame,
        selection,
        fpca,
        gps,
        offset,
        bounds: m.bounds,
        report: m.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_gate() {
        assert!(check_version("1.0").is_ok());
        assert!(check_version("1.7").is_ok());
        let e = check_version("2.0").unwrap_err().to_string();
        assert!(e.contains("newer"), "{e}");
        assert!(check_version("0.9").is_err());
        assert!(check_version("x").is_err());
    }
}
