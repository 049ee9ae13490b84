mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mapsurrogate::benchfn::{campbell2d_ensemble, kfold_tune, map_quantile, q2, rmse_map, Campbell2dSpec, TuneCandidate};
use mapsurrogate::design::{lhs_maximin, uniform_sample, SaConfig};
use mapsurrogate::grid::{load_ensemble, read_design_csv, save_ensemble, write_map_grid, write_pgm};
use mapsurrogate::pipeline::train_timed;
use mapsurrogate::sensitivity::{write_indices_csv, write_json};
use mapsurrogate::{load_model, run_sensitivity, save_model, Ensemble, SensitivityOptions, SpatialMap};

use config::{Overrides, RunConfig};

/// An error tagged with the step that produced it.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(stage: &'static str, message: impl Into<String>) -> Self {
        Failure { stage, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

trait Tag<T> {
    fn tag(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: fmt::Display> Tag<T> for Result<T, E> {
    fn tag(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(stage, e.to_string()))
    }
}

#[derive(Parser)]
#[command(name = "mapsurrogate", version, about = "Surrogates for simulators with 2-D map outputs")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a maximin LHS (or uniform) design in input units
    GenDesign {
        #[arg(long)]
        n: usize,
        /// Skip the annealing and draw i.i.d. uniform points
        #[arg(long)]
        uniform: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate Campbell2D on every design row
    GenBench {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a surrogate and save it as a bundle directory
    Train {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-fold cross-validation over kept-coefficient and component counts
    CvTune {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        /// Comma-separated kept-coefficient counts
        #[arg(long, value_delimiter = ',', required = true)]
        k_list: Vec<usize>,
        /// Comma-separated component counts
        #[arg(long, value_delimiter = ',', required = true)]
        pc_list: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict maps for every row of an input CSV
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write pointwise predictive variance maps
        #[arg(long)]
        variance: bool,
        /// Also write PGM heatmaps
        #[arg(long)]
        pgm: bool,
    },
    /// Score a surrogate against a held-out ensemble
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generalized (and optionally per-pixel) Sobol indices of a surrogate
    Sa {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Weight by the full PCA spectrum instead of the retained part
        #[arg(long)]
        include_discarded: bool,
        /// Also compute per-pixel indices and write them as maps
        #[arg(long)]
        pointwise: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mapsurrogate: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = RunConfig::load(&cli.overrides)?;
    match cli.command {
        Command::GenDesign { n, uniform, out } => gen_design(&cfg, n, uniform, &out),
        Command::GenBench { design, out_dir } => gen_bench(&cfg, &design, &out_dir),
        Command::Train { design, maps, out } => train_cmd(&cfg, &design, &maps, &out),
        Command::CvTune { design, maps, k_list, pc_list, folds, out } => {
            cv_tune(&cfg, &design, &maps, &k_list, &pc_list, folds, &out)
        }
        Command::Predict { model, inputs, out_dir, variance, pgm } => predict(&model, &inputs, &out_dir, variance, pgm),
        Command::Eval { model, design, maps, out_dir } => eval(&cfg, &model, &design, &maps, &out_dir),
        Command::Sa { model, out_dir, include_discarded, pointwise } => sa(&cfg, &model, &out_dir, include_discarded, pointwise),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::new("write", format!("{}: {e}", dir.display())))
}

fn heatmap(path: &Path, map: &SpatialMap) -> Result<(), Failure> {
    write_heatmap(path, map.n_rows(), map.n_cols(), map.values())
}

fn write_heatmap(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<(), Failure> {
    let (lo, hi) = write_pgm(path, rows, cols, values).tag("write")?;
    println!("{}: min {lo:.6e}, max {hi:.6e}", path.display());
    Ok(())
}

fn load(cfg: &RunConfig, design: &Path, maps: &Path) -> Result<Ensemble, Failure> {
    load_ensemble(design, maps, &cfg.grid, &cfg.bounds).tag("load")
}

fn gen_design(cfg: &RunConfig, n: usize, uniform: bool, out: &Path) -> Result<(), Failure> {
    let d = cfg.bounds.len();
    let design = if uniform {
        uniform_sample(n, d, cfg.pipeline.seed)
    } else {
        lhs_maximin(n, d, cfg.pipeline.seed, &SaConfig::default()).tag("design")?
    };
    design.write_csv(out, &cfg.bounds).tag("write")?;
    match design.criterion {
        Some(c) => println!("wrote {n} x {d} design to {} (maximin distance {c:.6})", out.display()),
        None => println!("wrote {n} x {d} design to {}", out.display()),
    }
    Ok(())
}

fn gen_bench(cfg: &RunConfig, design: &Path, out_dir: &Path) -> Result<(), Failure> {
    let x = read_design_csv(design).tag("load")?;
    let spec = Campbell2dSpec {
        bounds: cfg.bounds.clone(),
        domain: cfg.grid.domain,
        n_rows: cfg.grid.n_rows,
        n_cols: cfg.grid.n_cols,
    };
    let ens = campbell2d_ensemble(&x, &spec).tag("simulate")?;
    create_dir(out_dir)?;
    let maps = out_dir.join("maps");
    save_ensemble(&ens, &out_dir.join("design.csv"), &maps, cfg.map_format).tag("write")?;
    println!("wrote {} Campbell2D maps to {}", ens.len(), maps.display());
    Ok(())
}

fn train_cmd(cfg: &RunConfig, design: &Path, maps: &Path, out: &Path) -> Result<(), Failure> {
    let ens = load(cfg, design, maps)?;
    let (model, timings) = train_timed(&ens, &cfg.pipeline).tag("train")?;
    save_model(&model, out).tag("save")?;
    println!("{}", model.report());
    println!("{timings}");
    println!("saved model to {}", out.display());
    Ok(())
}

fn cv_tune(
    cfg: &RunConfig,
    design: &Path,
    maps: &Path,
    k_list: &[usize],
    pc_list: &[usize],
    folds: usize,
    out: &Path,
) -> Result<(), Failure> {
    let ens = load(cfg, design, maps)?;
    let cands: Vec<TuneCandidate> = k_list
        .iter()
        .flat_map(|&k_tilde| pc_list.iter().map(move |&n_pc| TuneCandidate { k_tilde, n_pc }))
        .collect();
    let rep = kfold_tune(&ens, &cfg.pipeline, &cands, folds, cfg.pipeline.seed).tag("cv")?;
    rep.write_csv(out).tag("write")?;
    for r in &rep.results {
        match &r.error {
            None => println!("K~ {:5} n_pc {:2}: q90 RMSE {:.6e}, mean {:.6e}", r.candidate.k_tilde, r.candidate.n_pc, r.q90, r.mean_rmse),
            Some(e) => println!("K~ {:5} n_pc {:2}: failed ({e})", r.candidate.k_tilde, r.candidate.n_pc),
        }
    }
    let best = rep.best.ok_or_else(|| Failure::new("cv", "every candidate failed"))?;
    println!("best: K~ {} n_pc {}", best.k_tilde, best.n_pc);
    Ok(())
}

fn predict(model: &Path, inputs: &Path, out_dir: &Path, variance: bool, pgm: bool) -> Result<(), Failure> {
    let m = load_model(model).tag("load")?;
    let x = read_design_csv(inputs).tag("load")?;
    if x.ncols() != m.dim() {
        return Err(Failure::new("load", format!("{} has {} columns, model expects {}", inputs.display(), x.ncols(), m.dim())));
    }
    create_dir(out_dir)?;
    for i in 0..x.nrows() {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        if !m.in_bounds(&row) {
            eprintln!("mapsurrogate: warning: input row {i} lies outside the training bounds");
        }
        let (mean, var) = if variance {
            let (a, b) = m.predict_map_with_variance(&row).tag("predict")?;
            (a, Some(b))
        } else {
            (m.predict_map(&row).tag("predict")?, None)
        };
        write_map_grid(&out_dir.join(format!("pred_{i:05}.grid")), &mean).tag("write")?;
        if pgm {
            heatmap(&out_dir.join(format!("pred_{i:05}.pgm")), &mean)?;
        }
        if let Some(v) = var {
            write_map_grid(&out_dir.join(format!("var_{i:05}.grid")), &v).tag("write")?;
            if pgm {
                heatmap(&out_dir.join(format!("var_{i:05}.pgm")), &v)?;
            }
        }
    }
    println!("wrote {} predicted maps to {}", x.nrows(), out_dir.display());
    Ok(())
}

fn eval(cfg: &RunConfig, model: &Path, design: &Path, maps: &Path, out_dir: &Path) -> Result<(), Failure> {
    let m = load_model(model).tag("load")?;
    let cfg = RunConfig { grid: *m.grid(), bounds: m.bounds().to_vec(), ..cfg.clone() };
    let ens = load(&cfg, design, maps)?;
    let pred = m.predict_maps(ens.inputs()).tag("predict")?;
    let q = q2(ens.outputs(), &pred).tag("eval")?;
    let rmse = rmse_map(ens.outputs(), &pred).tag("eval")?;
    let mean = rmse.values().iter().sum::<f64>() / rmse.values().len() as f64;
    let q90 = map_quantile(&rmse, 0.9);
    create_dir(out_dir)?;
    let metrics = out_dir.join("metrics.csv");
    std::fs::write(&metrics, format!("metric,value\nq2,{q}\nrmse_mean,{mean}\nrmse_q90,{q90}\n"))
        .map_err(|e| Failure::new("write", format!("{}: {e}", metrics.display())))?;
    write_map_grid(&out_dir.join("rmse.grid"), &rmse).tag("write")?;
    heatmap(&out_dir.join("rmse.pgm"), &rmse)?;
    println!("Q2 {q:.6}, mean RMSE {mean:.6e}, q90 RMSE {q90:.6e} over {} maps", ens.len());
    Ok(())
}

fn sa(cfg: &RunConfig, model: &Path, out_dir: &Path, include_discarded: bool, pointwise: bool) -> Result<(), Failure> {
    let m = load_model(model).tag("load")?;
    let n_pixels = m.grid().n_pixels();
    let opts = SensitivityOptions {
        sobol: cfg.sobol.clone(),
        include_discarded,
        pixels: if pointwise { (0..n_pixels).collect() } else { Vec::new() },
    };
    let res = run_sensitivity(&m, &opts).tag("sa")?;
    create_dir(out_dir)?;
    let names: Vec<String> = (1..=m.dim()).map(|i| format!("x{i}")).collect();
    let g = &res.gsi;
    write_indices_csv(&out_dir.join("gsi.csv"), &names, &g.first_order, &g.total, g.first_order_ci.as_deref(), g.total_ci.as_deref())
        .tag("write")?;
    write_json(&out_dir.join("gsi.json"), g).tag("write")?;
    println!("{} model evaluations per component", res.evaluations_per_component);
    for (i, name) in names.iter().enumerate() {
        println!("{name}: first {:.4}, total {:.4}", g.first_order[i], g.total[i]);
    }
    if let Some(pw) = &res.pointwise {
        let (r, c) = (m.grid().n_rows, m.grid().n_cols);
        for (i, name) in names.iter().enumerate() {
            for (kind, total) in [("first", false), ("total", true)] {
                let values = pw.map(n_pixels, i, total);
                let stem = out_dir.join(format!("{kind}_{name}"));
                mapsurrogate::grid::write_grid_file(&stem.with_extension("grid"), r, c, &values).tag("write")?;
                write_heatmap(&stem.with_extension("pgm"), r, c, &values)?;
            }
        }
    }
    Ok(())
}
