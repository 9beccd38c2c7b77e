//! The four subcommands. Each returns its results and writes its artifacts
//! under the configured output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sigsel_core::baselines::{
    benchmark_scenario, lls_estimate, posterior_mean, posterior_mode_kde, BenchmarkRow,
    GblfiEstimator, LlsEstimator, Ploidy, PointEstimator, TruthEstimator,
};
use sigsel_core::mcmc::{run_chain, ChainOutput, SigScoreTarget};
use sigsel_core::params::Block;
use sigsel_core::rng::stream;
use sigsel_core::wf::{FitnessModel, Trajectory, WrightFisher};

use crate::config::{ExperimentConfig, Method};
use crate::io;
use crate::plot::{density_svg, Marker};

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.io.out_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    io::write(path, &text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub version: String,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: ExperimentConfig,
}

impl Manifest {
    fn new(command: &str, cfg: &ExperimentConfig, inputs: &[PathBuf], outputs: Vec<PathBuf>) -> Self {
        Self {
            command: command.into(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            inputs: inputs.to_vec(),
            outputs,
            config: cfg.clone(),
        }
    }
}

/// Observed replicate `rep` of a simulation run.
pub fn simulate_replicate(cfg: &ExperimentConfig, rep: usize) -> Result<Trajectory> {
    let model = FitnessModel::new(cfg.sim.true_s.clone(), cfg.model.dominance.clone(), cfg.model.mode)?;
    let wf = WrightFisher::new(model, &cfg.rmap()?)?;
    Ok(wf.simulate(&cfg.sim_config()?, &mut stream(cfg.seed, &[1, rep as u64]))?)
}

/// Writes `trajectory_NNN.csv` per replicate plus `manifest.json`.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let trajs: Vec<Trajectory> = (0..cfg.sim.replicates)
        .into_par_iter()
        .map(|rep| simulate_replicate(cfg, rep))
        .collect::<Result<_>>()?;
    let mut files = Vec::with_capacity(trajs.len());
    for (rep, t) in trajs.iter().enumerate() {
        let path = dir.join(format!("trajectory_{:03}.csv", rep + 1));
        io::write(&path, &io::format_trajectories(std::slice::from_ref(t)))?;
        files.push(path);
    }
    write_json(&dir.join("manifest.json"), &Manifest::new("simulate", cfg, &[], files.clone()))?;
    Ok(files)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub names: Vec<String>,
    pub acceptance_rate: f64,
    pub posterior_mean: Vec<f64>,
    pub posterior_mode: Vec<f64>,
    pub initial_point: Vec<f64>,
    pub n_samples: usize,
    pub replicates: usize,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub wall_seconds: f64,
}

/// Chain start: configured values, else the replicate-averaged diploid LLS
/// estimate pulled inside the prior bounds, and the uniform simplex point.
pub fn initial_point(cfg: &ExperimentConfig, data: &[Trajectory]) -> Result<Vec<f64>> {
    let loci = cfg.model.loci;
    let mut init = match &cfg.inference.init_s {
        Some(s) => s.clone(),
        None => {
            let mut mean = vec![0.0; loci];
            for t in data {
                let est = lls_estimate(t, Ploidy::Diploid, Some(cfg.sim.pop_size))?;
                for (m, s) in mean.iter_mut().zip(est.s_hat) {
                    *m += s / data.len() as f64;
                }
            }
            let (lo, hi) = cfg.selection_bounds();
            let margin = if lo.is_finite() && hi.is_finite() { 1e-3 * (hi - lo) } else { 0.0 };
            mean.into_iter().map(|s| s.clamp(lo + margin, hi - margin)).collect()
        }
    };
    if cfg.inference.infer_init_haps {
        match &cfg.inference.init_haps {
            Some(h) => init.extend_from_slice(h),
            None => {
                let n = 1usize << loci;
                init.extend(std::iter::repeat_n(1.0 / n as f64, n));
                init.push(0.0);
            }
        }
    }
    Ok(init)
}

pub struct InferResult {
    pub summary: RunSummary,
    pub chain: ChainOutput,
}

/// Runs the sampler on `data` (one entry per observed replicate).
pub fn infer(cfg: &ExperimentConfig, data: Vec<Trajectory>, inputs: &[PathBuf]) -> Result<InferResult> {
    ensure!(!data.is_empty(), "no observed trajectories");
    let grid = cfg.sim_config()?.times();
    for (r, t) in data.iter().enumerate() {
        if t.times() != grid.as_slice() {
            bail!(
                "replicate {} has generations {:?} but the sim section (t0 {}, delta_t {}, intervals {}) gives {:?}",
                r + 1,
                t.times(),
                cfg.sim.t0,
                cfg.sim.delta_t,
                cfg.sim.intervals,
                grid
            );
        }
        ensure!(
            t.loci() == cfg.model.loci,
            "replicate {} has {} loci, model has {}",
            r + 1,
            t.loci(),
            cfg.model.loci
        );
    }
    let replicates = data.len();
    let init = initial_point(cfg, &data)?;
    let mcmc = cfg.mcmc();
    let target = SigScoreTarget::new(data, cfg.model_spec()?, mcmc.m, cfg.kernel())?;

    let started = Instant::now();
    let chain = run_chain(&init, &cfg.parameter_space, &target, &mcmc)
        .context("running the sampler")?;
    let wall_seconds = started.elapsed().as_secs_f64();

    let summary = RunSummary {
        names: chain.names.clone(),
        acceptance_rate: chain.acceptance_rate,
        posterior_mean: posterior_mean(&chain.samples)?,
        posterior_mode: posterior_mode_kde(&chain.samples)?,
        initial_point: init,
        n_samples: chain.samples.nrows(),
        replicates,
        seed: cfg.seed,
        config: cfg.clone(),
        wall_seconds,
    };

    let dir = out_dir(cfg)?;
    let mut outputs = vec![dir.join("samples.csv"), dir.join("summary.json")];
    io::write(&outputs[0], &io::format_matrix(&chain.names, &chain.samples))?;
    write_json(&outputs[1], &summary)?;
    outputs.extend(write_plots(cfg, &summary, &chain, &dir)?);
    write_json(&dir.join("manifest.json"), &Manifest::new("infer", cfg, inputs, outputs))?;
    Ok(InferResult { summary, chain })
}

/// True value of each sampled column when the data were simulated from the config.
fn truth_column(cfg: &ExperimentConfig, name: &str) -> Option<f64> {
    let idx: usize = name.rsplit('_').next()?.parse().ok()?;
    if name.starts_with("s_") {
        cfg.sim.true_s.get(idx - 1).copied()
    } else if name.starts_with("h_") {
        cfg.sim.init_haps.get(idx - 1).copied()
    } else {
        None
    }
}

/// One density panel per pair of non-auxiliary parameters.
fn write_plots(cfg: &ExperimentConfig, summary: &RunSummary, chain: &ChainOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let plot_dir = dir.join("plots");
    std::fs::create_dir_all(&plot_dir)?;
    let aux: Vec<bool> = cfg
        .parameter_space
        .blocks()
        .iter()
        .flat_map(|b| match b {
            Block::Interval { count, .. } => vec![false; *count],
            Block::Simplex { dim, .. } => {
                let mut v = vec![false; *dim];
                v.push(true);
                v
            }
        })
        .collect();
    let cols: Vec<usize> = (0..chain.names.len()).filter(|&c| !aux[c]).collect();
    let pairs: Vec<(usize, usize)> = cols
        .iter()
        .enumerate()
        .flat_map(|(k, &a)| cols[k + 1..].iter().map(move |&b| (a, b)))
        .collect();
    pairs
        .par_iter()
        .map(|&(a, b)| {
            let xs = chain.samples.column(a).to_vec();
            let ys = chain.samples.column(b).to_vec();
            let mut markers = Vec::new();
            if let (Some(tx), Some(ty)) = (truth_column(cfg, &chain.names[a]), truth_column(cfg, &chain.names[b])) {
                markers.push(Marker { x: tx, y: ty, color: "blue", label: "simulation value" });
            }
            markers.push(Marker {
                x: summary.posterior_mean[a],
                y: summary.posterior_mean[b],
                color: "red",
                label: "posterior mean",
            });
            let svg = density_svg(&xs, &ys, &chain.names[a], &chain.names[b], &markers);
            let path = plot_dir.join(format!("{}__{}.svg", chain.names[a], chain.names[b]));
            io::write(&path, &svg)?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlsRow {
    pub replicate: String,
    pub s_hat: Vec<f64>,
    pub degenerate: Vec<bool>,
}

/// Per-replicate LLS estimates followed by their mean; writes `lls.csv`.
pub fn lls(
    data: &[Trajectory],
    ploidy: Ploidy,
    pop_size: Option<u64>,
    out: &Path,
) -> Result<Vec<LlsRow>> {
    ensure!(!data.is_empty(), "no observed trajectories");
    let loci = data[0].loci();
    let mut rows = Vec::with_capacity(data.len() + 1);
    let mut mean = vec![0.0; loci];
    for (r, t) in data.iter().enumerate() {
        let est = lls_estimate(t, ploidy, pop_size)?;
        for (m, s) in mean.iter_mut().zip(&est.s_hat) {
            *m += s / data.len() as f64;
        }
        rows.push(LlsRow {
            replicate: (r + 1).to_string(),
            s_hat: est.s_hat,
            degenerate: est.degenerate,
        });
    }
    let any_degenerate = (0..loci).map(|l| rows.iter().any(|r| r.degenerate[l])).collect();
    rows.push(LlsRow {
        replicate: "mean".into(),
        s_hat: mean,
        degenerate: any_degenerate,
    });

    let mut text = String::from("replicate");
    for l in 1..=loci {
        write!(text, ",s_{l}").unwrap();
    }
    text.push_str(",degenerate_loci\n");
    for row in &rows {
        text.push_str(&row.replicate);
        for s in &row.s_hat {
            write!(text, ",{s}").unwrap();
        }
        let flagged: Vec<String> = row
            .degenerate
            .iter()
            .enumerate()
            .filter(|(_, d)| **d)
            .map(|(l, _)| (l + 1).to_string())
            .collect();
        writeln!(text, ",{}", flagged.join(";")).unwrap();
    }
    std::fs::create_dir_all(out)?;
    io::write(&out.join("lls.csv"), &text)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCell {
    pub scenario: String,
    pub method: String,
    pub mean_rmse: f64,
    pub sd_rmse: f64,
}

fn read_external(cfg: &ExperimentConfig) -> Result<Vec<ExternalCell>> {
    let mut out = Vec::new();
    for ext in cfg.benchmark.iter().flat_map(|b| &b.external) {
        let mut reader = csv::Reader::from_path(&ext.path)
            .with_context(|| format!("reading {}", ext.path.display()))?;
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            ensure!(rec.len() == 3, "{}: row {} needs scenario,mean_rmse,sd_rmse", ext.path.display(), i + 1);
            let num = |k: usize| -> Result<f64> {
                rec[k].trim().parse().with_context(|| format!("{}: row {}", ext.path.display(), i + 1))
            };
            out.push(ExternalCell {
                scenario: rec[0].trim().to_string(),
                method: ext.method.clone(),
                mean_rmse: num(1)?,
                sd_rmse: num(2)?,
            });
        }
    }
    Ok(out)
}

pub fn estimator(cfg: &ExperimentConfig, method: Method) -> Box<dyn PointEstimator> {
    match method {
        Method::Gblfi => Box::new(GblfiEstimator {
            mcmc: cfg.mcmc(),
            kernel: cfg.kernel(),
            summary: cfg.inference.summary,
            prior_bounds: cfg.selection_bounds(),
        }),
        Method::Lls => Box::new(LlsEstimator { ploidy: Ploidy::Diploid }),
        Method::Truth => Box::new(TruthEstimator),
    }
}

/// Aligned text table: one row per scenario, one `mean (sd)` column per method.
pub fn format_table(rows: &[BenchmarkRow], external: &[ExternalCell]) -> String {
    let mut scenarios: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let mut cells: Vec<(String, String, String)> = Vec::new();
    for r in rows {
        cells.push((r.scenario.clone(), r.method.clone(), r.cell()));
    }
    for e in external {
        cells.push((e.scenario.clone(), e.method.clone(), format!("{:.4} ({:.4})", e.mean_rmse, e.sd_rmse)));
    }
    for (s, m, _) in &cells {
        if !scenarios.contains(s) {
            scenarios.push(s.clone());
        }
        if !methods.contains(m) {
            methods.push(m.clone());
        }
    }
    let lookup = |s: &str, m: &str| {
        cells
            .iter()
            .find(|(cs, cm, _)| cs == s && cm == m)
            .map_or("-".to_string(), |c| c.2.clone())
    };
    let first = scenarios.iter().map(String::len).chain([8]).max().unwrap_or(8);
    let widths: Vec<usize> = methods
        .iter()
        .map(|m| {
            scenarios
                .iter()
                .map(|s| lookup(s, m).len())
                .chain([m.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = format!("{:<first$}", "scenario");
    for (m, w) in methods.iter().zip(&widths) {
        write!(out, "  {m:>w$}").unwrap();
    }
    out.push('\n');
    for s in &scenarios {
        write!(out, "{s:<first$}").unwrap();
        for (m, w) in methods.iter().zip(&widths) {
            write!(out, "  {:>w$}", lookup(s, m)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Runs every scenario against every configured method; writes
/// `benchmark.csv` and `benchmark.txt`.
pub fn benchmark(cfg: &ExperimentConfig) -> Result<Vec<BenchmarkRow>> {
    let Some(b) = &cfg.benchmark else {
        bail!("config has no benchmark section");
    };
    let scenarios = cfg.scenarios()?;
    let mut rows = Vec::new();
    for sc in &scenarios {
        for &m in &b.methods {
            let est = estimator(cfg, m);
            let row = benchmark_scenario(sc, est.as_ref(), cfg.seed)
                .with_context(|| format!("scenario {:?}, method {}", sc.name, est.name()))?;
            rows.push(row);
        }
    }
    let external = read_external(cfg)?;

    let dir = out_dir(cfg)?;
    let mut csv = String::from("scenario,method,mean_rmse,sd_rmse,n_reps,single_rep\n");
    for r in &rows {
        writeln!(
            csv,
            "\"{}\",{},{},{},{},{}",
            r.scenario,
            r.method,
            r.mean_rmse,
            r.sd_rmse,
            r.rmses.len(),
            r.single_rep
        )
        .unwrap();
    }
    for e in &external {
        writeln!(csv, "\"{}\",{},{},{},,", e.scenario, e.method, e.mean_rmse, e.sd_rmse).unwrap();
    }
    io::write(&dir.join("benchmark.csv"), &csv)?;
    io::write(&dir.join("benchmark.txt"), &format_table(&rows, &external))?;
    write_json(
        &dir.join("manifest.json"),
        &Manifest::new("benchmark", cfg, &[], vec![dir.join("benchmark.csv"), dir.join("benchmark.txt")]),
    )?;
    Ok(rows)
}
