use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sigsel_cli::commands;
use sigsel_cli::config::Method;
use sigsel_cli::{io, load, presets, ExperimentConfig};
use sigsel_core::baselines::Ploidy;

#[derive(Parser, Debug)]
#[command(
    name = "sigsel",
    version,
    about = "Selection coefficients from allele-frequency time series via signature-kernel scoring rules"
)]
struct Cli {
    /// JSON experiment config (may name a preset and override its fields)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in preset; takes precedence over a preset named in --config
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Master seed, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores); results do not depend on it
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PloidyArg {
    Haploid,
    Diploid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Gblfi,
    Lls,
    Truth,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate observed trajectories from the config's true parameters
    Simulate {
        /// Number of replicates, overriding sim.replicates
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Sample the posterior of the selection coefficients
    Infer {
        /// Trajectory CSVs (default: io.inputs)
        #[arg(long, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        n_steps: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// Logit least-squares estimates per replicate
    Lls {
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "diploid")]
        ploidy: PloidyArg,
        /// Population size for the boundary clamp (default: from the config, if any)
        #[arg(long)]
        pop_size: Option<u64>,
    },
    /// RMSE table over the config's benchmark scenarios
    Benchmark {
        /// Repetitions per scenario, overriding benchmark.n_reps
        #[arg(long)]
        reps: Option<usize>,
        /// Methods to run, overriding benchmark.methods
        #[arg(long, value_enum, num_args = 1..)]
        methods: Vec<MethodArg>,
    },
    /// Print the fully expanded config
    Config,
    /// List the built-in presets
    Presets,
}

fn resolved(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = load(cli.config.as_deref(), cli.preset.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.io.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Presets => {
            for name in presets::NAMES {
                let p = presets::preset(name)?;
                println!("{name:<18} {}", p.description);
            }
        }
        Command::Config => println!("{}", resolved(&cli)?.to_json()),
        Command::Simulate { replicates } => {
            let mut cfg = resolved(&cli)?;
            if let Some(r) = replicates {
                cfg.sim.replicates = *r;
            }
            cfg.validate()?;
            for f in commands::simulate(&cfg)? {
                println!("{}", f.display());
            }
        }
        Command::Infer { data, n_steps, burn_in } => {
            let mut cfg = resolved(&cli)?;
            if let Some(n) = n_steps {
                cfg.inference.n_steps = *n;
            }
            if let Some(b) = burn_in {
                cfg.inference.burn_in = *b;
            }
            cfg.validate()?;
            let inputs = if data.is_empty() { cfg.io.inputs.clone() } else { data.clone() };
            let trajs = io::read_all(&inputs)?;
            let res = commands::infer(&cfg, trajs, &inputs)?;
            let s = &res.summary;
            println!("acceptance rate {:.3}", s.acceptance_rate);
            for (k, name) in s.names.iter().enumerate() {
                println!(
                    "{name:>8}  mean {:>10.5}  mode {:>10.5}",
                    s.posterior_mean[k], s.posterior_mode[k]
                );
            }
            println!("wrote {}", cfg.io.out_dir.display());
        }
        Command::Lls { data, ploidy, pop_size } => {
            let pop = match (pop_size, cli.config.is_some() || cli.preset.is_some()) {
                (Some(n), _) => Some(*n),
                (None, true) => Some(resolved(&cli)?.sim.pop_size),
                (None, false) => None,
            };
            let ploidy = match ploidy {
                PloidyArg::Haploid => Ploidy::Haploid,
                PloidyArg::Diploid => Ploidy::Diploid,
            };
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let rows = commands::lls(&io::read_all(data)?, ploidy, pop, &out)?;
            for r in rows {
                let cells: Vec<String> = r.s_hat.iter().map(|s| format!("{s:.5}")).collect();
                println!("{:>8}  {}", r.replicate, cells.join("  "));
            }
        }
        Command::Benchmark { reps, methods } => {
            let mut cfg = resolved(&cli)?;
            if let Some(b) = cfg.benchmark.as_mut() {
                if let Some(n) = reps {
                    b.n_reps = *n;
                }
                if !methods.is_empty() {
                    b.methods = methods
                        .iter()
                        .map(|m| match m {
                            MethodArg::Gblfi => Method::Gblfi,
                            MethodArg::Lls => Method::Lls,
                            MethodArg::Truth => Method::Truth,
                        })
                        .collect();
                }
            }
            cfg.validate()?;
            let rows = commands::benchmark(&cfg)?;
            print!("{}", commands::format_table(&rows, &[]));
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
