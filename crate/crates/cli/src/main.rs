use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pde_bvm::experiment::{self, ExperimentConfig, ModelKind};
use pde_bvm::Error;

#[derive(Parser, Debug)]
#[command(name = "pde-bvm", version, about = "Posterior sampling and BvM diagnostics for non-linear inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// JSON experiment configuration; preset defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model preset used when no config is given.
    #[arg(long, value_enum, default_value_t = Model::Xray)]
    model: Model,
    /// Overrides the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Model {
    Xray,
    Schrodinger,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset.
    Simulate(Common),
    /// Run the pCN chain on a dataset.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Dataset to sample from; defaults to <out>/dataset.json.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Compute asymptotic variances of the tracked functionals.
    Variance(Common),
    /// Repeated simulate/sample runs measuring credible-interval coverage.
    Coverage(Common),
    /// Compare a finished chain with the asymptotic variances.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Chain directory; defaults to <out>/chain.
        #[arg(long)]
        chain: Option<PathBuf>,
    },
}

fn load(c: &Common) -> pde_bvm::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::for_model(match c.model {
            Model::Xray => ModelKind::Xray,
            Model::Schrodinger => ModelKind::Schrodinger,
        }),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> pde_bvm::Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load(&c)?;
            let path = experiment::cmd_simulate(&cfg)?;
            println!("{}", path.display());
        }
        Command::Sample { common, dataset } => {
            let cfg = load(&common)?;
            let path = dataset.unwrap_or_else(|| experiment::dataset_path(&cfg));
            if !path.exists() {
                return Err(Error::Config(format!("dataset {} does not exist", path.display())));
            }
            let s = experiment::cmd_sample(&cfg, &path)?;
            println!("acceptance rate {:.3}", s.acceptance_rate);
            for f in &s.functionals {
                println!("{}: mean {:.6} sd {:.6} truth {:.6}", f.name, f.mean, f.sd, f.truth);
            }
        }
        Command::Variance(c) => {
            let cfg = load(&c)?;
            for e in experiment::cmd_variance(&cfg)?.entries {
                println!("{}: sigma^2 {:.6} (duality {:.6})", e.name, e.sigma_sq, e.duality);
            }
        }
        Command::Coverage(c) => {
            let cfg = load(&c)?;
            let r = experiment::cmd_coverage(&cfg)?;
            println!(
                "coverage {:.3} ± {:.3} over {} replications ({} failed)",
                r.fraction,
                r.std_error,
                r.replications.len(),
                r.failures.len()
            );
        }
        Command::Diagnose { common, chain } => {
            let cfg = load(&common)?;
            let dir = chain.unwrap_or_else(|| experiment::chain_dir(&cfg));
            if !dir.join("tracked.csv").exists() {
                return Err(Error::Config(format!("no tracked.csv in {}", dir.display())));
            }
            for d in experiment::cmd_diagnose(&cfg, &dir)? {
                let r = &d.report;
                println!(
                    "{}: sd ratio {:.3} skew {:.3} kurt {:.3} AD p {:.3} ESS {:.0}",
                    d.name, r.ratio_to_theory, r.skewness, r.excess_kurtosis, r.p_value, r.effective_sample_size
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::Config(_) | Error::InvalidArgument(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
