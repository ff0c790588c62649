use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use prl_core::experiment::{self, parse_methods, ExperimentConfig};
use prl_core::pomdp::write_jsonl;

#[derive(Parser)]
#[command(name = "prl", version, about = "Off-policy evaluation experiments on the NoisyObs POMDP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (or file, for `sample`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of dr,is,reg,mdp,mean_r,tis.
    #[arg(long)]
    methods: Option<String>,
    /// Replications per sample size.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    eps_noise: Option<f64>,
    /// easy, hard or optim.
    #[arg(long)]
    policy: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.base_seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(methods) = &self.methods {
            config.methods = parse_methods(methods)?;
        }
        if let Some(reps) = self.reps {
            config.replications = reps;
        }
        if let Some(eps) = self.eps_noise {
            config.eps_noise = eps;
        }
        if let Some(policy) = &self.policy {
            config.policy = policy.clone();
        }
        if let Some(grid) = &self.n_grid {
            config.n_grid = grid.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run replications and write raw.csv, summary.csv and manifest.json.
    Run(Common),
    /// Check the population identities for every target policy; exits 1 on failure.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Add this constant to every oracle q before checking.
        #[arg(long, default_value_t = 0.0)]
        corrupt_q: f64,
    },
    /// Print the exact value of the configured target policy.
    Truth(Common),
    /// Write logged trajectories as JSON lines.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        n: usize,
        /// Include hidden states.
        #[arg(long)]
        hidden: bool,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PRL_THREADS") {
        let threads: usize = v.parse().with_context(|| format!("PRL_THREADS={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.command {
        Command::Run(common) => {
            let config = common.config()?;
            let (summary, files) = experiment::run(&config)?;
            println!("truth {}", summary.truth);
            for s in &summary.summary {
                println!(
                    "{:<7} n={:<6} mean={:.6} bias={:+.6} sd={:.6} mse={:.3e} coverage={:.2} excluded={}",
                    s.method, s.n, s.mean, s.bias, s.sd, s.mse, s.coverage, s.excluded
                );
            }
            println!("wrote {}, {}, {}", files.raw_csv.display(), files.summary_csv.display(), files.manifest.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { common, corrupt_q } => {
            let config = common.config()?;
            let report = experiment::verify(&config, corrupt_q)?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(out) = &common.out {
                fs::create_dir_all(out)?;
                fs::write(out.join("certificates.json"), &json)?;
            }
            println!("{json}");
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Truth(common) => {
            let config = common.config()?;
            println!("{}", experiment::fmt_float(experiment::truth(&config)?));
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample { common, n, hidden } => {
            let config = common.config()?;
            let data = experiment::sample(&config, n, config.base_seed, hidden)?;
            match &common.out {
                Some(path) => write_jsonl(BufWriter::new(fs::File::create(path)?), &data)?,
                None => {
                    let stdout = io::stdout();
                    let mut lock = stdout.lock();
                    write_jsonl(&mut lock, &data)?;
                    lock.flush()?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
