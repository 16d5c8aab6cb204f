use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ntn_core::channel::estimate_theta;
use ntn_core::error::NtnError;
use ntn_core::experiments::{self, ExperimentConfig, ExperimentTag, SolutionFile};
use ntn_core::orchestrator::fmt_f64;
use ntn_core::scenario::{generate, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "ntn", version, about = "Latency-optimal power and data-stream orchestration for UAV-satellite IoT uplinks")]
struct Cli {
    /// JSON experiment config; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed. Overrides NTN_SEED and the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Monte-Carlo samples for the channel statistics.
    #[arg(long, global = true)]
    mc_samples: Option<usize>,
    /// Use the full-size deployment (7 UAVs, 56 devices) instead of the desk default.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario instance.
    GenScenario,
    /// Estimate the channel statistics of the generated scenario.
    EstimateTheta,
    /// Solve one scenario and print the winning branch.
    Solve,
    /// Run an experiment driver.
    Experiment {
        /// fig3, fig4, table2, fig5_6, fig_nt, fig_rcrs, fig_beta, fig_users, fig_height or custom
        tag: String,
    },
    /// Check a solution file.
    Validate { file: PathBuf },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Invalid(Vec<String>),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<NtnError>() {
            Some(NtnError::InvalidConfig(_) | NtnError::InvalidParam { .. }) => Failure::Config(e),
            _ => Failure::Other(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(errs)) => {
            eprintln!("invalid solution:");
            for e in errs {
                eprintln!("  {e}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            report(&e);
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            report(&e);
            ExitCode::from(1)
        }
    }
}

fn report(e: &anyhow::Error) {
    eprintln!("error: {e:#}");
    if let Some(NtnError::InvalidConfig(errs)) = e.downcast_ref::<NtnError>() {
        for v in errs {
            eprintln!("  {v}");
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| Failure::Config(e.into()))?,
        None => ExperimentConfig::default(),
    };
    if cli.full_scale {
        config.scenario = ScenarioConfig {
            seed: config.scenario.seed,
            data_bits: config.scenario.data_bits.clone(),
            ..ScenarioConfig::full()
        };
    }
    config.apply_env_seed().map_err(|e| Failure::Config(e.into()))?;
    if let Some(s) = cli.seed {
        config.override_seed(s);
    }
    if let Some(n) = cli.mc_samples {
        config.experiment.theta_samples = n;
        config.experiment.rate_samples = n;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate().map_err(|e| Failure::Config(e.into()))?;
    Ok(config)
}

fn emit(out: Option<&Path>, name: &str, json: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => {
            let mut stdout = io::stdout().lock();
            match stdout.write_all(json.as_bytes()) {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    if let Command::Validate { file } = &cli.command {
        let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        let sol: SolutionFile = match serde_json::from_str(&text) {
            Ok(s) => s,
            Err(e) => return Err(Failure::Invalid(vec![format!("{}: {e}", file.display())])),
        };
        let errs = experiments::validate_solution(&sol).map_err(anyhow::Error::from)?;
        if !errs.is_empty() {
            return Err(Failure::Invalid(errs));
        }
        println!("{}: valid", file.display());
        return Ok(());
    }
    let config = load_config(&cli)?;
    let seed = config.scenario.seed;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::GenScenario => {
            let inst = generate(&config.scenario).map_err(anyhow::Error::from)?;
            emit(out, "scenario.json", &to_json(&inst)?)?;
        }
        Command::EstimateTheta => {
            let inst = generate(&config.scenario).map_err(anyhow::Error::from)?;
            let theta = estimate_theta(
                &inst,
                &config.channel_params(),
                &config.system,
                config.experiment.theta_samples,
                seed,
            )
            .map_err(anyhow::Error::from)?;
            emit(out, "theta.json", &to_json(&theta)?)?;
        }
        Command::Solve => {
            let (res, sol) = experiments::solve(&config, seed).map_err(anyhow::Error::from)?;
            for b in &res.branches {
                println!(
                    "branch {:<14} N_T {:>6}  delta_t {:>10} s  T_total {:>10} s",
                    b.branch.label(),
                    b.n_t,
                    fmt_f64(b.delta_t),
                    fmt_f64(b.t_total)
                );
            }
            let w = &res.winner;
            println!(
                "winner {}  N_T {}  delta_t {} s  T_total {} s",
                w.branch.label(),
                w.n_t,
                fmt_f64(w.delta_t),
                fmt_f64(w.t_total)
            );
            if let Some(dir) = out {
                emit(Some(dir), "solution.json", &to_json(&sol)?)?;
            }
        }
        Command::Experiment { tag } => {
            let mut config = config.clone();
            config.experiment.tag = tag.parse::<ExperimentTag>().map_err(|e| Failure::Config(e.into()))?;
            let output = experiments::run(&config).map_err(anyhow::Error::from)?;
            let written = output.write(&config.output_dir).map_err(anyhow::Error::from)?;
            for p in written {
                println!("wrote {}", p.display());
            }
        }
        Command::Validate { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}
