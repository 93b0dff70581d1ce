use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use stochinv_cli::commands::{self, Family};
use stochinv_cli::ExperimentConfig;

#[derive(Parser)]
#[command(name = "stochinv", version, about = "Stochastic inversion of a channelized elastic field")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed of this stage's random stream: prior for `generate`, noise for
    /// `synth-obs`, chains for `invert`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of chains, with starts spread over the configured range.
    #[arg(long, global = true)]
    chains: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the prior snapshot ensemble.
    Generate,
    /// Fit the reduced model(s) and chaos expansions.
    Fit,
    /// Synthesize boundary observations from the held-out truth.
    #[command(name = "synth-obs")]
    SynthObs,
    /// Sample the posterior and write field moments and tables.
    Invert,
    /// Aggregate diagnostics, eigenvalue decay and pre-image fidelity.
    Report,
    /// Print the effective configuration as TOML.
    Config,
}

impl Command {
    fn stage(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Fit => "fit",
            Command::SynthObs => "synth-obs",
            Command::Invert => "invert",
            Command::Report => "report",
            Command::Config => "config",
        }
    }
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(n) = cli.chains {
        cfg.set_chain_count(n)?;
    }
    if let Some(seed) = cli.seed {
        match cli.command {
            Command::Generate => cfg.prior.seed = seed,
            Command::SynthObs => cfg.observation.seed = seed,
            Command::Invert => cfg.sampler.seed = seed,
            _ => eprintln!("note: --seed has no effect on `{}`", cli.command.stage()),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    match cli.command {
        Command::Config => print!("{}", cfg.to_toml()),
        Command::Generate => {
            let path = commands::generate(&cfg)?;
            println!("wrote {} snapshots to {}", cfg.prior.n_snapshots, path.display());
        }
        Command::Fit => {
            for s in commands::fit(&cfg)? {
                println!(
                    "{}: kernel {}, r = {}, energy fraction {:.3}",
                    s.family.name(),
                    s.kernel,
                    s.r,
                    s.energy_fraction
                );
                if !s.monotonicity_violations.is_empty() {
                    let comps: Vec<String> = s.monotonicity_violations.iter().map(|c| (c + 1).to_string()).collect();
                    eprintln!(
                        "warning: {} chaos expansion is not monotone for components {}",
                        s.family.name(),
                        comps.join(", ")
                    );
                }
            }
        }
        Command::SynthObs => {
            let s = commands::synth_obs(&cfg)?;
            println!(
                "{} observed dofs, noise std {:e}, truth-to-projection distance {:.4}",
                s.n_observed_dofs, s.noise_std, s.projection_error
            );
        }
        Command::Invert => {
            for r in commands::invert(&cfg)? {
                println!(
                    "{}: acceptance {:.4}, first agreement {}, posterior-mean distance {}, prior-mean distance {:.4}",
                    r.label,
                    r.mean_acceptance(),
                    r.first_agreement().map_or("none".into(), |k| k.to_string()),
                    r.posterior_distance.map_or("n/a".into(), |d| format!("{d:.4}")),
                    r.prior_distance
                );
                for f in &r.failures {
                    eprintln!("warning: {}: {f}", r.label);
                }
            }
        }
        Command::Report => {
            let s = commands::report(&cfg)?;
            for (label, d) in &s.runs {
                let rhat = d.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                println!("{label}: max rhat {rhat:.4}");
            }
            for (d, r, e) in &s.fidelity {
                println!("degree {d}: r = {r}, mean relative pre-image error {e:.4}");
            }
            for (family, v) in &s.monotonicity {
                if !v.is_empty() && *family == Family::Kpca {
                    eprintln!("warning: {} non-monotone chaos components", v.len());
                }
            }
            println!("tables written to {}", cfg.out_dir.join("report").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {} stage failed: {e:#}", cli.command.stage());
            ExitCode::FAILURE
        }
    }
}
