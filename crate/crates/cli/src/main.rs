use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use spatinla_cli::config::{RunConfig, Workflow};
use spatinla_cli::lgcp::{prepare, LgcpData, LgcpOutputs};
use spatinla_cli::{bym, lgcp, oracle_report, output, synth};

#[derive(Parser)]
#[command(name = "spatinla", version, about = "Laplace-approximation fits of spatial point patterns and areal counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the study-window mesh and write mesh.txt.
    Mesh,
    /// Fit every configured point-pattern model.
    FitLgcp,
    /// Fit the BYM model in every configured date window.
    FitBym,
    /// Fit the configured workflow and write only DIC and CPO outputs.
    Criticize,
    /// Write synthetic data from the [simulate] section.
    Simulate,
    /// Regenerate brute-force reference values for the bundled toys.
    #[command(hide = true)]
    Oracle,
}

fn load(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let path = cli.config.as_ref().context("--config is required")?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.clone());
    Ok((cfg, out))
}

fn run(cli: &Cli) -> Result<()> {
    match cli.command {
        Command::Oracle => {
            let text = oracle_report()?;
            match &cli.out {
                Some(dir) => output::write_text(&dir.join("oracle.txt"), &text)?,
                None => print!("{text}"),
            }
        }
        Command::Mesh => {
            let (cfg, out) = load(cli)?;
            let data = LgcpData::load(&cfg)?;
            let setup = prepare(&data, cfg.mesh.params(), &Default::default())?;
            let mut w = output::create(&out.join("mesh.txt"))?;
            setup.mesh.write_text(&mut w)?;
            std::io::Write::flush(&mut w)?;
            println!(
                "{} vertices ({} interior), {} triangles",
                setup.mesh.n_vertices(),
                setup.mesh.n_interior(),
                setup.mesh.triangles().len()
            );
        }
        Command::FitLgcp => {
            let (cfg, out) = load(cli)?;
            let fits = lgcp::run_lgcp(&cfg, &out, LgcpOutputs::Full)?;
            for f in &fits {
                println!("{}: DIC {} sum_log_cpo {}", f.spec.name, f.criticism.dic, f.criticism.sum_log_cpo);
            }
        }
        Command::FitBym => {
            let (cfg, out) = load(cli)?;
            for f in bym::run_bym(&cfg, &out, false)? {
                println!("{}: DIC {} variance_fraction {}", f.name, f.criticism.dic, f.variance_fraction());
            }
        }
        Command::Criticize => {
            let (cfg, out) = load(cli)?;
            match cfg.workflow {
                Workflow::Lgcp => {
                    lgcp::run_lgcp(&cfg, &out, LgcpOutputs::CriticismOnly)?;
                }
                Workflow::Bym => {
                    bym::run_bym(&cfg, &out, true)?;
                }
                Workflow::Simulate => anyhow::bail!("criticize needs an lgcp or bym configuration"),
            }
        }
        Command::Simulate => {
            let (cfg, out) = load(cli)?;
            synth::run_simulate(&cfg, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
