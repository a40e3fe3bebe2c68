mod analytic;
mod config;
mod error;
mod fit;
mod output;
mod relax;
mod sim;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::error::CliError;
use crate::output::Output;

/// Er3+:CaWO4 spin-bath decoherence, EPR models and fit kernels.
#[derive(Parser, Debug)]
#[command(name = "ercce", version, about)]
struct Cli {
    /// TOML (or previously emitted JSON) configuration; explicit flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory receiving the JSON report and CSV tables (created if missing)
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads for the parallel kernels [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// CCE Hahn-echo coherence of the central Er spin in a 183W bath
    Cce(sim::CceArgs),
    /// Generate and export one bath configuration
    Bathgen(sim::BathgenArgs),
    /// Two-pulse ESEEM trace from nearby 183W and its bandwidth-filtered spectrum
    Eseem(sim::EseemArgs),
    /// Stretched-exponential fit of an echo decay CSV
    Fit(fit::FitArgs),
    /// Stark-broadened linewidth versus field angle, or fit of measured linewidths
    Stark(analytic::StarkArgs),
    /// Instantaneous-diffusion coherence time
    Id(analytic::IdArgs),
    /// Reflection coefficient of a resonator coupled to the spin ensemble
    Reflect(analytic::ReflectArgs),
    /// Ensemble coupling from Er density, or density from a measured coupling
    Gens(analytic::GensArgs),
    /// Simulated T1 versus pulse amplitude through a resonator
    #[command(alias = "t1")]
    T1sim(relax::T1simArgs),
    /// Direct-phonon T1 versus temperature, or fit of T1(0)
    T1temp(analytic::T1tempArgs),
    /// T1 anisotropy A + B sin(4 phi + phi1), or fit of its parameters
    Anisotropy(analytic::AnisotropyArgs),
}

fn run(cli: Cli, matches: &ArgMatches) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::User(format!("--threads: {e}")))?;
    }
    let file = cli.config.as_deref().map(config::load).transpose()?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let out = Output::new(name, cli.out_dir.clone());
    let file = file.as_ref();
    match cli.command {
        Command::Cce(a) => sim::cce(config::resolve(a, sub, file, name)?, &out),
        Command::Bathgen(a) => sim::bathgen(config::resolve(a, sub, file, name)?, &out),
        Command::Eseem(a) => sim::eseem(config::resolve(a, sub, file, name)?, &out),
        Command::Fit(a) => fit::fit(config::resolve(a, sub, file, name)?, &out),
        Command::Stark(a) => analytic::stark(config::resolve(a, sub, file, name)?, &out),
        Command::Id(a) => analytic::id(config::resolve(a, sub, file, name)?, &out),
        Command::Reflect(a) => analytic::reflect(config::resolve(a, sub, file, name)?, &out),
        Command::Gens(a) => analytic::gens(config::resolve(a, sub, file, name)?, &out),
        Command::T1sim(a) => relax::t1sim(config::resolve(a, sub, file, name)?, &out),
        Command::T1temp(a) => analytic::t1temp(config::resolve(a, sub, file, name)?, &out),
        Command::Anisotropy(a) => analytic::anisotropy(config::resolve(a, sub, file, name)?, &out),
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
