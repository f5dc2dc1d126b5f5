//! Command-line front end. Every subcommand resolves one configuration,
//! echoes it, runs, and writes `report.json` plus `meta.json` under the
//! output directory.
//!
//! Exit codes: 0 success, 1 a verification did not pass, 2 any error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{ExperimentConfig, Params, Preset, Resolved, SampleSizes};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "advgame", version, about = "Adversarial game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default `out/<command>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for every random stream, overriding the file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Natural risk of a classifier.
    Risk,
    /// Adversarial score against the best-response attack.
    Score,
    /// Best-response attack and the defender's reply.
    BestResponse,
    /// Best-response dynamics never reach a pure equilibrium.
    NoNash,
    /// Mixing with the region flip strictly lowers the worst-case score.
    RandGap,
    /// Original and transported class densities.
    Fig1,
    /// Train one network, adversarially by default.
    Train,
    /// Boosted adversarial training of a mixture.
    Bat,
    /// Natural, adaptive PGD and thresholded adaptive C&W accuracy.
    Evaluate,
    /// Validation grid over the mixture weight of a 2-model mixture.
    AlphaGrid,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Risk => "risk",
            Command::Score => "score",
            Command::BestResponse => "best-response",
            Command::NoNash => "no-nash",
            Command::RandGap => "rand-gap",
            Command::Fig1 => "fig1",
            Command::Train => "train",
            Command::Bat => "bat",
            Command::Evaluate => "evaluate",
            Command::AlphaGrid => "alpha-grid",
        }
    }
}

/// What a runner hands back: `pass` is set by the verifying commands.
pub(crate) struct Outcome {
    pub pass: Option<bool>,
    pub result: serde_json::Value,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    config: &'a Resolved,
    config_hash: String,
    seed: u64,
    pass: Option<bool>,
    result: serde_json::Value,
}

#[derive(Serialize)]
struct Meta {
    started_unix: f64,
    elapsed_secs: f64,
    version: &'static str,
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let name = cli.command.name();
    let file = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let cfg = file.resolve(name, cli.seed, cli.preset)?;
    println!("{}", serde_json::to_string_pretty(&cfg)?);

    let out = cli.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| Path::new("out").join(name));
    std::fs::create_dir_all(&out)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();

    let outcome = match cli.command {
        Command::Risk => commands::risk(&cfg)?,
        Command::Score => commands::score(&cfg)?,
        Command::BestResponse => commands::best_response(&cfg, &out)?,
        Command::NoNash => commands::no_nash(&cfg, &out)?,
        Command::RandGap => commands::rand_gap(&cfg)?,
        Command::Fig1 => commands::fig1(&cfg, &out)?,
        Command::Train => commands::train(&cfg, &out)?,
        Command::Bat => commands::bat(&cfg, &out)?,
        Command::Evaluate => commands::evaluate(&cfg, &out)?,
        Command::AlphaGrid => commands::alpha_grid(&cfg, &out)?,
    };

    let report = Report { command: name, config: &cfg, config_hash: cfg.hash(), seed: cfg.seed, pass: outcome.pass, result: outcome.result };
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    let meta = Meta { started_unix: started, elapsed_secs: clock.elapsed().as_secs_f64(), version: env!("CARGO_PKG_VERSION") };
    std::fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

    let pass = outcome.pass.unwrap_or(true);
    match outcome.pass {
        Some(p) => eprintln!("{name}: {} ({})", if p { "pass" } else { "FAIL" }, out.join("report.json").display()),
        None => eprintln!("{name}: done ({})", out.join("report.json").display()),
    }
    Ok(pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn parser_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["advgame", "bogus"]), 2);
        assert_eq!(main_with_args(["advgame", "risk", "--seed", "x"]), 2);
        assert_eq!(main_with_args(["advgame", "--help"]), 0);
    }

    #[test]
    fn names_round_trip_through_parser() {
        for c in ["risk", "score", "best-response", "no-nash", "rand-gap", "fig1", "train", "bat", "evaluate", "alpha-grid"] {
            let cli = Cli::try_parse_from(["advgame", c]).unwrap();
            assert_eq!(cli.command.name(), c);
        }
    }
}
