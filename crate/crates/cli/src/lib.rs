//! The `spinesim` command line: argument and config handling, the
//! subcommand pipelines, output rendering and the self-test battery.

pub mod commands;
pub mod config;
pub mod output;
pub mod selftest;

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};

use crate::config::{Flags, RunConfig};
use crate::output::{render, Outcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ASSERT: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "spinesim", version, about = "Branching process with recombination: simulation and spine diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Forward simulation: survival, population size and total length
    Simulate(Flags),
    /// Discrete spine against its continuous-time limit
    Spine(Flags),
    /// Both sides of the many-to-few identity
    #[command(name = "verify-m2f")]
    VerifyM2f(Flags),
    /// Brownian coalescent point process polynomials
    #[command(name = "cpp-poly")]
    CppPoly(Flags),
    /// Entrance law and its Poisson coupling
    Entrance(Flags),
    /// Populations conditioned on survival
    Yaglom(Flags),
    /// Chromosomic against genealogical distance along the k-spine
    #[command(name = "distance-agree")]
    DistanceAgree(Flags),
    /// Run the acceptance battery at reduced scale
    Selftest(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Spine(_) => "spine",
            Command::VerifyM2f(_) => "verify-m2f",
            Command::CppPoly(_) => "cpp-poly",
            Command::Entrance(_) => "entrance",
            Command::Yaglom(_) => "yaglom",
            Command::DistanceAgree(_) => "distance-agree",
            Command::Selftest(_) => "selftest",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Simulate(f)
            | Command::Spine(f)
            | Command::VerifyM2f(f)
            | Command::CppPoly(f)
            | Command::Entrance(f)
            | Command::Yaglom(f)
            | Command::DistanceAgree(f)
            | Command::Selftest(f) => f,
        }
    }
}

/// Runs one pipeline without touching the thread pool or the output.
pub fn execute(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    match cfg.subcommand.as_str() {
        "simulate" => commands::simulate(cfg),
        "spine" => commands::spine(cfg),
        "verify-m2f" => commands::verify_m2f(cfg),
        "cpp-poly" => commands::cpp_poly(cfg),
        "entrance" => commands::entrance(cfg),
        "yaglom" => commands::yaglom(cfg),
        "distance-agree" => commands::distance_agree(cfg),
        "selftest" => selftest::run_battery(cfg.seed, selftest::Scale::Reduced),
        other => anyhow::bail!("unknown subcommand {other}"),
    }
}

/// Runs `cfg` on a pool of `cfg.threads` workers and renders the result.
pub fn run_config(cfg: &RunConfig) -> anyhow::Result<(String, Outcome)> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let outcome = pool.install(|| execute(cfg))?;
    let text = if cfg.subcommand == "selftest" {
        outcome.checks.iter().map(|c| c.line() + "\n").collect()
    } else {
        render(cfg, &outcome.rows)
    };
    Ok((text, outcome))
}

fn emit(cfg: &RunConfig, text: &str) -> anyhow::Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cfg = match RunConfig::resolve(cli.command.name(), cli.command.flags()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    let (text, outcome) = match run_config(&cfg) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    if let Err(e) = emit(&cfg, &text) {
        eprintln!("error: {e:#}");
        return EXIT_USAGE;
    }
    let strict = cfg.assert_mode || cfg.subcommand == "selftest";
    if cfg.subcommand != "selftest" && cfg.assert_mode {
        for c in &outcome.checks {
            eprintln!("{}", c.line());
        }
    }
    if strict && !outcome.passed() {
        EXIT_ASSERT
    } else {
        EXIT_OK
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["spinesim", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["spinesim", "simulate", "--N", "many"]), EXIT_USAGE);
        assert_eq!(run(["spinesim", "cpp-poly", "--phi", "wiggle"]), EXIT_USAGE);
        assert_eq!(run(["spinesim", "simulate", "--reps", "0"]), EXIT_USAGE);
    }

    #[test]
    fn subcommand_names_parse() {
        for name in ["simulate", "spine", "verify-m2f", "cpp-poly", "entrance", "yaglom", "distance-agree", "selftest"] {
            let cli = Cli::try_parse_from(["spinesim", name]).unwrap();
            assert_eq!(cli.command.name(), name);
        }
    }
}
