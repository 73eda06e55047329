use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use spinesim::functional::TestFunctional;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

/// Deliberate corruptions used to check that the verification fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Mutant {
    /// Drop the `1/d_u!` factors from `Δ_k`.
    DropDegreeFactorial,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// Chromosome length R
    #[arg(long = "R")]
    pub r: Option<f64>,
    /// Population scale N
    #[arg(long = "N")]
    pub n: Option<u32>,
    /// Number of sampled individuals or spines
    #[arg(long)]
    pub k: Option<usize>,
    /// Time, in units of N generations
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Largest generation size before a run is abandoned
    #[arg(long = "node-cap")]
    pub node_cap: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Test functional: const, dist_indicator(a) or mark_power(p,cap)
    #[arg(long)]
    pub phi: Option<String>,
    /// Fail with exit code 2 when a check does not pass
    #[arg(long)]
    pub assert: bool,
    /// JSON file of defaults; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, hide = true)]
    pub mutant: Option<Mutant>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(rename = "R")]
    r: Option<f64>,
    #[serde(rename = "N")]
    n: Option<u32>,
    k: Option<usize>,
    t: Option<f64>,
    reps: Option<u64>,
    seed: Option<u64>,
    threads: Option<usize>,
    node_cap: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
    phi: Option<String>,
    #[serde(rename = "assert")]
    assert_mode: Option<bool>,
}

fn read_file(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(skip)]
    pub r_given: bool,
    #[serde(rename = "N")]
    pub n: u32,
    pub k: usize,
    pub t: f64,
    pub reps: u64,
    pub seed: u64,
    pub node_cap: usize,
    pub format: Format,
    pub phi: TestFunctional,
    #[serde(rename = "assert")]
    pub assert_mode: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutant: Option<Mutant>,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 1;

impl RunConfig {
    pub fn resolve(subcommand: &str, flags: &Flags) -> anyhow::Result<Self> {
        let file = match &flags.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        let phi_text = flags.phi.clone().or(file.phi).unwrap_or_else(|| "const".into());
        let phi: TestFunctional = phi_text.parse().with_context(|| "option phi")?;
        let r = flags.r.or(file.r);
        let cfg = RunConfig {
            subcommand: subcommand.to_string(),
            r: r.unwrap_or(10.0),
            r_given: r.is_some(),
            n: flags.n.or(file.n).unwrap_or(100),
            k: flags.k.or(file.k).unwrap_or(2),
            t: flags.t.or(file.t).unwrap_or(1.0),
            reps: flags.reps.or(file.reps).unwrap_or(10_000),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            node_cap: flags.node_cap.or(file.node_cap).unwrap_or(spinesim::branching::DEFAULT_NODE_CAP),
            format: flags.format.or(file.format).unwrap_or(Format::Csv),
            phi,
            assert_mode: flags.assert || file.assert_mode.unwrap_or(false),
            mutant: flags.mutant,
            threads: flags.threads.or(file.threads),
            out: flags.out.clone().or(file.out),
        };
        if !cfg.r.is_finite() || cfg.r < 0.0 {
            bail!("option R must be a finite number >= 0, got {}", cfg.r);
        }
        if !(cfg.t > 0.0) || !cfg.t.is_finite() {
            bail!("option t must be > 0, got {}", cfg.t);
        }
        if cfg.n == 0 {
            bail!("option N must be >= 1");
        }
        if cfg.reps == 0 {
            bail!("option reps must be >= 1");
        }
        if cfg.threads == Some(0) {
            bail!("option threads must be >= 1");
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = serde_json::from_str::<FileConfig>(r#"{"R": 2, "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("spinesim-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"R": 3.5, "N": 40, "seed": 9}"#).unwrap();
        let flags = Flags { n: Some(50), config: Some(path), ..Default::default() };
        let cfg = RunConfig::resolve("simulate", &flags).unwrap();
        assert_eq!((cfg.r, cfg.n, cfg.seed), (3.5, 50, 9));
        assert!(cfg.r_given);
    }
}
