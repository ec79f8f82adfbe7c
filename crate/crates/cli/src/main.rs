//! `nnrl`: seeded experiment runner.
//!
//! Exit status: 0 when every verdict passes, 1 when some verdict fails, 2 on invalid input.

mod manifest;
mod record;
mod run;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use manifest::Manifest;
use record::{summary_table, ResultRecord};

#[derive(Parser)]
#[command(name = "nnrl", version, about = "Seeded recovery, RL and polynomial-DP experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one manifest and print its record as a JSON line.
    Run {
        manifest: PathBuf,
        /// Override the manifest seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory receiving `record.json`; takes precedence over the manifest's output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a manifest and print its canonical form.
    Validate { manifest: PathBuf },
    /// Run a grid of manifests.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "NNRL_WORKERS", default_value_t = 1)]
        workers: usize,
    },
    /// Summarize a records file.
    Report { records: PathBuf },
}

enum Failure {
    Invalid(anyhow::Error),
    Verdicts,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

impl From<manifest::FieldError> for Failure {
    fn from(e: manifest::FieldError) -> Self {
        Failure::Invalid(e.into())
    }
}

fn load_manifest(path: &Path) -> anyhow::Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Manifest::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn verdict(all_pass: bool) -> Result<(), Failure> {
    if all_pass {
        Ok(())
    } else {
        Err(Failure::Verdicts)
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { manifest, seed, out } => {
            let mut m = load_manifest(&manifest)?;
            if let Some(s) = seed {
                m.seed = s;
            }
            let resolved = m.resolve()?;
            let record = run::run(&m, &resolved);
            let line = record.to_line();
            let target = match (&out, &m.output) {
                (Some(dir), _) => {
                    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                    Some(dir.join("record.json"))
                }
                (None, Some(path)) => Some(path.clone()),
                (None, None) => None,
            };
            if let Some(path) = target {
                sweep::write_atomic(&path, &(line.clone() + "\n"))?;
            }
            println!("{line}");
            verdict(record.passed())
        }
        Command::Validate { manifest } => {
            let m = load_manifest(&manifest)?;
            m.resolve()?;
            print!("{}", m.to_toml());
            Ok(())
        }
        Command::Sweep { spec, out, workers } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec = sweep::SweepSpec::parse(&text).with_context(|| format!("parsing {}", spec.display()))?;
            let outcome = sweep::sweep(&spec, &out, workers)?;
            print!("{}", outcome.summary);
            verdict(outcome.records.iter().all(ResultRecord::passed))
        }
        Command::Report { records } => {
            let text = fs::read_to_string(&records).with_context(|| format!("reading {}", records.display()))?;
            let parsed = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| serde_json::from_str::<ResultRecord>(l).with_context(|| format!("line {}", i + 1)))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let mut groups: Vec<(String, Vec<&ResultRecord>)> = Vec::new();
            for r in &parsed {
                let mut key = r.manifest.clone();
                key.seed = 0;
                key.output = None;
                let label = format!(
                    "{}:{}",
                    r.manifest.kind.name(),
                    serde_json::to_string(&(&key.params, &key.budget)).map_err(anyhow::Error::from)?
                );
                match groups.iter_mut().find(|(l, _)| *l == label) {
                    Some((_, g)) => g.push(r),
                    None => groups.push((label, vec![r])),
                }
            }
            print!("{}", summary_table(&groups));
            verdict(parsed.iter().all(ResultRecord::passed))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdicts) => ExitCode::from(1),
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
