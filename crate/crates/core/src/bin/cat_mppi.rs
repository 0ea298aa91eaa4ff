use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cat_mppi::mppi::Mode;
use cat_mppi::robot::load_robot_description;
use cat_mppi::runner::{run_campaign, run_trial, CampaignConfig, CampaignResults, TrialOptions};
use cat_mppi::scenario::{load_scenario, resolve_scenario};
use clap::{Parser, Subcommand};

/// MPPI and CaT-MPPI collision-avoidance benchmark.
#[derive(Parser)]
#[command(name = "cat-mppi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single closed-loop trial.
    Run {
        /// Bundled scenario number (1-6) or a scenario file.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "cat")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the per-cycle trace as JSON.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Override the episode duration (s).
        #[arg(long)]
        max_duration: Option<f64>,
    },
    /// Run a multi-seed campaign described by a TOML file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Results file (JSON lines); overrides the config's output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of seeds; overrides the config.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Parse-check scenario and robot description files.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Render stored campaign results as a comparison table.
    Table { results: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn is_robot_description(path: &Path) -> cat_mppi::Result<bool> {
    let text = std::fs::read_to_string(path).map_err(|e| cat_mppi::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value: toml::Table = toml::from_str(&text).map_err(|e| cat_mppi::Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(value.contains_key("joints"))
}

fn execute(command: Command) -> cat_mppi::Result<ExitCode> {
    match command {
        Command::Run {
            scenario,
            mode,
            seed,
            trace_out,
            max_duration,
        } => {
            let mut s = resolve_scenario(&scenario)?;
            if let Some(d) = max_duration {
                s.episode.max_duration = d;
                s.episode.validate()?;
            }
            let options = TrialOptions {
                record_trace: trace_out.is_some(),
                parallel_rollouts: None,
            };
            let mut result = run_trial(&s, mode, seed, &options)?;
            if let Some(path) = trace_out {
                let json = serde_json::to_string_pretty(&result.trace)
                    .map_err(|e| cat_mppi::Error::Serialization(e.to_string()))?;
                std::fs::write(&path, json).map_err(|e| cat_mppi::Error::io(&path, e))?;
            }
            result.trace = None;
            let json = serde_json::to_string(&result).map_err(|e| cat_mppi::Error::Serialization(e.to_string()))?;
            println!("{json}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { config, out, seeds } => {
            let mut c = CampaignConfig::load(&config)?;
            if let Some(out) = out {
                c.output = Some(out);
            }
            if let Some(n) = seeds {
                c.seeds = n;
            }
            let results = run_campaign(&c)?;
            print!("{}", cat_mppi::runner::render_table(&results.aggregate()));
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { files } => {
            let mut failed = false;
            for f in files {
                let outcome = is_robot_description(&f).and_then(|robot| {
                    if robot {
                        load_robot_description(&f).map(|m| format!("robot {:?}, {} joints", m.name, m.dof()))
                    } else {
                        load_scenario(&f).map(|s| format!("scenario {:?}, {} collision pairs", s.name(), s.pairs.len()))
                    }
                });
                match outcome {
                    Ok(summary) => println!("ok    {}: {summary}", f.display()),
                    Err(e) => {
                        failed = true;
                        println!("FAIL  {}: {e}", f.display());
                    }
                }
            }
            Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Table { results } => {
            let r = CampaignResults::read_jsonl(&results)?;
            print!("{}", cat_mppi::runner::render_table(&r.aggregate()));
            Ok(ExitCode::SUCCESS)
        }
    }
}
