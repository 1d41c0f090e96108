use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use peglab::harness::run::{format_trace, write_trace_csv};
use peglab::harness::{self, Controller, Method, Preset, RunConfig};
use peglab::{Error, Result};

#[derive(Parser)]
#[command(name = "peglab", version, about = "Peg-in-hole insertion with parameterized manipulation primitives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one instance per configured seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train this seed only, replacing the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory (defaults to `output_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint, or every seed of a run directory.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "run", required_unless_present = "run")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Seed of the trial-seed stream.
        #[arg(long)]
        seed: Option<u64>,
        /// Report path (`.json`, a `.csv` is written beside it).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two or more run directories.
    Compare {
        #[arg(required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a single evaluation episode step by step.
    Rollout {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the trace as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a complete default config.
    Config {
        #[arg(long, value_parser = parse_preset)]
        preset: Option<Preset>,
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
    },
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| {
        let names: Vec<&str> = harness::PRESETS.iter().map(|p| p.name).collect();
        format!("unknown preset `{s}` (expected one of {})", names.join(", "))
    })
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown method `{s}` (expected hybrid, discrete, ee-pose or fix-seq)"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let m = harness::train_run(&cfg, &out)?;
            println!("run {} ({} on {}, config {})", out.display(), m.method, m.task, &m.config_hash[..12]);
            for s in &m.seeds {
                match m.method {
                    Method::FixSeq => println!("  seed {}: {}", s.seed, s.artifact),
                    _ => println!(
                        "  seed {}: {} updates, {} sim steps, steps to 60%: {}",
                        s.seed,
                        s.updates,
                        s.cum_sim_steps,
                        s.steps_to_60.map_or("never".into(), |v| v.to_string())
                    ),
                }
            }
        }
        Command::Eval {
            config,
            checkpoint,
            run,
            trials,
            seed,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let trials = trials.unwrap_or(cfg.eval.trials);
            let seed = seed.unwrap_or(cfg.eval.seed);
            let reports = match (checkpoint, run) {
                (Some(ck), _) => {
                    let c = Controller::load(&cfg, &ck)?;
                    let r = harness::evaluate(&cfg, &c, trials, seed, cfg.eval.workers, &ck.display().to_string())?;
                    let path = out.unwrap_or_else(|| ck.with_file_name("eval.json"));
                    r.write(&path)?;
                    println!("wrote {}", path.display());
                    vec![r]
                }
                (None, Some(dir)) => {
                    if out.is_some() {
                        return Err(Error::InvalidArgument("--out applies to --checkpoint; run reports go to seed_<s>/eval.json".into()));
                    }
                    harness::evaluate_run(&cfg, &dir, trials, seed)?
                }
                (None, None) => unreachable!("clap requires one of --checkpoint/--run"),
            };
            for r in reports {
                println!(
                    "{}: success {}/{} ({:.2}), time {:.2} ± {:.2} s",
                    r.source, r.successes, r.trials, r.success_rate, r.mean_time_s, r.std_time_s
                );
            }
        }
        Command::Compare { runs, out } => {
            let data = runs.iter().map(|r| harness::load_run(r)).collect::<Result<Vec<_>>>()?;
            let c = harness::compare(&data)?;
            c.write(&out)?;
            print!("{}", c.table());
        }
        Command::Rollout {
            config,
            checkpoint,
            seed,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let c = Controller::load(&cfg, &checkpoint)?;
            let (record, trace) = harness::run_episode(&cfg, &c, seed)?;
            print!("{}", format_trace(&trace));
            println!(
                "{} after {} steps, {:.3} s",
                if record.success { "success" } else { "no success" },
                record.steps,
                record.execution_time_s
            );
            if let Some(p) = out {
                write_trace_csv(&p, &cfg.config_hash(), &trace)?;
            }
        }
        Command::Config { preset, method } => {
            let mut cfg = RunConfig::default();
            if let Some(p) = preset {
                cfg.task.preset = p;
            }
            if let Some(m) = method {
                cfg.method = m;
            }
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig { .. } | Error::Parse { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
