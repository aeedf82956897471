use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mmfl::experiment::metrics::{final_means, summary_to_csv};
use mmfl::experiment::output::{output_dir_from_env, resolve_output, write_diagnostics, write_metrics};
use mmfl::experiment::{aggregate_metrics, parse_records_csv, run, Scheme, SimConfig};
use mmfl::{Error, Result};

#[derive(Parser)]
#[command(name = "mmfl", version, about = "Multi-model wireless federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write the metrics CSV.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// multimodel, ideal, seqnmodel or all
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a config file without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Mean and 90% confidence interval of best-so-far accuracy.
    Summarize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<SimConfig> {
    match path {
        Some(p) => SimConfig::load(p),
        None => Ok(SimConfig::default()),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            scheme,
            seed,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = scheme {
                cfg.scheme = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let env_dir = output_dir_from_env();
            let target = resolve_output(&out.unwrap_or_else(|| PathBuf::from(&cfg.output)), env_dir.as_deref());
            let runs = run(&cfg)?;
            write_metrics(&target, &runs)?;
            if let Some(dir) = &cfg.diagnostics_dir {
                write_diagnostics(&resolve_output(Path::new(dir), env_dir.as_deref()), &runs)?;
            }
            let records: Vec<_> = runs.iter().flat_map(|(_, o)| o.records.iter().cloned()).collect();
            for (scheme, acc) in final_means(&aggregate_metrics(&records)) {
                println!("{scheme}: final mean best accuracy {acc:.4}");
            }
            println!("wrote {}", target.display());
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = SimConfig::load(&config)?;
            println!(
                "{}: ok (K = {}, M = {}, N = {}, T = {}, {} realizations)",
                config.display(),
                cfg.devices,
                cfg.models,
                cfg.antennas,
                cfg.rounds,
                cfg.realizations
            );
            Ok(())
        }
        Command::Summarize { input, out } => {
            let text =
                std::fs::read_to_string(&input).map_err(|e| Error::Io {
                    context: format!("reading {}", input.display()),
                    source: e,
                })?;
            let rows = aggregate_metrics(&parse_records_csv(&text)?);
            let csv = summary_to_csv(&rows);
            match out {
                Some(path) => {
                    let path = resolve_output(&path, output_dir_from_env().as_deref());
                    std::fs::write(&path, csv).map_err(|e| Error::Io {
                        context: format!("writing {}", path.display()),
                        source: e,
                    })?;
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
