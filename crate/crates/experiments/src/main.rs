use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use creditlab_experiments::runner::{default_root, OUTPUT_ROOT_VAR};
use creditlab_experiments::table::fmt_num;
use creditlab_experiments::{emit_report, resolve_output_dir, run_experiment, ExperimentConfig, ExperimentKind, Result, RunOutcome};

#[derive(Parser)]
#[command(name = "creditlab", version, about = "Run creditlab experiments and write their artifacts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config.
    Run {
        config: PathBuf,
        /// Exit with status 1 if any acceptance check fails.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all six bundled default experiments and write a combined summary.
    Suite {
        #[arg(long)]
        check: bool,
        /// Root directory; defaults to the value of the output-root variable.
        #[arg(long, env = OUTPUT_ROOT_VAR)]
        out: Option<PathBuf>,
    },
    /// Verify an artifact directory and write its summary.md.
    Report { dir: PathBuf },
}

fn print_outcome(kind: ExperimentKind, outcome: &RunOutcome) {
    println!("{kind}: wrote {}", outcome.dir.display());
    for c in &outcome.checks {
        println!("  {} {} = {} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, fmt_num(c.value), c.threshold);
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, check, replicates, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let dir = resolve_output_dir(&cfg, out.as_deref());
            let outcome = run_experiment(&cfg, &dir)?;
            print_outcome(cfg.experiment, &outcome);
            Ok(!check || outcome.passed())
        }
        Command::Suite { check, out } => {
            let root = out.unwrap_or_else(default_root);
            let mut all = true;
            for kind in ExperimentKind::ALL {
                let cfg = kind.default_config();
                let outcome = run_experiment(&cfg, &root.join(kind.name()))?;
                print_outcome(kind, &outcome);
                all &= outcome.passed();
            }
            println!("summary: {}", emit_report(&root)?.display());
            Ok(!check || all)
        }
        Command::Report { dir } => {
            println!("summary: {}", emit_report(&dir)?.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
