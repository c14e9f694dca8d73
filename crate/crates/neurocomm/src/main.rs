use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neurocomm::exec::Pool;
use neurocomm::runner::{self, Experiment, Overrides};
use neurocomm::{ExperimentConfig, Result, RunKind, SweepAxis};
use neurocomm_core::modem::Scheme;

#[derive(Parser)]
#[command(name = "neurocomm", version, about = "Train and evaluate spiking remote-inference links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    regime: Option<RunKind>,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint and a training log.
    Train(Common),
    /// Write per-step accuracy and energy traces.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint from `train`; trains in-process when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate over a grid and aggregate over seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Option<SweepAxis>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Finite-difference gradient check on the tiny system.
    Gradcheck(Common),
    /// Write the synthetic dataset as event files and a manifest.
    SynthData(Common),
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    match s {
        "th" => Ok(Scheme::Th),
        "lth" => Ok(Scheme::Lth),
        _ => Err(format!("unknown scheme {s:?} (expected th or lth)")),
    }
}

fn experiment(c: &Common) -> Result<Experiment> {
    match &c.config {
        Some(p) => Experiment::load(p),
        None => Experiment::new(ExperimentConfig::default(), "."),
    }
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        seed: c.seed,
        run: c.regime,
        scheme: c.scheme,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let exp = experiment(&c)?;
            let a = runner::cmd_train(&exp, &overrides(&c), &c.out, &Pool::from_env()?)?;
            println!("final loss {:.6}", a.final_loss);
            println!("checkpoint {}", a.checkpoint.display());
            println!("log {}", a.log.display());
        }
        Command::Eval { common: c, checkpoint } => {
            let exp = experiment(&c)?;
            let traces = runner::cmd_eval(&exp, &overrides(&c), checkpoint.as_deref(), &c.out, &Pool::from_env()?)?;
            for t in traces {
                println!(
                    "{} {}: final accuracy {:.4}, energy {:.4e} -> {}",
                    t.meta.run,
                    t.meta.scheme,
                    t.trace.final_accuracy(),
                    t.trace.rows.last().map_or(0.0, |r| r.cumulative_energy),
                    t.csv.display()
                );
            }
        }
        Command::Sweep { common: c, axis, values } => {
            let exp = experiment(&c)?;
            let s = runner::cmd_sweep(&exp, &overrides(&c), axis, values.as_deref(), &c.out, &Pool::from_env()?)?;
            for r in &s.rows {
                let ttt = r.time_to_target.map_or("-".to_string(), |t| t.to_string());
                println!(
                    "{}={} {} {}: accuracy {:.4} over {} seeds, time to target {ttt}",
                    r.axis, r.value, r.regime, r.scheme, r.final_accuracy, r.seeds
                );
            }
            println!("summary {}", s.csv.display());
        }
        Command::Gradcheck(c) => {
            let exp = experiment(&c)?;
            let s = runner::cmd_gradcheck(&exp, &overrides(&c), &c.out)?;
            for case in &s.cases {
                println!(
                    "{} {} {:?}: max rel error {:.3e} ({})",
                    case.scheme,
                    case.regime,
                    case.horizon,
                    case.max_rel_error,
                    case.worst_group.as_deref().unwrap_or("-")
                );
            }
            println!("passed, max rel error {:.3e}", s.max_rel_error);
        }
        Command::SynthData(c) => {
            let exp = experiment(&c)?;
            let m = runner::cmd_synth_data(&exp, &overrides(&c), &c.out)?;
            println!("manifest {}", m.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
