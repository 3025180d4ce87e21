use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adedgedrop::harness::{commands, ExperimentSpec};
use adedgedrop::Result;

/// Adversarial edge dropping for GCN node classification.
///
/// Any config key can be given after the subcommand as `--key value`,
/// overriding the config file.
#[derive(Parser, Debug)]
#[command(name = "adedgedrop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides, e.g. `--mu 0.7 --epochs 300`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train ADEdgeDrop and export the learned graph.
    Train(Common),
    /// Train the plain GCN or DropEdge baseline.
    Baseline(Common),
    /// Compare accuracy drops of ADEdgeDrop and the plain GCN under a random attack.
    AttackEval(Common),
    /// Retrain plain GCNs on the learned graph and a matched random graph.
    Retrain(Common),
    /// Write a synthetic stochastic block model dataset.
    GenSbm(Common),
    /// Aggregate the metrics streams under a run directory.
    Report(Common),
    /// Train over a grid of thresholds and tabulate the results.
    Sweep(Common),
}

fn spec_from(common: &Common) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    if let Some(path) = &common.config {
        spec.apply_file(path)?;
    }
    spec.apply_overrides(&common.overrides)?;
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let spec = spec_from(&c)?;
            for r in commands::train_command(&spec)? {
                println!(
                    "seed {}: val {:.4} test {:.4} deleted {:.2}%",
                    r.seed, r.val_acc, r.test_acc, r.learned.deleted_pct
                );
            }
        }
        Command::Baseline(c) => {
            let spec = spec_from(&c)?;
            for (seed, r) in spec.seeds().into_iter().zip(commands::baseline_command(&spec)?) {
                println!("seed {seed}: val {:.4} test {:.4}", r.val_acc, r.test_acc);
            }
        }
        Command::AttackEval(c) => {
            let spec = spec_from(&c)?;
            for r in commands::attack_eval_command(&spec)? {
                println!(
                    "seed {}: adedgedrop drop {:.4}, plain drop {:.4}",
                    r.seed,
                    r.method_drop(),
                    r.plain_drop()
                );
            }
        }
        Command::Retrain(c) => {
            let spec = spec_from(&c)?;
            for (seed, r) in spec.seeds().into_iter().zip(commands::retrain_command(&spec)?) {
                let random = r.random.map_or("-".to_string(), |a| format!("{:.4}", a.test_acc));
                println!(
                    "seed {seed}: learned {:.4} random {random} deleted {:.2}%",
                    r.learned.test_acc, r.deleted_pct
                );
            }
        }
        Command::GenSbm(c) => {
            let spec = spec_from(&c)?;
            commands::gen_sbm_command(&spec)?;
            println!("wrote {}", spec.out.display());
        }
        Command::Report(c) => {
            let spec = spec_from(&c)?;
            let out = commands::report_command(&spec)?;
            println!("aggregated {} runs", out.runs);
        }
        Command::Sweep(c) => {
            let spec = spec_from(&c)?;
            let out = commands::sweep_command(&spec)?;
            println!("aggregated {} runs", out.runs);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
