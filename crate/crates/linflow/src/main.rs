use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};
use linflow::config::{parse_assignment, RunConfig};
use linflow::{commands, AppError, ExitCode};
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(
    name = "linflow",
    version,
    about = "Gradient-flow experiments on deep linear networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Shorthand for `--set instance.seed=U64`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Shorthand for `--set output_dir=DIR`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Shorthand for `--set integrator.steps=N`.
    #[arg(long, global = true, value_name = "N")]
    steps: Option<usize>,

    /// Dotted-path override, e.g. `integrator.dt=5e-7`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Induced-flow runs for each depth, trajectory CSVs and fig1.svg.
    ReproduceFig1,
    /// Runs the selected check suites and prints a pass/fail table.
    Verify,
    /// Integrates the factor flow and classifies the endpoint.
    Landscape,
    /// Runs depth_list with stable-set monitoring and rate bounds.
    Simulate,
}

fn overrides(cli: &Cli) -> Result<Vec<(String, Value)>, AppError> {
    let mut sets = Vec::new();
    if let Some(seed) = cli.seed {
        sets.push(("instance.seed".to_string(), Value::from(seed)));
    }
    if let Some(out) = &cli.out {
        sets.push((
            "output_dir".to_string(),
            Value::from(out.to_string_lossy().into_owned()),
        ));
    }
    if let Some(steps) = cli.steps {
        sets.push(("integrator.steps".to_string(), Value::from(steps)));
    }
    for s in &cli.set {
        sets.push(parse_assignment(s)?);
    }
    Ok(sets)
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides(cli)?)?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::ReproduceFig1 => commands::reproduce_fig1(&cfg, &mut out),
        Command::Verify => commands::verify(&cfg, &mut out),
        Command::Landscape => commands::landscape(&cfg, &mut out),
        Command::Simulate => commands::simulate(&cfg, &mut out),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            process::exit(if e.use_stderr() {
                ExitCode::Input.code()
            } else {
                ExitCode::Ok.code()
            });
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        process::exit(e.exit_code().code());
    }
}
