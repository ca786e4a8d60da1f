use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use driftfed::data::{write_records, ColumnSpec, Task};
use driftfed::runner::{rerender_reports, run_experiment, run_generalization, validate_config, RunConfig};
use driftfed::synth::{default_paper_shaped_scenario, generate};
use driftfed::Seed;

#[derive(Parser)]
#[command(name = "driftfed", version, about = "Federated incremental learning under concept drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiments and write reports.
    Run(RunArgs),
    /// Check a configuration and list every problem found.
    Validate(RunArgs),
    /// Train on Benign plus one attack family at a time and test on every family.
    Generalization(RunArgs),
    /// Write the synthetic scenario as a CSV file.
    GenData {
        /// Destination CSV file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the matching column spec (TOML) here.
        #[arg(long)]
        columns: Option<PathBuf>,
    },
    /// Re-render the CSV tables from stored metrics.json files.
    Report {
        /// Output directory of a previous run.
        #[arg(long)]
        from: PathBuf,
        /// Where to write the tables (defaults to `--from`).
        #[arg(long)]
        to: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "DRIFTFED_OUT")]
    out: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Only run these strategies (ids such as `simple` or `retain-500`).
    #[arg(long = "strategy")]
    strategies: Vec<String>,
    /// Only run these tasks (`binary`, `six-class`).
    #[arg(long = "task")]
    tasks: Vec<String>,
    /// One LSTM layer of 16 units, 3 rounds, 5 local epochs.
    #[arg(long)]
    desk: bool,
}

fn parse_task(s: &str) -> Result<Task> {
    match s {
        "binary" => Ok(Task::Binary),
        "six-class" => Ok(Task::SixClass),
        other => bail!("unknown task `{other}` (expected binary or six-class)"),
    }
}

fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if args.desk {
        cfg.apply_desk_preset();
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = Seed::new(seed);
    }
    if !args.tasks.is_empty() {
        cfg.tasks = args.tasks.iter().map(|t| parse_task(t)).collect::<Result<_>>()?;
    }
    if !args.strategies.is_empty() {
        let known: Vec<String> = cfg.strategies.iter().map(|s| s.id()).collect();
        if let Some(missing) = args.strategies.iter().find(|s| !known.contains(s)) {
            bail!("strategy `{missing}` is not in the configuration (known: {})", known.join(", "));
        }
        cfg.strategies.retain(|s| args.strategies.contains(&s.id()));
    }
    Ok(cfg)
}

fn gen_data(out: &Path, seed: u64, columns: Option<&Path>) -> Result<()> {
    let spec = default_paper_shaped_scenario(Seed::new(seed));
    let rows = generate(&spec)?;
    let cols = ColumnSpec::numbered(spec.num_features);
    write_records(out, &rows, &cols, b',')?;
    if let Some(path) = columns {
        let text = toml::to_string_pretty(&cols)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let cfg = resolve(&args)?;
            let summary = run_experiment(&cfg)?;
            for t in &summary.tasks {
                println!("{}:", t.task);
                for s in &t.strategies {
                    println!("  {:<16} avg accuracy {:.4}", s.id, s.average_accuracy);
                }
            }
            println!("artifacts in {}", cfg.output_dir.display());
        }
        Command::Validate(args) => {
            let cfg = resolve(&args)?;
            let diags = validate_config(&cfg);
            if !diags.is_empty() {
                for d in &diags {
                    eprintln!("{d}");
                }
                return Ok(ExitCode::FAILURE);
            }
            println!("configuration is valid");
        }
        Command::Generalization(args) => {
            let cfg = resolve(&args)?;
            let m = run_generalization(&cfg)?;
            for (f, row) in m.families.iter().zip(&m.accuracy) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
                println!("{:<10} {}", f.name(), cells.join(" "));
            }
            println!("wrote {}", cfg.output_dir.join("generalization.csv").display());
        }
        Command::GenData { out, seed, columns } => gen_data(&out, seed, columns.as_deref())?,
        Command::Report { from, to } => {
            let dest = to.unwrap_or_else(|| from.clone());
            for p in rerender_reports(&from, &dest)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
