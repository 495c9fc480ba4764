//! Benchmark CLI: run optimizer comparisons from a JSON config, summarize
//! record directories, time the block-parallel solver, and fetch the
//! benchmark datasets.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sca_bench::records::{read_records, write_records, write_summary};
use sca_bench::speedup::{run_speedup, write_speedup_csv, SpeedupConfig};
use sca_bench::{data, run_experiment, summarize, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "sca-bench",
    about = "Convergence benchmarks for surrogate-based network training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep from a JSON config.
    Run(RunArgs),
    /// Aggregate a directory of run records into summary tables.
    Summarize(SummarizeArgs),
    /// Time the block-parallel subproblem solve over a (C, workers) grid.
    Speedup(SpeedupArgs),
    /// Download one of the benchmark datasets (requires network + curl).
    FetchData(FetchArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for records and the config echo.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    /// Override any config key by JSON pointer-ish path, e.g.
    /// `--set iterations=1000` or `--set dataset.n=5000`. Values parse as
    /// JSON when possible, else as strings.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Directory holding runs.json and per-run CSVs.
    #[arg(long)]
    records: PathBuf,
    /// Where to write summary.csv and curve files (defaults to the records
    /// directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpeedupArgs {
    #[arg(long, default_value_t = 2000)]
    q: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Comma-separated block counts.
    #[arg(long, default_value = "1,2,4,8", value_delimiter = ',')]
    blocks: Vec<usize>,
    /// Comma-separated worker counts.
    #[arg(long, default_value = "1,2,4,8", value_delimiter = ',')]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FetchArgs {
    /// Dataset name (casp | parkinsons | skillcraft | wine | all).
    #[arg(long, default_value = "all")]
    dataset: String,
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
}

fn apply_overrides(mut value: serde_json::Value, overrides: &[String]) -> Result<serde_json::Value> {
    for entry in overrides {
        let (key, raw) = entry
            .split_once('=')
            .with_context(|| format!("override '{entry}' is not KEY=VALUE"))?;
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut slot = &mut value;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let last = i + 1 == parts.len();
            match slot {
                serde_json::Value::Object(map) => {
                    if last {
                        map.insert(part.to_string(), parsed.clone());
                        break;
                    }
                    slot = map
                        .entry(part.to_string())
                        .or_insert(serde_json::Value::Object(Default::default()));
                }
                serde_json::Value::Array(arr) => {
                    let idx: usize = part
                        .parse()
                        .with_context(|| format!("'{part}' is not an array index"))?;
                    let item = arr
                        .get_mut(idx)
                        .with_context(|| format!("index {idx} out of bounds in '{key}'"))?;
                    if last {
                        *item = parsed.clone();
                        break;
                    }
                    slot = item;
                }
                _ => bail!("cannot descend into '{part}' of '{key}'"),
            }
        }
    }
    Ok(value)
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).context("parsing config")?;
    value = apply_overrides(value, &args.overrides)?;
    let config: ExperimentConfig =
        serde_json::from_value(value).context("interpreting config")?;
    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(
        args.out_dir.join("config.json"),
        serde_json::to_string_pretty(&config)?,
    )?;
    let records = run_experiment(&config)?;
    write_records(&args.out_dir, &records)?;
    let failures = records
        .iter()
        .filter(|r| r.final_metric.is_none())
        .count();
    let summary = summarize(&records)?;
    write_summary(&args.out_dir, &summary)?;
    for s in &summary.per_optimizer {
        println!(
            "{:<12} runs {:>3}  failures {:>2}  metric {:.4} +- {:.4}",
            s.optimizer, s.runs, s.failures, s.metric_mean, s.metric_std
        );
    }
    println!("records written to {}", args.out_dir.display());
    if failures > 0 {
        eprintln!("{failures} run(s) failed; see runs.json statuses");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_summarize(args: &SummarizeArgs) -> Result<ExitCode> {
    let records = read_records(&args.records)?;
    let summary = summarize(&records)?;
    let out = args.out.clone().unwrap_or_else(|| args.records.clone());
    write_summary(&out, &summary)?;
    for s in &summary.per_optimizer {
        println!(
            "{:<12} runs {:>3}  failures {:>2}  metric {:.4} +- {:.4}",
            s.optimizer, s.runs, s.failures, s.metric_mean, s.metric_std
        );
    }
    println!("summary written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_speedup(args: &SpeedupArgs) -> Result<ExitCode> {
    let cfg = SpeedupConfig {
        q: args.q,
        lambda: args.lambda,
        tau: args.tau,
        blocks: args.blocks.clone(),
        workers: args.workers.clone(),
        reps: args.reps,
        seed: args.seed,
    };
    eprintln!(
        "timing Q = {}, blocks {:?}, workers {:?}, {} reps",
        cfg.q, cfg.blocks, cfg.workers, cfg.reps
    );
    let entries = run_speedup(&cfg)?;
    println!("blocks workers median_ms speedup");
    for e in &entries {
        println!(
            "{:>6} {:>7} {:>9.3} {:>7.2}",
            e.blocks, e.workers, e.median_ms, e.speedup
        );
    }
    if let Some(path) = &args.out {
        write_speedup_csv(path, &entries)?;
        println!("table written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_fetch(args: &FetchArgs) -> Result<ExitCode> {
    let presets = data::uci_presets();
    let wanted: Vec<_> = if args.dataset == "all" {
        presets.iter().collect()
    } else {
        let found = presets.iter().find(|p| p.name == args.dataset);
        match found {
            Some(p) => vec![p],
            None => bail!(
                "unknown dataset '{}'; known: {}",
                args.dataset,
                presets
                    .iter()
                    .map(|p| p.name)
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        }
    };
    std::fs::create_dir_all(&args.out_dir)?;
    let mut any_failed = false;
    for preset in wanted {
        let target = args.out_dir.join(preset.filename);
        if target.exists() {
            println!("{}: already present at {}", preset.name, target.display());
            continue;
        }
        println!("{}: fetching {}", preset.name, preset.url);
        let status = std::process::Command::new("curl")
            .args(["-L", "--fail", "-o"])
            .arg(&target)
            .arg(preset.url)
            .status();
        match status {
            Ok(s) if s.success() => println!("{}: saved to {}", preset.name, target.display()),
            Ok(s) => {
                any_failed = true;
                eprintln!(
                    "{}: curl exited with {s}; download manually from {}",
                    preset.name, preset.url
                );
            }
            Err(e) => {
                any_failed = true;
                eprintln!(
                    "{}: could not invoke curl ({e}); download manually from {}",
                    preset.name, preset.url
                );
            }
        }
    }
    Ok(if any_failed {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Summarize(args) => cmd_summarize(args),
        Command::Speedup(args) => cmd_speedup(args),
        Command::FetchData(args) => cmd_fetch(args),
    }
}
