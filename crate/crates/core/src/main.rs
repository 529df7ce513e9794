use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use renewwatch::pipeline::{run_all, run_stage, PipelineConfig, PipelineError, RunManifest, Stage, CONFIG_ENV};

#[derive(Parser)]
#[command(name = "renewwatch", version, about = "Solar and wind installation detection over tiled imagery")]
struct Cli {
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory holding one sub-directory per stage.
    #[arg(long, global = true)]
    stage_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic world: imagery, labels, truth, land cover, boundaries.
    Synth,
    /// Train the baseline per-pixel scorers.
    TrainScorer,
    /// Retrain after label cleaning and hard-negative mining.
    Clean,
    /// Score every quad at the inference quarter.
    Infer,
    /// Turn probability rasters into solar polygons and turbine points.
    Vectorize,
    /// Drop likely false positives with the review-trained filter.
    Filter,
    /// Estimate construction quarters.
    Date,
    /// Attach land cover, country and capacity.
    Enrich,
    /// Country totals and comparison with reference statistics.
    Aggregate,
    /// Accuracy against ground truth.
    Evaluate,
    /// Scoring throughput per worker count.
    Bench,
    /// Every stage from synth through evaluate.
    All,
    /// Print the effective configuration as TOML.
    PrintConfig,
}

fn stage_of(c: &Command) -> Option<Stage> {
    Some(match c {
        Command::Synth => Stage::Synth,
        Command::TrainScorer => Stage::Train,
        Command::Clean => Stage::Clean,
        Command::Infer => Stage::Infer,
        Command::Vectorize => Stage::Vectorize,
        Command::Filter => Stage::Filter,
        Command::Date => Stage::Date,
        Command::Enrich => Stage::Enrich,
        Command::Aggregate => Stage::Aggregate,
        Command::Evaluate => Stage::Evaluate,
        Command::Bench => Stage::Bench,
        Command::All | Command::PrintConfig => return None,
    })
}

fn summary(m: &RunManifest) {
    let secs = m.timings_s.get("total").copied().unwrap_or_default();
    let qps = m.quads_per_second.map_or(String::new(), |q| format!(", {q:.2} quads/s"));
    println!("{}: {} files, {secs:.1} s{qps}", m.stage, m.files.len());
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(d) = cli.stage_dir {
        cfg.stage_dir = d;
    }
    match stage_of(&cli.command) {
        Some(stage) => summary(&run_stage(stage, &cfg)?),
        None if matches!(cli.command, Command::All) => run_all(&cfg)?.iter().for_each(summary),
        None => {
            cfg.validate()?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
