//! Staged execution. Every stage reads the files of earlier stages under the
//! stage directory (or configured external inputs) and writes its own
//! directory atomically with a digest manifest.

mod bench;
pub mod config;
mod detect;
mod inputs;
pub mod manifest;
mod report;
mod synth_stage;
mod temporal_stage;
mod train;

use std::fmt;
use std::str::FromStr;

pub use bench::{bench, BenchReport, BenchRow};
pub use config::{PipelineConfig, CONFIG_ENV};
pub use manifest::{digest_tree, FileEntry, RunManifest, MANIFEST_FILE};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` needs the output of `{needs}`; run `renewwatch {needs}` first")]
    Dependency { stage: &'static str, needs: &'static str },
    #[error("data error: {0}")]
    Data(String),
}

impl PipelineError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Dependency { .. } => 3,
            PipelineError::Data(_) => 4,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Data(e.to_string())
            }
        })*
    };
}

data_error!(
    crate::geo::GeoError,
    crate::cleaning::VerdictError,
    crate::metrics::StatsError,
    crate::metrics::CapacityError,
    std::io::Error,
    rayon::ThreadPoolBuildError
);

impl From<crate::scoring::ScoreError> for PipelineError {
    fn from(e: crate::scoring::ScoreError) -> Self {
        match e {
            crate::scoring::ScoreError::Config(m) => PipelineError::Config(m),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<crate::cleaning::CleanError> for PipelineError {
    fn from(e: crate::cleaning::CleanError) -> Self {
        match e {
            crate::cleaning::CleanError::Config(m) => PipelineError::Config(m),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<crate::postfilter::FilterError> for PipelineError {
    fn from(e: crate::postfilter::FilterError) -> Self {
        match e {
            crate::postfilter::FilterError::Config(m) => PipelineError::Config(m),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<crate::synth::SynthError> for PipelineError {
    fn from(e: crate::synth::SynthError) -> Self {
        match e {
            crate::synth::SynthError::InvalidSpec(m) => PipelineError::Config(m),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Train,
    Clean,
    Infer,
    Vectorize,
    Filter,
    Date,
    Enrich,
    Aggregate,
    Evaluate,
    Bench,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Synth,
        Stage::Train,
        Stage::Clean,
        Stage::Infer,
        Stage::Vectorize,
        Stage::Filter,
        Stage::Date,
        Stage::Enrich,
        Stage::Aggregate,
        Stage::Evaluate,
        Stage::Bench,
    ];

    /// Output directory name.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Train => "train",
            Stage::Clean => "clean",
            Stage::Infer => "infer",
            Stage::Vectorize => "vectorize",
            Stage::Filter => "filter",
            Stage::Date => "date",
            Stage::Enrich => "enrich",
            Stage::Aggregate => "aggregate",
            Stage::Evaluate => "evaluate",
            Stage::Bench => "bench",
        }
    }

    /// CLI subcommand.
    pub fn command(self) -> &'static str {
        match self {
            Stage::Train => "train-scorer",
            s => s.dir(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.command())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.command() == s || st.dir() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage {s:?}")))
    }
}

/// Runs one stage on a pool of the configured size and returns its
/// manifest.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let workers = cfg.worker_count();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    log::info!("stage {stage} with {workers} workers");
    pool.install(|| match stage {
        Stage::Synth => synth_stage::run(cfg, workers),
        Stage::Train => train::run_train(cfg, workers),
        Stage::Clean => train::run_clean(cfg, workers),
        Stage::Infer => detect::run_infer(cfg, workers),
        Stage::Vectorize => detect::run_vectorize(cfg, workers),
        Stage::Filter => detect::run_filter(cfg, workers),
        Stage::Date => temporal_stage::run_date(cfg, workers),
        Stage::Enrich => temporal_stage::run_enrich(cfg, workers),
        Stage::Aggregate => report::run_aggregate(cfg, workers),
        Stage::Evaluate => report::run_evaluate(cfg, workers),
        Stage::Bench => bench::run(cfg, workers),
    })
}

/// Every stage from `synth` through `evaluate`, in order.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<RunManifest>, PipelineError> {
    Stage::ALL.into_iter().filter(|s| *s != Stage::Bench).map(|s| run_stage(s, cfg)).collect()
}
