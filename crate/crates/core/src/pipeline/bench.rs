//! Inference throughput at several worker counts over in-memory quads.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geo::{Quarter, RasterTile};
use crate::scoring::{LinearScorer, MosaiksBank, Scorer};
use crate::synth::{generate_world, WorldSpec};

use super::inputs::{has_stage, stage_path, Tech};
use super::manifest::StageWriter;
use super::{PipelineConfig, PipelineError, RunManifest, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub workers: usize,
    pub seconds: f64,
    pub quads_per_second: f64,
    /// Throughput relative to the one-worker run.
    pub speedup: f64,
    /// Speedup divided by the worker count.
    pub efficiency: f64,
    /// Digest of all output probabilities, in tile order.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub quads: usize,
    pub quad_size: u32,
    pub available_parallelism: usize,
    pub scorer: String,
    pub rows: Vec<BenchRow>,
    /// Every worker count produced identical outputs.
    pub deterministic: bool,
}

impl BenchReport {
    pub fn row(&self, workers: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.workers == workers)
    }
}

fn bench_scorer(cfg: &PipelineConfig) -> Result<(String, LinearScorer), PipelineError> {
    for s in [Stage::Clean, Stage::Train] {
        if has_stage(cfg, s) {
            let rel = format!("{}/{}_scorer.json", s.dir(), Tech::Solar.name());
            return Ok((rel.clone(), LinearScorer::load(&cfg.stage_dir.join(rel))?));
        }
    }
    let bank = MosaiksBank::new(cfg.bank)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = (0..bank.filter_count()).map(|_| rng.random_range(-0.05f32..0.05)).collect();
    Ok(("random".into(), LinearScorer::new(bank, weights, -1.0)?))
}

fn render_quads(cfg: &PipelineConfig) -> Result<Vec<RasterTile>, PipelineError> {
    let b = &cfg.bench;
    let n = b.quads.max(1);
    let tx = (n as f64).sqrt().ceil() as u32;
    let spec = WorldSpec {
        seed: cfg.seed,
        quad_size: b.quad_size,
        tiles_x: tx,
        tiles_y: (n as u32).div_ceil(tx),
        ..cfg.world_spec()
    };
    let world = generate_world(&spec)?;
    let tiles: Vec<_> = world.tile_ids().into_iter().take(n).collect();
    Ok(tiles.par_iter().map(|&t| world.render_tile(t, Quarter::SERIES_END)).collect::<Result<_, _>>()?)
}

fn score_all(scorer: &LinearScorer, quads: &[RasterTile]) -> Result<String, PipelineError> {
    let out: Vec<RasterTile> = quads.par_iter().map(|t| scorer.score(t)).collect::<Result<_, _>>()?;
    let mut h = Sha256::new();
    for t in &out {
        for v in t.target_probabilities()? {
            h.update(v.to_le_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Scores the same quads on a fresh pool per worker count.
pub fn bench(cfg: &PipelineConfig, worker_counts: &[usize]) -> Result<BenchReport, PipelineError> {
    if worker_counts.is_empty() || worker_counts.contains(&0) {
        return Err(PipelineError::Config("bench worker counts must be positive".into()));
    }
    let (scorer_name, scorer) = bench_scorer(cfg)?;
    let quads = render_quads(cfg)?;
    let mut rows: Vec<BenchRow> = Vec::new();
    for &n in worker_counts {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
        let t0 = Instant::now();
        let digest = pool.install(|| score_all(&scorer, &quads))?;
        let seconds = t0.elapsed().as_secs_f64().max(1e-9);
        let qps = quads.len() as f64 / seconds;
        log::info!("bench: {n} workers, {qps:.2} quads/s");
        rows.push(BenchRow { workers: n, seconds, quads_per_second: qps, speedup: 0.0, efficiency: 0.0, digest });
    }
    let base = rows.iter().find(|r| r.workers == 1).map_or(rows[0].quads_per_second * rows[0].workers as f64, |r| r.quads_per_second);
    for r in &mut rows {
        r.speedup = r.quads_per_second / base;
        r.efficiency = r.speedup / r.workers as f64;
    }
    let deterministic = rows.iter().all(|r| r.digest == rows[0].digest);
    Ok(BenchReport {
        quads: quads.len(),
        quad_size: cfg.bench.quad_size,
        available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        scorer: scorer_name,
        rows,
        deterministic,
    })
}

pub(super) fn run(cfg: &PipelineConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let mut w = StageWriter::new("bench", cfg, workers)?;
    if has_stage(cfg, Stage::Clean) || has_stage(cfg, Stage::Train) {
        let s = if has_stage(cfg, Stage::Clean) { Stage::Clean } else { Stage::Train };
        let m = RunManifest::read(&stage_path(cfg, s))?;
        w.manifest.inputs.insert(s.dir().into(), super::inputs::files_digest(&m.files));
    }
    let report = bench(cfg, &cfg.bench.worker_counts)?;
    let mut csv = String::from("workers,seconds,quads_per_second,speedup,efficiency,digest\n");
    for r in &report.rows {
        csv.push_str(&format!("{},{:.4},{:.4},{:.4},{:.4},{}\n", r.workers, r.seconds, r.quads_per_second, r.speedup, r.efficiency, r.digest));
    }
    w.write_bytes("bench.csv", csv.as_bytes())?;
    w.write_json("bench.json", &report)?;
    w.manifest.tile_count = report.quads;
    w.manifest.quads_per_second = report.rows.iter().map(|r| r.quads_per_second).reduce(f64::max);
    w.count("deterministic", report.deterministic);
    w.commit()
}
