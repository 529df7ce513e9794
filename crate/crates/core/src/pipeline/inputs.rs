//! Locating stage inputs: configured external files first, otherwise the
//! outputs of earlier stages.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::cleaning::Verdict;
use crate::geo::{
    read_feature_collection, write_feature_collection, BuiltDate, DirImagery, GeoFeature, QuadGrid, Quarter,
};
use crate::metrics::polygon_iou;
use crate::scoring::{FileScorer, LinearScorer, Scorer};
use crate::vectorize::local_distance_m;

use super::manifest::{FileEntry, RunManifest, StageWriter};
use super::{PipelineConfig, PipelineError, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Tech {
    Solar,
    Wind,
}

impl Tech {
    pub const BOTH: [Tech; 2] = [Tech::Solar, Tech::Wind];

    pub fn name(self) -> &'static str {
        match self {
            Tech::Solar => "solar",
            Tech::Wind => "wind",
        }
    }
}

pub(super) fn stage_path(cfg: &PipelineConfig, s: Stage) -> PathBuf {
    cfg.stage_dir.join(s.dir())
}

pub(super) fn files_digest(files: &[FileEntry]) -> String {
    let mut h = Sha256::new();
    for f in files {
        h.update(f.path.as_bytes());
        h.update(b" ");
        h.update(f.sha256.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub(super) fn has_stage(cfg: &PipelineConfig, s: Stage) -> bool {
    stage_path(cfg, s).join(super::MANIFEST_FILE).is_file()
}

/// Directory of a completed upstream stage, recorded as an input.
pub(super) fn require(cfg: &PipelineConfig, needs: Stage, w: &mut StageWriter) -> Result<PathBuf, PipelineError> {
    let dir = stage_path(cfg, needs);
    let by = w.manifest.stage.clone();
    let stage = Stage::ALL.into_iter().find(|s| s.dir() == by).map_or("?", |s| s.command());
    let m = RunManifest::read(&dir).map_err(|_| PipelineError::Dependency { stage, needs: needs.command() })?;
    w.manifest.inputs.insert(needs.dir().to_string(), files_digest(&m.files));
    Ok(dir)
}

/// A configured path, or a file of the synth stage.
pub(super) fn input_path(
    cfg: &PipelineConfig,
    configured: &Option<PathBuf>,
    rel: &str,
    w: &mut StageWriter,
) -> Result<PathBuf, PipelineError> {
    match configured {
        Some(p) => Ok(p.clone()),
        None => Ok(require(cfg, Stage::Synth, w)?.join(rel)),
    }
}

/// Like `input_path`, but absent inputs are allowed.
pub(super) fn optional_input(
    cfg: &PipelineConfig,
    configured: &Option<PathBuf>,
    rel: &str,
    w: &mut StageWriter,
) -> Result<Option<PathBuf>, PipelineError> {
    if configured.is_some() || has_stage(cfg, Stage::Synth) {
        let p = input_path(cfg, configured, rel, w)?;
        return Ok((configured.is_some() || p.exists()).then_some(p));
    }
    Ok(None)
}

pub(super) fn grid(cfg: &PipelineConfig) -> Result<QuadGrid, PipelineError> {
    Ok(QuadGrid::new(cfg.synth.quad_size)?)
}

pub(super) fn imagery(cfg: &PipelineConfig, w: &mut StageWriter) -> Result<DirImagery, PipelineError> {
    let root = input_path(cfg, &cfg.paths.imagery, "imagery", w)?;
    let src = DirImagery::open(&root, grid(cfg)?)?;
    if crate::geo::ImagerySource::tiles(&src).is_empty() {
        return Err(PipelineError::Data(format!("no {} px quads under {}", cfg.synth.quad_size, root.display())));
    }
    Ok(src)
}

/// Probability files when configured, else the cleaned scorer, else the
/// baseline one.
pub(super) fn load_scorer(cfg: &PipelineConfig, tech: Tech, w: &mut StageWriter) -> Result<Box<dyn Scorer>, PipelineError> {
    let external = match tech {
        Tech::Solar => &cfg.paths.solar_probabilities,
        Tech::Wind => &cfg.paths.wind_probabilities,
    };
    let file = format!("{}_scorer.json", tech.name());
    let (source, scorer): (String, Box<dyn Scorer>) = if let Some(root) = external {
        (root.display().to_string(), Box::new(FileScorer::new(root, grid(cfg)?)))
    } else if has_stage(cfg, Stage::Clean) {
        let p = require(cfg, Stage::Clean, w)?.join(&file);
        (format!("clean/{file}"), Box::new(LinearScorer::load(&p)?))
    } else {
        let p = require(cfg, Stage::Train, w)?.join(&file);
        (format!("train/{file}"), Box::new(LinearScorer::load(&p)?))
    };
    w.count(&format!("{}_scorer", tech.name()), source);
    Ok(scorer)
}

pub(super) fn read_features(path: &Path) -> Result<Vec<GeoFeature>, PipelineError> {
    Ok(read_feature_collection(path)?)
}

pub(super) fn write_features(w: &StageWriter, rel: &str, features: &[GeoFeature]) -> Result<(), PipelineError> {
    Ok(write_feature_collection(&w.path(rel), features)?)
}

/// Ground truth for a technology, when configured or synthesized.
pub(super) fn truth(cfg: &PipelineConfig, tech: Tech, w: &mut StageWriter) -> Result<Option<Vec<GeoFeature>>, PipelineError> {
    let configured = match tech {
        Tech::Solar => &cfg.paths.solar_truth,
        Tech::Wind => &cfg.paths.wind_truth,
    };
    match optional_input(cfg, configured, &format!("{}_truth.geojson", tech.name()), w)? {
        Some(p) => Ok(Some(read_features(&p)?)),
        None => Ok(None),
    }
}

/// Whether a truth feature stands at `q`, judged from its `built_quarter`
/// and `removed_quarter` properties. Decoys are excluded unless asked for.
pub(super) fn truth_present(f: &GeoFeature, q: Quarter, include_decoys: bool) -> bool {
    let built = f.prop_str("built_quarter").and_then(|s| s.parse::<BuiltDate>().ok()).unwrap_or(BuiltDate::PreSeries);
    let removed = f.prop_str("removed_quarter").and_then(|s| s.parse::<Quarter>().ok());
    let decoy = f.properties().get("decoy").and_then(|v| v.as_bool()).unwrap_or(false);
    built.present_at(q) && removed.is_none_or(|r| q < r) && (include_decoys || !decoy)
}

fn bbox_overlap(a: [f64; 4], b: [f64; 4]) -> bool {
    a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3]
}

/// Simulated review: a solar detection is confirmed when it overlaps a real
/// array, a turbine when one stands within `wind_m`.
pub(super) fn oracle_verdicts(
    detections: &[GeoFeature],
    truth: &[GeoFeature],
    q: Quarter,
    wind_m: f64,
) -> Vec<(String, Verdict)> {
    let present: Vec<&GeoFeature> = truth.iter().filter(|t| truth_present(t, q, false)).collect();
    detections
        .iter()
        .map(|d| {
            let hit = match d {
                GeoFeature::Polygon(p) => present.iter().filter_map(|t| t.as_polygon()).any(|t| {
                    bbox_overlap(p.bbox(), t.bbox()) && polygon_iou(p, t) > 0.0
                }),
                GeoFeature::Point(p) => present
                    .iter()
                    .filter_map(|t| t.as_point())
                    .any(|t| local_distance_m([p.lon, p.lat], [t.lon, t.lat]) <= wind_m),
            };
            (feature_id(d), if hit { Verdict::TruePositive } else { Verdict::FalsePositive })
        })
        .collect()
}

/// The `id` property as text (numbers included), or empty.
pub(super) fn feature_id(f: &GeoFeature) -> String {
    match f.properties().get("id") {
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(v) if v.is_number() => v.to_string(),
        _ => String::new(),
    }
}
