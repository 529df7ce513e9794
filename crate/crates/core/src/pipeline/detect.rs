//! Tile scoring, vectorization and the false-positive filter.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cleaning::{read_verdicts, write_verdicts, Verdict};
use crate::geo::{imagery_stem, read_raster, write_raster, GeoFeature, ImagerySource, RasterTile};
use crate::postfilter::{apply_filter, detection_features, train_filter, FilterError};
use crate::scoring::MosaiksBank;
use crate::vectorize::{extract_solar, extract_turbines};

use super::inputs::{feature_id, imagery, load_scorer, oracle_verdicts, read_features, require, truth, write_features, Tech};
use super::manifest::StageWriter;
use super::{PipelineConfig, PipelineError, RunManifest, Stage};

pub(super) fn run_infer(cfg: &PipelineConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let mut w = StageWriter::new("infer", cfg, workers)?;
    let scorers = [load_scorer(cfg, Tech::Solar, &mut w)?, load_scorer(cfg, Tech::Wind, &mut w)?];
    let src = imagery(cfg, &mut w)?;
    let q = cfg.inference.quarter;
    let tiles = src.tiles();
    let mut total = 0.0;
    for (tech, scorer) in Tech::BOTH.into_iter().zip(&scorers) {
        let root = w.path(tech.name());
        let t0 = Instant::now();
        tiles.par_iter().try_for_each(|&t| -> Result<(), PipelineError> {
            let p = scorer.score(&src.tile(t, q)?)?;
            Ok(write_raster(&imagery_stem(&root, q, t), &p)?)
        })?;
        let secs = t0.elapsed().as_secs_f64();
        total += secs;
        w.timing(tech.name(), t0);
        w.count(&format!("{}_quads_per_second", tech.name()), tiles.len() as f64 / secs.max(1e-9));
    }
    w.manifest.tile_count = tiles.len();
    w.manifest.quads_per_second = Some(2.0 * tiles.len() as f64 / total.max(1e-9));
    w.count("quarter", q.to_string());
    w.commit()
}

/// Probability tiles of one technology written by the infer stage.
pub(super) fn probability_tiles(cfg: &PipelineConfig, tech: Tech, w: &mut StageWriter) -> Result<Vec<RasterTile>, PipelineError> {
    let dir = require(cfg, Stage::Infer, w)?;
    let src = imagery(cfg, w)?;
    let q = cfg.inference.quarter;
    let root = dir.join(tech.name());
    Ok(src.tiles().par_iter().map(|&t| read_raster(&imagery_stem(&root, q, t))).collect::<Result<_, _>>()?)
}

pub(super) fn run_vectorize(cfg: &PipelineConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let mut w = StageWriter::new("vectorize", cfg, workers)?;
    let grid = super::inputs::grid(cfg)?;
    let b = cfg.inference.binarize;
    for tech in Tech::BOTH {
        let t0 = Instant::now();
        let probs = probability_tiles(cfg, tech, &mut w)?;
        let features: Vec<GeoFeature> = match tech {
            Tech::Solar => extract_solar(&probs, grid, b, cfg.vectorize.min_area_m2)?.iter().map(|d| d.to_feature()).collect(),
            Tech::Wind => extract_turbines(&probs, grid, b)?.iter().map(|d| d.to_feature()).collect(),
        };
        write_features(&w, &format!("{}.geojson", tech.name()), &features)?;
        w.count(&format!("{}_detections", tech.name()), features.len());
        w.manifest.tile_count = probs.len();
        w.timing(tech.name(), t0);
    }
    w.commit()
}

/// Up to `budget` ids in a seeded order independent of detection order.
fn review_sample(ids: &[String], budget: usize, seed: u64) -> Vec<String> {
    let mut keyed: Vec<([u8; 32], &String)> = ids
        .iter()
        .map(|id| {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(id.as_bytes());
            (h.finalize().into(), id)
        })
        .collect();
    keyed.sort();
    keyed.into_iter().take(budget).map(|(_, id)| id.clone()).collect()
}

pub(super) fn run_filter(cfg: &PipelineConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let mut w = StageWriter::new("filter", cfg, workers)?;
    let vec_dir = require(cfg, Stage::Vectorize, &mut w)?;
    let q = cfg.inference.quarter;
    for tech in Tech::BOTH {
        let t = tech.name();
        let t0 = Instant::now();
        let detections = read_features(&vec_dir.join(format!("{t}.geojson")))?;
        let ids: Vec<String> = detections.iter().map(feature_id).collect();
        let file = match tech {
            Tech::Solar => &cfg.review.solar_filter,
            Tech::Wind => &cfg.review.wind_filter,
        };
        let verdicts: Option<Vec<(String, Verdict)>> = if !cfg.filter.enabled || detections.is_empty() {
            None
        } else if let Some(p) = file {
            Some(read_verdicts(p)?)
        } else if cfg.review.truth_oracle {
            let picked = review_sample(&ids, cfg.filter.budget, cfg.filter.model.seed);
            let chosen: Vec<GeoFeature> = detections.iter().filter(|d| picked.contains(&feature_id(d))).cloned().collect();
            truth(cfg, tech, &mut w)?.map(|tr| oracle_verdicts(&chosen, &tr, q, cfg.review.oracle_wind_m))
        } else {
            None
        };

        let mut margins: BTreeMap<String, f64> = BTreeMap::new();
        let mut rejected_ids = Vec::new();
        let status = match verdicts {
            None => "skipped: no verdicts".to_string(),
            Some(v) => {
                write_verdicts(&w.path(&format!("{t}_verdicts.csv")), &v)?;
                let src = imagery(cfg, &mut w)?;
                let bank = MosaiksBank::new(cfg.bank)?;
                let feats: Vec<(String, Vec<f32>)> = detections
                    .par_iter()
                    .map(|d| Ok((feature_id(d), detection_features(&src, q, d, &bank)?)))
                    .collect::<Result<_, FilterError>>()?;
                let table: BTreeMap<String, Vec<f32>> = feats.iter().cloned().collect();
                match train_filter(&table, &v, &cfg.filter.model) {
                    Ok(model) => {
                        model.save(&w.path(&format!("{t}_filter_model.json")))?;
                        let out = apply_filter(&model, &feats)?;
                        for d in out.kept.iter().chain(&out.rejected) {
                            margins.insert(d.id.clone(), d.margin);
                        }
                        rejected_ids = out.rejected.into_iter().map(|d| d.id).collect();
                        w.count(&format!("{t}_target_met"), model.training.target_met);
                        "applied".to_string()
                    }
                    Err(e @ FilterError::SingleClass { .. }) => format!("skipped: {e}"),
                    Err(e) => return Err(e.into()),
                }
            }
        };
        let (mut kept, mut rejected) = (Vec::new(), Vec::new());
        for mut d in detections {
            let id = feature_id(&d);
            if let Some(m) = margins.get(&id) {
                d.properties_mut().insert("filter_margin".into(), (*m).into());
            }
            if rejected_ids.contains(&id) {
                rejected.push(d);
            } else {
                kept.push(d);
            }
        }
        write_features(&w, &format!("{t}.geojson"), &kept)?;
        write_features(&w, &format!("{t}_rejected.geojson"), &rejected)?;
        w.count(&format!("{t}_kept"), kept.len());
        w.count(&format!("{t}_rejected"), rejected.len());
        w.count(&format!("{t}_filter"), status);
        w.timing(t, t0);
    }
    w.commit()
}
