//! Scorer training, with and without data cleaning and hard negatives.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::cleaning::{clean_dataset, mine_hard_negatives, read_verdicts, write_verdicts, CleaningSample, Verdict};
use crate::dataset::{background_point_samples, feature_patch, solar_samples, wind_samples};
use crate::geo::{DirImagery, GeoFeature, ImagerySource, LonLat, Quarter, RasterTile};
use crate::scoring::{train_linear_scorer, MosaiksBank, ScoreError, Scorer, TrainConfig, TrainSample};
use crate::vectorize::{extract_solar, extract_turbines, two_stage_tiling, Split};

use super::inputs::{feature_id, input_path, oracle_verdicts, optional_input, read_features, truth, write_features, Tech};
use super::manifest::StageWriter;
use super::{PipelineConfig, PipelineError, RunManifest};

struct Dataset {
    samples: Vec<TrainSample>,
    /// Noise flag of each label, when the labels carry one.
    noise: BTreeMap<String, String>,
}

fn label_file(cfg: &PipelineConfig, tech: Tech) -> &Option<std::path::PathBuf> {
    match tech {
        Tech::Solar => &cfg.paths.solar_labels,
        Tech::Wind => &cfg.paths.wind_labels,
    }
}

/// Patches of the training split; writes the split table.
fn build_dataset(cfg: &PipelineConfig, tech: Tech, src: &DirImagery, w: &mut StageWriter) -> Result<Dataset, PipelineError> {
    let t = tech.name();
    let path = input_path(cfg, label_file(cfg, tech), &format!("{t}_labels.geojson"), w)?;
    let labels = read_features(&path)?;
    if labels.is_empty() {
        return Err(PipelineError::Data(format!("{} holds no labels", path.display())));
    }
    let points: Vec<LonLat> = labels.iter().map(GeoFeature::representative_point).collect();
    let tiling = two_stage_tiling(&points, cfg.seed)?;
    let mut csv = String::from("id,group,tile,split\n");
    let mut train = Vec::new();
    for (i, f) in labels.iter().enumerate() {
        let split = tiling.splits[tiling.tile[i]];
        csv.push_str(&format!("{},{},{},{}\n", feature_id(f), tiling.group[i], tiling.tile[i], split.as_str()));
        if split == Split::Train {
            train.push(f.clone());
        }
    }
    w.write_bytes(&format!("{t}_splits.csv"), csv.as_bytes())?;
    w.count(&format!("{t}_labels"), labels.len());
    w.count(&format!("{t}_train_labels"), train.len());
    let noise = labels
        .iter()
        .filter_map(|f| f.prop_str("noise_mode").map(|m| (feature_id(f), m.to_string())))
        .collect();
    let lq = cfg.synth.label_quarter;
    let samples = match tech {
        Tech::Solar => solar_samples(src, lq, &train, &cfg.patches)?,
        Tech::Wind => {
            let towers: Vec<LonLat> = match optional_input(cfg, &cfg.paths.confusers, "confusers.geojson", w)? {
                Some(p) => read_features(&p)?.iter().map(GeoFeature::representative_point).collect(),
                None => Vec::new(),
            };
            let mut s = wind_samples(src, lq, &train, &towers, &cfg.patches)?;
            let n = (s.len() as f64 * cfg.patches.wind_background_ratio).round() as usize;
            s.extend(background_point_samples(src, lq, &points, n, cfg.patches.wind_patch, cfg.patches.seed)?);
            s
        }
    };
    w.count(&format!("{t}_samples"), samples.len());
    Ok(Dataset { samples, noise })
}

fn train_config(cfg: &PipelineConfig, tech: Tech) -> &TrainConfig {
    match tech {
        Tech::Solar => &cfg.solar_training,
        Tech::Wind => &cfg.wind_training,
    }
}

fn trainer<'a>(
    bank: &'a MosaiksBank,
    tc: &'a TrainConfig,
) -> impl Fn(&[TrainSample]) -> Result<Box<dyn Scorer>, ScoreError> + Sync + 'a {
    move |s: &[TrainSample]| -> Result<Box<dyn Scorer>, ScoreError> { Ok(Box::new(train_linear_scorer(bank.clone(), s, tc)?)) }
}

pub(super) fn run_train(cfg: &PipelineConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let mut w = StageWriter::new("train", cfg, workers)?;
    let src = super::inputs::imagery(cfg, &mut w)?;
    let bank = MosaiksBank::new(cfg.bank)?;
    for tech in Tech::BOTH {
        let t0 = Instant::now();
        let ds = build_dataset(cfg, tech, &src, &mut w)?;
        let scorer = train_linear_scorer(bank.clone(), &ds.samples, train_config(cfg, tech))?;
        scorer.save(&w.path(&format!("{}_scorer.json", tech.name())))?;
        w.count(&format!("{}_final_loss", tech.name()), scorer.report().final_loss);
        w.timing(tech.name(), t0);
    }
    w.commit()
}

/// Scores every tile at `q` and extracts detections as features.
pub(super) fn detect_at(
    cfg: &PipelineConfig,
    src: &(impl ImagerySource + ?Sized),
    scorer: &dyn Scorer,
    tech: Tech,
    q: Quarter,
) -> Result<Vec<GeoFeature>, PipelineError> {
    let probs: Vec<RasterTile> = src
        .tiles()
        .par_iter()
        .map(|&t| -> Result<RasterTile, PipelineError> { Ok(scorer.score(&src.tile(t, q)?)?) })
        .collect::<Result<_, _>>()?;
    let grid = src.grid();
    let b = cfg.inference.binarize;
    Ok(match tech {
        Tech::Solar => extract_solar(&probs, grid, b, cfg.vectorize.min_area_m2)?.iter().map(|d| d.to_feature()).collect(),
        Tech::Wind => extract_turbines(&probs, grid, b)?.iter().map(|d| d.to_feature()).collect(),
    })
}

pub(super) fn run_clean(cfg: &PipelineConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let mut w = StageWriter::new("clean", cfg, workers)?;
    let src = super::inputs::imagery(cfg, &mut w)?;
    let bank = MosaiksBank::new(cfg.bank)?;
    let lq = cfg.synth.label_quarter;
    for tech in Tech::BOTH {
        let t = tech.name();
        let t0 = Instant::now();
        let ds = build_dataset(cfg, tech, &src, &mut w)?;
        let fit = trainer(&bank, train_config(cfg, tech));
        let ccfg = match tech {
            Tech::Solar => &cfg.cleaning.solar,
            Tech::Wind => &cfg.cleaning.wind,
        };
        let (mut samples, report) = clean_dataset(ds.samples.into_iter().map(CleaningSample::new).collect(), &fit, ccfg)?;
        w.write_bytes(&format!("{t}_cleaning.json"), report.to_json().as_bytes())?;
        w.count(&format!("{t}_dropped"), report.initial - report.final_active);
        w.timing(&format!("{t}_cleaning"), t0);

        if cfg.cleaning.hard_negatives {
            let t1 = Instant::now();
            let active: Vec<TrainSample> = samples.iter().filter(|s| s.status.in_training()).map(|s| s.sample.clone()).collect();
            let cleaned = fit(&active)?;
            let detections = detect_at(cfg, &src, cleaned.as_ref(), tech, lq)?;
            write_features(&w, &format!("{t}_review.geojson"), &detections)?;
            let file = match tech {
                Tech::Solar => &cfg.review.solar_hard_negatives,
                Tech::Wind => &cfg.review.wind_hard_negatives,
            };
            let verdicts = match file {
                Some(p) => Some(read_verdicts(p)?),
                None if cfg.review.truth_oracle => {
                    truth(cfg, tech, &mut w)?.map(|tr| oracle_verdicts(&detections, &tr, lq, cfg.review.oracle_wind_m))
                }
                None => None,
            };
            match verdicts {
                Some(v) => {
                    write_verdicts(&w.path(&format!("{t}_hard_negative_verdicts.csv")), &v)?;
                    let fps: Vec<(String, Verdict)> = v.into_iter().filter(|(_, v)| *v == Verdict::FalsePositive).collect();
                    let by_id: BTreeMap<String, &GeoFeature> = detections.iter().map(|d| (feature_id(d), d)).collect();
                    let size = match tech {
                        Tech::Solar => cfg.patches.solar_patch,
                        Tech::Wind => cfg.patches.wind_patch,
                    };
                    let candidates: Vec<(String, RasterTile)> = fps
                        .par_iter()
                        .map(|(id, _)| -> Result<(String, RasterTile), PipelineError> {
                            let f = by_id
                                .get(id)
                                .ok_or_else(|| PipelineError::Data(format!("verdict for unknown {t} detection {id}")))?;
                            Ok((id.clone(), feature_patch(&src, lq, f, size)?))
                        })
                        .collect::<Result<_, _>>()?;
                    samples = mine_hard_negatives(samples, &candidates, &fps, tech == Tech::Wind)?;
                    w.count(&format!("{t}_hard_negatives"), fps.len());
                }
                None => log::warn!("no {t} verdicts for hard-negative mining; skipped"),
            }
            w.timing(&format!("{t}_hard_negatives"), t1);
        }

        let t2 = Instant::now();
        let training: Vec<TrainSample> = samples.iter().filter(|s| s.status.in_training()).map(|s| s.sample.clone()).collect();
        let scorer = train_linear_scorer(bank.clone(), &training, train_config(cfg, tech))?;
        scorer.save(&w.path(&format!("{t}_scorer.json")))?;
        w.timing(&format!("{t}_final_training"), t2);

        let mut csv = String::from("id,status,fit_iou,noise_mode\n");
        for s in &samples {
            let status = serde_json::to_value(s.status).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            let fit = s.fit_iou.map_or(String::new(), |f| format!("{f:.6}"));
            let noise = ds.noise.get(s.id()).map_or("", String::as_str);
            csv.push_str(&format!("{},{status},{fit},{noise}\n", s.id()));
        }
        w.write_bytes(&format!("{t}_samples.csv"), csv.as_bytes())?;
    }
    w.commit()
}
