//! Country totals, reference comparison and accuracy against ground truth.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::geo::{BitMask, BuiltDate, GeoFeature, GeoPolygon, ImagerySource, LonLat, Quarter, RasterTile};
use crate::metrics::{
    aggregate_by_country, compare_to_reference, match_points, match_polygons, object_scores, pixel_metrics,
    read_reference_table, CapacityError, ReferenceComparison, Scores, Technology,
};
use crate::scoring::binarize;

use super::detect::probability_tiles;
use super::inputs::{imagery, optional_input, read_features, require, truth, truth_present, Tech};
use super::manifest::StageWriter;
use super::{PipelineConfig, PipelineError, RunManifest, Stage};

fn built_of(f: &GeoFeature) -> BuiltDate {
    f.prop_str("built_quarter").and_then(|s| s.parse().ok()).unwrap_or(BuiltDate::PreSeries)
}

pub(super) fn run_aggregate(cfg: &PipelineConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let mut w = StageWriter::new("aggregate", cfg, workers)?;
    let dir = require(cfg, Stage::Enrich, &mut w)?;
    let solar = read_features(&dir.join("solar.geojson"))?;
    let wind = read_features(&dir.join("wind.geojson"))?;
    let iso = |f: &GeoFeature| f.prop_str("country_iso3").unwrap_or(crate::temporal::country::UNASSIGNED).to_string();
    let solar_rows: Vec<(String, f64, BuiltDate)> = solar
        .iter()
        .filter_map(|f| f.as_polygon().map(|p| (iso(f), f.prop_f64("area_m2").unwrap_or_else(|| p.area_m2()), built_of(f))))
        .collect();
    let turbines: Vec<String> = wind.iter().map(iso).collect();
    let aggregates = aggregate_by_country(
        solar_rows.iter().map(|(i, a, b)| (i.as_str(), *a, *b)),
        turbines.iter().map(String::as_str),
        &cfg.capacity.schedule,
    );
    let mut csv = String::from("iso3,solar_km2,solar_mw,turbine_count,wind_mw\n");
    for a in &aggregates {
        csv.push_str(&format!("{},{:.6},{:.3},{},{:.3}\n", a.iso3, a.solar_km2, a.solar_mw, a.turbine_count, a.wind_mw));
    }
    w.write_bytes("countries.csv", csv.as_bytes())?;
    w.count("countries", aggregates.len());
    w.count("solar_mw", aggregates.iter().map(|a| a.solar_mw).sum::<f64>());
    w.count("wind_mw", aggregates.iter().map(|a| a.wind_mw).sum::<f64>());

    if let Some(path) = optional_input(cfg, &cfg.paths.reference, "reference.csv", &mut w)? {
        let reference = read_reference_table(&path)?;
        let mut report: BTreeMap<&str, ReferenceComparison> = BTreeMap::new();
        let mut scatter = String::from("technology,iso3,ours_mw,reference_mw\n");
        for tech in [Technology::Solar, Technology::OnshoreWind] {
            match compare_to_reference(&aggregates, &reference, tech, cfg.capacity.reference_year) {
                Ok(c) => {
                    for (iso, ours, theirs) in &c.rows {
                        scatter.push_str(&format!("{},{iso},{ours:.3},{theirs:.3}\n", tech.as_str()));
                    }
                    report.insert(tech.as_str(), c);
                }
                Err(e @ CapacityError::TooFewCountries(_)) => {
                    log::warn!("{} reference comparison skipped: {e}", tech.as_str());
                    w.count(&format!("{}_comparison", tech.as_str()), format!("skipped: {e}"));
                }
                Err(e) => return Err(e.into()),
            }
        }
        w.write_json("capacity_report.json", &report)?;
        w.write_bytes("scatter.csv", scatter.as_bytes())?;
    }
    w.commit()
}

#[derive(Debug, Clone, Serialize)]
struct DatingAccuracy {
    matched: usize,
    exact: f64,
    within_one_quarter: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Evaluation {
    quarter: String,
    solar_pixel_before_filter: Scores,
    solar_pixel_after_filter: Scores,
    solar_object_before_filter: Scores,
    solar_object_after_filter: Scores,
    wind_object_before_filter: Scores,
    wind_object_after_filter: Scores,
    solar_dating: Option<DatingAccuracy>,
    wind_dating: Option<DatingAccuracy>,
}

fn rasterize_all(polys: &[&GeoPolygon], tile: &RasterTile) -> BitMask {
    let t = &tile.transform;
    let (x0, y1) = t.pixel_to_lonlat(0.0, 0.0);
    let (x1, y0) = t.pixel_to_lonlat(t.width as f64, t.height as f64);
    let mut m = BitMask::new(t.width, t.height);
    for p in polys {
        let b = p.bbox();
        if b[0] <= x1 && x0 <= b[2] && b[1] <= y1 && y0 <= b[3] {
            m = m.union(&p.rasterize(t)).expect("same dims");
        }
    }
    m
}

/// Quarters between two dates; pre-series counts as the quarter before the
/// series.
fn quarter_index(b: BuiltDate) -> i64 {
    match b {
        BuiltDate::PreSeries => -1,
        BuiltDate::Quarter(q) => Quarter::SERIES_START.quarters_until(q),
    }
}

fn dating_accuracy(pairs: &[(usize, usize)], dated: &[GeoFeature], truth: &[&GeoFeature]) -> Option<DatingAccuracy> {
    if pairs.is_empty() {
        return None;
    }
    let diffs: Vec<i64> = pairs.iter().map(|&(p, t)| (quarter_index(built_of(&dated[p])) - quarter_index(built_of(truth[t]))).abs()).collect();
    let n = diffs.len() as f64;
    Some(DatingAccuracy {
        matched: diffs.len(),
        exact: diffs.iter().filter(|&&d| d == 0).count() as f64 / n,
        within_one_quarter: diffs.iter().filter(|&&d| d <= 1).count() as f64 / n,
    })
}

fn points(fs: &[GeoFeature]) -> Vec<LonLat> {
    fs.iter().map(GeoFeature::representative_point).collect()
}

fn polygons(fs: &[GeoFeature]) -> Vec<GeoPolygon> {
    fs.iter().filter_map(|f| f.as_polygon().cloned()).collect()
}

pub(super) fn run_evaluate(cfg: &PipelineConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let mut w = StageWriter::new("evaluate", cfg, workers)?;
    let q = cfg.inference.quarter;
    let missing = || PipelineError::Dependency { stage: "evaluate", needs: "synth" };
    let solar_truth_all = truth(cfg, Tech::Solar, &mut w)?.ok_or_else(missing)?;
    let wind_truth_all = truth(cfg, Tech::Wind, &mut w)?.ok_or_else(missing)?;
    let solar_truth: Vec<&GeoFeature> = solar_truth_all.iter().filter(|f| truth_present(f, q, false)).collect();
    let wind_truth: Vec<&GeoFeature> = wind_truth_all.iter().filter(|f| truth_present(f, q, false)).collect();

    let vec_dir = require(cfg, Stage::Vectorize, &mut w)?;
    let filt_dir = require(cfg, Stage::Filter, &mut w)?;
    let solar_before = read_features(&vec_dir.join("solar.geojson"))?;
    let wind_before = read_features(&vec_dir.join("wind.geojson"))?;
    let solar_after = read_features(&filt_dir.join("solar.geojson"))?;
    let wind_after = read_features(&filt_dir.join("wind.geojson"))?;
    let rejected = read_features(&filt_dir.join("solar_rejected.geojson"))?;

    let probs = probability_tiles(cfg, Tech::Solar, &mut w)?;
    let truth_polys: Vec<&GeoPolygon> = solar_truth.iter().filter_map(|f| f.as_polygon()).collect();
    let rejected_polys: Vec<&GeoPolygon> = rejected.iter().filter_map(|f| f.as_polygon()).collect();
    let per_tile: Vec<(Scores, Scores)> = probs
        .par_iter()
        .map(|p| -> Result<(Scores, Scores), PipelineError> {
            let pred = binarize(p, cfg.inference.binarize)?;
            let t = rasterize_all(&truth_polys, p);
            let kept = pred.difference(&rasterize_all(&rejected_polys, p))?;
            Ok((pixel_metrics(&pred, &t)?, pixel_metrics(&kept, &t)?))
        })
        .collect::<Result<_, _>>()?;
    let before: Vec<Scores> = per_tile.iter().map(|s| s.0).collect();
    let after: Vec<Scores> = per_tile.iter().map(|s| s.1).collect();

    let ev = &cfg.evaluation;
    let tp: Vec<GeoPolygon> = truth_polys.iter().map(|p| (*p).clone()).collect();
    let wp: Vec<LonLat> = wind_truth.iter().map(|f| f.representative_point()).collect();
    let solar_obj = |fs: &[GeoFeature]| {
        let pred = polygons(fs);
        object_scores(match_polygons(&pred, &tp, ev.solar_match_iou).len(), pred.len(), tp.len())
    };
    let wind_obj = |fs: &[GeoFeature]| object_scores(match_points(&points(fs), &wp, ev.wind_match_m).len(), fs.len(), wp.len());

    let (mut solar_dating, mut wind_dating) = (None, None);
    if super::inputs::has_stage(cfg, Stage::Date) {
        let date_dir = require(cfg, Stage::Date, &mut w)?;
        let ds = read_features(&date_dir.join("solar.geojson"))?;
        let dw = read_features(&date_dir.join("wind.geojson"))?;
        solar_dating = dating_accuracy(&match_polygons(&polygons(&ds), &tp, ev.solar_match_iou), &ds, &solar_truth);
        wind_dating = dating_accuracy(&match_points(&points(&dw), &wp, ev.wind_match_m), &dw, &wind_truth);
    }

    let report = Evaluation {
        quarter: q.to_string(),
        solar_pixel_before_filter: Scores::pooled(&before),
        solar_pixel_after_filter: Scores::pooled(&after),
        solar_object_before_filter: solar_obj(&solar_before),
        solar_object_after_filter: solar_obj(&solar_after),
        wind_object_before_filter: wind_obj(&wind_before),
        wind_object_after_filter: wind_obj(&wind_after),
        solar_dating,
        wind_dating,
    };
    w.count("solar_truth", solar_truth.len());
    w.count("wind_truth", wind_truth.len());
    let tiles = imagery(cfg, &mut w)?.tiles().len();
    w.count("tiles", tiles);
    w.write_json("report.json", &report)?;
    w.commit()
}
