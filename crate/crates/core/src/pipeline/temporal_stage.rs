//! Construction dating over the quarterly series, then land-cover, country
//! and capacity attributes.

use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::{coverage, global_transform};
use crate::geo::{series_quarters, BitMask, BuiltDate, GeoFeature, ImagerySource};
use crate::metrics::solar_capacity_mw;
use crate::scoring::{binarize, Scorer};
use crate::temporal::country::CountryIndex;
use crate::temporal::landcover::{esa_code, LandCoverGrid};
use crate::temporal::{construction_date, positive_fraction, QuarterSeries};

use super::inputs::{feature_id, imagery, load_scorer, optional_input, read_features, require, write_features, Tech};
use super::manifest::StageWriter;
use super::{PipelineConfig, PipelineError, RunManifest, Stage};

/// Positive fraction of a feature's extent in each series quarter.
fn feature_series<S: ImagerySource + ?Sized>(
    cfg: &PipelineConfig,
    src: &S,
    scorer: &dyn Scorer,
    f: &GeoFeature,
    bounds: [i64; 4],
) -> Result<QuarterSeries, PipelineError> {
    let gt = global_transform(src);
    let m = cfg.dating.margin_px;
    let (x0, y0, x1, y1) = match f {
        GeoFeature::Polygon(p) => {
            let [w, s, e, n] = p.bbox();
            let (a, b) = gt.lonlat_to_pixel(w, n);
            let (c, d) = gt.lonlat_to_pixel(e, s);
            (a.floor() as i64, b.floor() as i64, c.ceil() as i64, d.ceil() as i64)
        }
        GeoFeature::Point(p) => {
            let (c, r) = gt.lonlat_to_pixel(p.lon, p.lat);
            let r0 = cfg.dating.turbine_radius_px;
            (c.floor() as i64 - r0, r.floor() as i64 - r0, c.floor() as i64 + r0 + 1, r.floor() as i64 + r0 + 1)
        }
    };
    let (gx0, gy0) = ((x0 - m).max(bounds[0]), (y0 - m).max(bounds[1]));
    let (gx1, gy1) = ((x1 + m).min(bounds[2]), (y1 + m).min(bounds[3]));
    if gx1 <= gx0 || gy1 <= gy0 {
        return Err(PipelineError::Data(format!("feature {} lies outside the imagery", feature_id(f))));
    }
    let (w, h) = ((gx1 - gx0) as usize, (gy1 - gy0) as usize);
    let mut extent: Option<BitMask> = None;
    let mut fractions = Vec::with_capacity(crate::temporal::SERIES_LEN);
    for q in series_quarters() {
        let tile = src.window(q, gx0, gy0, w, h)?;
        let ext = extent.get_or_insert_with(|| match f {
            GeoFeature::Polygon(p) => p.rasterize(&tile.transform),
            GeoFeature::Point(_) => BitMask::from_fn(w, h, |c, r| {
                let (c, r) = (gx0 + c as i64, gy0 + r as i64);
                c >= x0 && c < x1 && r >= y0 && r < y1
            }),
        });
        let positive = binarize(&scorer.score(&tile)?, cfg.inference.binarize)?;
        fractions.push(positive_fraction(ext, &positive)?);
    }
    Ok(QuarterSeries::new(feature_id(f), fractions)?)
}

pub(super) fn run_date(cfg: &PipelineConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let mut w = StageWriter::new("date", cfg, workers)?;
    let dir = require(cfg, Stage::Filter, &mut w)?;
    let src = imagery(cfg, &mut w)?;
    let bounds = coverage(&src)?;
    let quarters = series_quarters();
    let mut csv = format!("technology,id,{}\n", quarters.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(","));
    for tech in Tech::BOTH {
        let t = tech.name();
        let t0 = Instant::now();
        let scorer = load_scorer(cfg, tech, &mut w)?;
        let mut features = read_features(&dir.join(format!("{t}.geojson")))?;
        let series: Vec<QuarterSeries> = features
            .par_iter()
            .map(|f| feature_series(cfg, &src, scorer.as_ref(), f, bounds))
            .collect::<Result<_, _>>()?;
        let mut low = 0usize;
        for (f, s) in features.iter_mut().zip(&series) {
            let est = construction_date(s, cfg.dating.fraction);
            low += usize::from(est.low_confidence);
            let props = f.properties_mut();
            props.insert("built_quarter".into(), est.built.to_string().into());
            props.insert("low_confidence".into(), est.low_confidence.into());
            let row: Vec<String> = s.fractions.iter().map(|v| format!("{v:.4}")).collect();
            csv.push_str(&format!("{t},{},{}\n", s.id, row.join(",")));
        }
        write_features(&w, &format!("{t}.geojson"), &features)?;
        w.count(&format!("{t}_dated"), features.len());
        w.count(&format!("{t}_low_confidence"), low);
        w.timing(t, t0);
    }
    w.write_bytes("series.csv", csv.as_bytes())?;
    w.commit()
}

pub(super) fn run_enrich(cfg: &PipelineConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let mut w = StageWriter::new("enrich", cfg, workers)?;
    let dir = require(cfg, Stage::Date, &mut w)?;
    let lc_json = cfg.paths.landcover.as_ref().map(|p| p.with_extension("json"));
    let landcover = match optional_input(cfg, &lc_json, "landcover.json", &mut w)? {
        Some(p) => Some(LandCoverGrid::read(&p.with_extension(""))?),
        None => None,
    };
    let countries = match optional_input(cfg, &cfg.paths.boundaries, "boundaries.geojson", &mut w)? {
        Some(p) => CountryIndex::read(&p)?,
        None => CountryIndex::default(),
    };
    if landcover.is_none() {
        log::warn!("no land-cover grid; landcover_2018 left empty");
    }
    let schedule = &cfg.capacity.schedule;
    for tech in Tech::BOTH {
        let t = tech.name();
        let mut features = read_features(&dir.join(format!("{t}.geojson")))?;
        let mut unassigned = 0usize;
        for f in &mut features {
            let iso = countries.assign_feature(f).to_string();
            unassigned += usize::from(iso == crate::temporal::country::UNASSIGNED);
            let class = landcover.as_ref().and_then(|lc| esa_code(lc.class_for_feature(f)));
            let built = f.prop_str("built_quarter").and_then(|s| s.parse::<BuiltDate>().ok()).unwrap_or(BuiltDate::PreSeries);
            let area = f.prop_f64("area_m2");
            let mw = match &*f {
                GeoFeature::Polygon(p) => solar_capacity_mw(area.unwrap_or_else(|| p.area_m2()) / 1e6, built, schedule),
                GeoFeature::Point(_) => schedule.wind_mw_per_turbine,
            };
            let props = f.properties_mut();
            props.insert("landcover_2018".into(), class.map_or(serde_json::Value::Null, Into::into));
            props.insert("landcover_year".into(), landcover.as_ref().map_or(serde_json::Value::Null, |lc| lc.year.into()));
            props.insert("country_iso3".into(), iso.into());
            props.insert("capacity_mw".into(), mw.into());
        }
        write_features(&w, &format!("{t}.geojson"), &features)?;
        w.count(&format!("{t}_features"), features.len());
        w.count(&format!("{t}_unassigned"), unassigned);
    }
    w.commit()
}
