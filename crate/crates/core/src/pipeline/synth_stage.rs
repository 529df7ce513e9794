use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::geo::{imagery_stem, quarter_sequence, write_raster, GeoFeature, GeoPoint};
use crate::metrics::{PowerDensitySchedule, Technology};
use crate::synth::{generate_world, FeatureKind, World};

use super::inputs::write_features;
use super::manifest::StageWriter;
use super::{PipelineConfig, PipelineError, RunManifest};

/// Spread of the reporting error applied to synthetic reference statistics.
const REFERENCE_LOG_SD: f64 = 0.15;

pub(super) fn run(cfg: &PipelineConfig, workers: usize) -> Result<RunManifest, PipelineError> {
    let mut w = StageWriter::new("synth", cfg, workers)?;
    let t0 = Instant::now();
    let spec = cfg.world_spec();
    let world = generate_world(&spec)?;
    w.timing("generate", t0);

    let t1 = Instant::now();
    let quarters = quarter_sequence(spec.start_quarter, spec.end_quarter)?;
    let tiles = world.tile_ids();
    let jobs: Vec<_> = quarters.iter().flat_map(|&q| tiles.iter().map(move |&t| (q, t))).collect();
    let root = w.path("imagery");
    jobs.par_iter().try_for_each(|&(q, t)| write_raster(&imagery_stem(&root, q, t), &world.render_tile(t, q)?))?;
    w.timing("render", t1);
    w.manifest.tile_count = tiles.len();
    w.count("quarters", quarters.len());

    write_features(&w, "solar_labels.geojson", &world.label_features(FeatureKind::Solar))?;
    write_features(&w, "wind_labels.geojson", &world.label_features(FeatureKind::Wind))?;
    write_features(&w, "solar_truth.geojson", &world.all_truth_features(FeatureKind::Solar))?;
    write_features(&w, "wind_truth.geojson", &world.all_truth_features(FeatureKind::Wind))?;
    let towers: Vec<GeoFeature> = world
        .tower_pixels()
        .into_iter()
        .map(|(c, r)| {
            let (lon, lat) = world.transform.pixel_to_lonlat(c as f64 + 0.5, r as f64 + 0.5);
            let mut p = GeoPoint::new(lon, lat);
            p.properties.insert("kind".into(), "tower".into());
            GeoFeature::Point(p)
        })
        .collect();
    write_features(&w, "confusers.geojson", &towers)?;
    world.landcover.write(&w.path("landcover"))?;
    let boundaries: Vec<GeoFeature> = world
        .countries
        .iter()
        .map(|(iso, poly)| {
            let mut p = poly.clone();
            p.properties.insert("iso3".into(), iso.clone().into());
            GeoFeature::Polygon(p)
        })
        .collect();
    write_features(&w, "boundaries.geojson", &boundaries)?;
    w.write_bytes("reference.csv", reference_table(&world, &cfg.capacity.schedule).as_bytes())?;
    w.write_json("world.json", &spec)?;

    w.count("solar_features", world.features.iter().filter(|f| f.kind == FeatureKind::Solar).count());
    w.count("wind_features", world.features.iter().filter(|f| f.kind == FeatureKind::Wind).count());
    w.count("labels", world.labels.len());
    w.count("confusers", world.confusers.len());
    w.commit()
}

/// Per-country capacities standing at the end of the world's range, with a
/// seeded log-normal reporting error.
fn reference_table(world: &World, schedule: &PowerDensitySchedule) -> String {
    let end = world.spec.end_quarter;
    let mut totals: BTreeMap<(String, Technology), f64> = BTreeMap::new();
    for iso in world.countries.iter().map(|c| c.0.clone()) {
        totals.insert((iso.clone(), Technology::Solar), 0.0);
        totals.insert((iso, Technology::OnshoreWind), 0.0);
    }
    for f in world.features.iter().filter(|f| f.present_at(end)) {
        let (tech, mw) = match f.kind {
            FeatureKind::Solar => {
                let km2 = f.true_geometry.as_polygon().map_or(0.0, |p| p.area_m2()) / 1e6;
                (Technology::Solar, km2 * schedule.density_for(f.built))
            }
            FeatureKind::Wind => (Technology::OnshoreWind, schedule.wind_mw_per_turbine),
        };
        *totals.entry((f.country.clone(), tech)).or_insert(0.0) += mw;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(world.spec.seed ^ 0x5EF5);
    let noise = Normal::new(0.0, REFERENCE_LOG_SD).expect("valid sd");
    let mut out = String::from("iso3,technology,year,capacity_mw\n");
    for ((iso, tech), mw) in totals {
        let reported = mw * noise.sample(&mut rng).exp();
        out.push_str(&format!("{iso},{},{},{reported:.3}\n", tech.as_str(), end.year()));
    }
    out
}
