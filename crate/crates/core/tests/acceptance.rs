//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when an
//! enforced criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use renewwatch::cleaning::{clean_dataset, mine_hard_negatives, CleanConfig, CleaningSample, Verdict};
use renewwatch::dataset::{feature_patch, solar_samples, PatchConfig};
use renewwatch::geo::{BitMask, BuiltDate, GeoPolygon, LonLat, Quarter, RasterTile};
use renewwatch::lcloss::{lc_loss_gradient, watershed_split, PatchReduction, PointAnnotation};
use renewwatch::metrics::{
    f2, kendall_tau, pearson_r2, pixel_metrics, polygon_iou, solar_capacity_mw, solar_object_metrics, wind_capacity_mw,
    PowerDensitySchedule, Scores, SOLAR_MATCH_IOU,
};
use renewwatch::pipeline::{bench, run_all, PipelineConfig, RunManifest, Stage};
use renewwatch::postfilter::{apply_filter, detection_features, train_filter, FilterConfig};
use renewwatch::scoring::{binarize, train_linear_scorer, BankParams, FnScorer, MosaiksBank, ScoreError, Scorer, TrainConfig, TrainSample};
use renewwatch::synth::{generate_world, FeatureKind, NoiseRates, World, WorldSpec};
use renewwatch::temporal::{construction_date, QuarterSeries};
use renewwatch::vectorize::{connected_components, dbscan, extract_solar, Connectivity, DetectedSolar};

struct Outcome {
    pass: bool,
    detail: String,
    /// Reason a failure is reported but not enforced on this host.
    waived: Option<String>,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail, waived: None }
}

// 1 -----------------------------------------------------------------------

fn f2_table() -> Outcome {
    // (precision %, recall %, published F2 %)
    let rows = [
        (21.21, 83.49, 52.60),
        (45.17, 72.44, 64.63),
        (45.98, 80.35, 69.90),
        (57.19, 80.59, 74.50),
        (57.73, 80.31, 74.48),
        (59.63, 71.48, 68.75),
        (90.81, 81.63, 83.31),
    ];
    let worst = rows.iter().map(|&(p, r, want)| (100.0 * f2(p / 100.0, r / 100.0) - want).abs()).fold(0.0, f64::max);
    outcome(worst <= 0.05, format!("7 rows, max |F2 - published| = {worst:.4} points (tol 0.05)"))
}

// 2 -----------------------------------------------------------------------

fn capacity_schedule() -> Outcome {
    let s = PowerDensitySchedule::default();
    let q = |y| BuiltDate::Quarter(Quarter::new(y, 2).unwrap());
    let checks = [
        ("pre-series", solar_capacity_mw(1.0, BuiltDate::PreSeries, &s), 51.5),
        ("2017", solar_capacity_mw(1.0, q(2017), &s), 51.5),
        ("2018", solar_capacity_mw(1.0, q(2018), &s), 51.5),
        ("2020", solar_capacity_mw(1.0, q(2020), &s), 60.16),
        ("2022", solar_capacity_mw(1.0, q(2022), &s), 65.9),
        ("2024", solar_capacity_mw(1.0, q(2024), &s), 65.9),
        ("turbine", wind_capacity_mw(1), 3.0),
    ];
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-9)
        .map(|(n, got, want)| format!("{n}: {got} != {want}"))
        .collect();
    outcome(bad.is_empty(), if bad.is_empty() { "51.5 / 60.16 / 65.9 MW/km2 and 3 MW/turbine exact".into() } else { bad.join("; ") })
}

// 3 -----------------------------------------------------------------------

fn lc_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut split_ok = true;
    let cases = 40;
    for case in 0..cases {
        let k = case % 6;
        let mut cells: Vec<(usize, usize)> = (0..64).map(|i| (i % 8, i / 8)).collect();
        for i in 0..k {
            let j = rng.random_range(i..64);
            cells.swap(i, j);
        }
        let ann = PointAnnotation::new(8, 8, cells[..k].to_vec()).unwrap();
        let scores: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
        let reduction = if case % 2 == 0 { PatchReduction::Max } else { PatchReduction::Mean };
        let (b, g) = lc_loss_gradient(&scores, &ann, None, reduction).unwrap();
        if k <= 1 && b.split_term != 0.0 {
            split_ok = false;
        }
        let fd = common::central_gradient(&scores, 1e-4, |z| lc_loss_gradient(z, &ann, None, reduction).unwrap().0.total);
        for (a, n) in g.iter().zip(&fd) {
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
        }
    }
    outcome(
        worst <= 1e-4 && split_ok,
        format!("{cases} cases (0-5 points, max and mean), max relative error {worst:.2e} (tol 1e-4); split term zero for <=1 point: {split_ok}"),
    )
}

// 4 -----------------------------------------------------------------------

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();

    let mut dbscan_ok = 0;
    for seed in 0..50u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<LonLat> = (0..200).map(|_| [31.0 + r.random_range(0.0..0.05), 17.0 + r.random_range(0.0..0.05)]).collect();
        let eps = 300.0;
        if common::canonical(&dbscan(&pts, eps, 1).unwrap()) == common::canonical(&common::eps_graph_components(&pts, eps)) {
            dbscan_ok += 1;
        }
    }
    if dbscan_ok != 50 {
        failures.push(format!("dbscan {dbscan_ok}/50"));
    }

    let mut stat_err = 0.0f64;
    for n in [2usize, 3, 10, 57, 200] {
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..12u8))).collect();
            let y: Vec<f64> = x.iter().map(|v| v + f64::from(rng.random_range(0..8u8))).collect();
            if let Ok(t) = kendall_tau(&x, &y) {
                stat_err = stat_err.max((t - common::kendall_pairs(&x, &y)).abs());
            }
            if let Ok(r2) = pearson_r2(&x, &y) {
                stat_err = stat_err.max((r2 - common::pearson_direct(&x, &y)).abs());
            }
        }
    }
    if stat_err > 1e-12 {
        failures.push(format!("tau/r2 error {stat_err:.1e}"));
    }

    let mut cc_ok = 0;
    for _ in 0..50 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let density = rng.random_range(0.2..0.7);
        let m = BitMask::from_fn(w, h, |_, _| rng.random_bool(density));
        let ok = [Connectivity::Four, Connectivity::Eight].into_iter().all(|conn| {
            let c = connected_components(&m, conn);
            let ours: Vec<Option<u32>> = c.labels.iter().map(|&l| (l != 0).then_some(l)).collect();
            common::canonical(&ours) == common::canonical(&common::flood_fill(&m, conn))
        });
        cc_ok += usize::from(ok);
    }
    if cc_ok != 50 {
        failures.push(format!("components {cc_ok}/50"));
    }

    let mut ws_ok = 0;
    for _ in 0..50 {
        let (w, h) = (rng.random_range(4..24), rng.random_range(4..24));
        let k = rng.random_range(1..6usize).min(w * h);
        let mut seeds = BTreeSet::new();
        while seeds.len() < k {
            seeds.insert((rng.random_range(0..w), rng.random_range(0..h)));
        }
        let seeds: Vec<(usize, usize)> = seeds.into_iter().collect();
        let ws = watershed_split(&PointAnnotation::new(w, h, seeds.clone()).unwrap()).unwrap();
        ws_ok += usize::from(ws.basin == common::nearest_seed(w, h, &seeds));
    }
    if ws_ok != 50 {
        failures.push(format!("watershed {ws_ok}/50"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "dbscan {dbscan_ok}/50 exact, tau-b/r2 max error {stat_err:.1e}, components {cc_ok}/50, watershed {ws_ok}/50{}",
            if failures.is_empty() { String::new() } else { format!(" [{}]", failures.join(", ")) }
        ),
    )
}

// shared helpers for the synthetic-world criteria ----------------------------

fn score_world(world: &World, scorer: &dyn Scorer, q: Quarter) -> Vec<RasterTile> {
    use rayon::prelude::*;
    world.tile_ids().par_iter().map(|&t| scorer.score(&world.render_tile(t, q).unwrap()).unwrap()).collect()
}

fn truth_polys(world: &World, q: Quarter) -> Vec<GeoPolygon> {
    world.truth_features(q, FeatureKind::Solar, false).iter().map(|f| f.as_polygon().unwrap().clone()).collect()
}

/// Pooled pixel scores with rejected polygons erased, and object scores of
/// the kept polygons.
fn evaluate(world: &World, tiles: &[RasterTile], dets: &[DetectedSolar], rejected: &[usize], q: Quarter) -> (Scores, Scores) {
    let qs = world.spec.quad_size as usize;
    let mut parts = Vec::new();
    for (t, p) in world.tile_ids().iter().zip(tiles) {
        let (x0, y0) = world.tile_offset(*t);
        let truth = world.solar_truth_mask(q, x0, y0, qs, qs, true);
        let mut pred = binarize(p, 0.5).unwrap();
        for &i in rejected {
            pred = pred.difference(&dets[i].polygon.rasterize(&p.transform)).unwrap();
        }
        parts.push(pixel_metrics(&pred, &truth).unwrap());
    }
    let kept: Vec<GeoPolygon> =
        dets.iter().enumerate().filter(|(i, _)| !rejected.contains(i)).map(|(_, d)| d.polygon.clone()).collect();
    (Scores::pooled(&parts), solar_object_metrics(&kept, &truth_polys(world, q), SOLAR_MATCH_IOU))
}

fn review(world: &World, q: Quarter, d: &DetectedSolar) -> Verdict {
    if truth_polys(world, q).iter().any(|t| polygon_iou(&d.polygon, t) > 0.0) {
        Verdict::TruePositive
    } else {
        Verdict::FalsePositive
    }
}

fn solar_spec(seed: u64) -> WorldSpec {
    WorldSpec { seed, solar_count: 60, wind_count: 0, ..WorldSpec::default() }
}

fn trainer<'a>(bank: &'a MosaiksBank, cfg: &'a TrainConfig) -> impl Fn(&[TrainSample]) -> Result<Box<dyn Scorer>, ScoreError> + Sync + 'a {
    move |s: &[TrainSample]| -> Result<Box<dyn Scorer>, ScoreError> { Ok(Box::new(train_linear_scorer(bank.clone(), s, cfg)?)) }
}

fn active(samples: &[CleaningSample]) -> Vec<TrainSample> {
    samples.iter().filter(|s| s.status.in_training()).map(|s| s.sample.clone()).collect()
}

// 5 -----------------------------------------------------------------------

fn cleaning_efficacy() -> Outcome {
    let spec = solar_spec(1);
    let world = generate_world(&spec).unwrap();
    let test = generate_world(&WorldSpec { seed: 1001, noise: NoiseRates::ZERO, ..spec.clone() }).unwrap();
    let labels = world.label_features(FeatureKind::Solar);
    let noisy: BTreeMap<String, bool> =
        labels.iter().map(|f| (f.properties()["id"].to_string(), f.prop_str("noise_mode") != Some("none"))).collect();
    let injected = noisy.values().filter(|&&n| n).count() as f64 / noisy.len() as f64;
    let samples = solar_samples(&world, spec.label_quarter, &labels, &PatchConfig::default()).unwrap();
    let bank = MosaiksBank::new(BankParams::default()).unwrap();
    let cfg = TrainConfig::default();
    let fit = trainer(&bank, &cfg);

    let end = Quarter::SERIES_END;
    let base = fit(&samples).unwrap();
    let bt = score_world(&test, base.as_ref(), end);
    let (bp, bo) = evaluate(&test, &bt, &extract_solar(&bt, test.grid, 0.5, 10_000.0).unwrap(), &[], end);

    let (cleaned, _) = clean_dataset(samples.into_iter().map(CleaningSample::new).collect(), &fit, &CleanConfig::default()).unwrap();
    let dropped: Vec<&CleaningSample> = cleaned.iter().filter(|s| !s.status.in_training()).collect();
    let dropped_noisy = dropped.iter().filter(|s| noisy[s.id()]).count();
    let drop_precision = if dropped.is_empty() { 0.0 } else { dropped_noisy as f64 / dropped.len() as f64 };
    let clean = fit(&active(&cleaned)).unwrap();
    let ct = score_world(&test, clean.as_ref(), end);
    let (cp, co) = evaluate(&test, &ct, &extract_solar(&ct, test.grid, 0.5, 10_000.0).unwrap(), &[], end);

    let dp = 100.0 * (co.precision - bo.precision);
    let df2 = 100.0 * (cp.f2 - bp.f2);
    outcome(
        dp >= 10.0 && df2 >= 5.0 && drop_precision >= 0.8,
        format!(
            "label noise {:.0}%: object precision {:.1}% -> {:.1}% (+{dp:.1}, need 10), pixel F2 {:.1} -> {:.1} (+{df2:.1}, need 5), dropped-sample precision {dropped_noisy}/{} = {:.0}% (need 80%)",
            100.0 * injected,
            100.0 * bo.precision,
            100.0 * co.precision,
            100.0 * bp.f2,
            100.0 * cp.f2,
            dropped.len(),
            100.0 * drop_precision
        ),
    )
}

// 6 -----------------------------------------------------------------------

fn filter_direction() -> Outcome {
    let seed = 1;
    let spec = solar_spec(seed);
    let world = generate_world(&WorldSpec { greenhouse_count: 0, ..spec.clone() }).unwrap();
    let test = generate_world(&WorldSpec { seed: seed + 1000, noise: NoiseRates::ZERO, ..spec.clone() }).unwrap();
    let (lq, end) = (spec.label_quarter, Quarter::SERIES_END);
    let labels = world.label_features(FeatureKind::Solar);
    let samples = solar_samples(&world, lq, &labels, &PatchConfig::default()).unwrap();
    let bank = MosaiksBank::new(BankParams::default()).unwrap();
    let cfg = TrainConfig::default();
    let fit = trainer(&bank, &cfg);
    let (cleaned, _) = clean_dataset(samples.into_iter().map(CleaningSample::new).collect(), &fit, &CleanConfig::default()).unwrap();
    let c = fit(&active(&cleaned)).unwrap();

    // hard negatives from the cleaned model's detections on the training world
    let wt = score_world(&world, c.as_ref(), lq);
    let mut cands = Vec::new();
    let mut verdicts = Vec::new();
    for d in extract_solar(&wt, world.grid, 0.5, 10_000.0).unwrap() {
        cands.push((d.id.clone(), feature_patch(&world, lq, &d.to_feature(), 128).unwrap()));
        verdicts.push((d.id.clone(), review(&world, lq, &d)));
    }
    let with_hn = mine_hard_negatives(cleaned, &cands, &verdicts, false).unwrap();
    let h = fit(&active(&with_hn)).unwrap();
    let tiles = score_world(&test, h.as_ref(), end);
    let dets = extract_solar(&tiles, test.grid, 0.5, 10_000.0).unwrap();
    let (p1, o1) = evaluate(&test, &tiles, &dets, &[], end);

    // 300 reviewed detections from further worlds
    let mut feats = BTreeMap::new();
    let mut fv = Vec::new();
    let mut k = 0;
    while fv.len() < 300 && k < 8 {
        let lw = generate_world(&WorldSpec { seed: seed + 2000 + k, ..spec.clone() }).unwrap();
        let lt = score_world(&lw, h.as_ref(), end);
        for d in extract_solar(&lt, lw.grid, 0.5, 10_000.0).unwrap() {
            if fv.len() >= 300 {
                break;
            }
            let id = format!("w{k}-{}", d.id);
            feats.insert(id.clone(), detection_features(&lw, end, &d.to_feature(), &bank).unwrap());
            fv.push((id, review(&lw, end, &d)));
        }
        k += 1;
    }
    let model = train_filter(&feats, &fv, &FilterConfig::default()).unwrap();
    let det_feats: Vec<(String, Vec<f32>)> =
        dets.iter().map(|d| (d.id.clone(), detection_features(&test, end, &d.to_feature(), &bank).unwrap())).collect();
    let out = apply_filter(&model, &det_feats).unwrap();
    let rejected: Vec<usize> = out.rejected.iter().map(|r| dets.iter().position(|d| d.id == r.id).unwrap()).collect();
    let (p2, o2) = evaluate(&test, &tiles, &dets, &rejected, end);
    let dpix = 100.0 * (p2.f2 - p1.f2);
    outcome(
        o2.precision > o1.precision && dpix.abs() < 1.0,
        format!(
            "{} verdicts: object precision {:.1}% -> {:.1}%, pixel F2 {:.2} -> {:.2} (change {dpix:+.2}, need |change| < 1), {} of {} rejected",
            fv.len(),
            100.0 * o1.precision,
            100.0 * o2.precision,
            100.0 * p1.f2,
            100.0 * p2.f2,
            rejected.len(),
            dets.len()
        ),
    )
}

// 7 -----------------------------------------------------------------------

fn dating() -> Outcome {
    let quarters = renewwatch::geo::series_quarters();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut n, mut exact, mut sentinel_ok) = (0usize, 0usize, true);
    for seed in 1..=3 {
        let world = generate_world(&WorldSpec { seed, ..WorldSpec::default() }).unwrap();
        for f in world.features.iter().filter(|f| !f.decoy) {
            let clean: Vec<f64> = match f.kind {
                FeatureKind::Solar => {
                    let r = f.rect;
                    let t = world.transform.window(r.x, r.y, r.w as usize, r.h as usize);
                    let extent = f.true_geometry.as_polygon().unwrap().rasterize(&t);
                    quarters
                        .iter()
                        .map(|&q| {
                            let m = world.solar_truth_mask(q, r.x, r.y, r.w as usize, r.h as usize, true);
                            renewwatch::temporal::positive_fraction(&extent, &m).unwrap()
                        })
                        .collect()
                }
                FeatureKind::Wind => quarters.iter().map(|&q| f64::from(u8::from(f.present_at(q)))).collect(),
            };
            let noisy: Vec<f64> = clean.iter().map(|v| (v + rng.random_range(-0.05..=0.05)).clamp(0.0, 1.0)).collect();
            let est = construction_date(&QuarterSeries::new(f.id.to_string(), noisy).unwrap(), 0.10);
            n += 1;
            exact += usize::from(est.built == f.built);
            sentinel_ok &= (est.built == BuiltDate::PreSeries) == (f.built == BuiltDate::PreSeries);
        }
    }
    let rate = exact as f64 / n as f64;
    outcome(
        rate >= 0.95 && sentinel_ok,
        format!("{exact}/{n} exact ({:.1}%, need 95%), sentinel iff pre-series: {sentinel_ok}", 100.0 * rate),
    )
}

// 8 -----------------------------------------------------------------------

fn small_pipeline(dir: &std::path::Path, workers: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig { workers, stage_dir: dir.to_path_buf(), ..PipelineConfig::default() };
    cfg.synth = WorldSpec {
        tiles_x: 2,
        tiles_y: 2,
        solar_count: 14,
        wind_count: 40,
        decoy_count: 2,
        bright_roof_count: 10,
        dark_roof_count: 4,
        tower_count: 8,
        bare_lot_count: 3,
        greenhouse_count: 2,
        countries_x: 2,
        countries_y: 1,
        ..WorldSpec::default()
    };
    cfg
}

fn stage_files(dir: &std::path::Path) -> BTreeMap<String, Vec<renewwatch::pipeline::FileEntry>> {
    Stage::ALL
        .into_iter()
        .filter(|s| *s != Stage::Bench)
        .map(|s| (s.dir().to_string(), RunManifest::read(&dir.join(s.dir())).unwrap().files))
        .collect()
}

fn determinism_and_scaling() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for workers in [1, 2, 4] {
        let dir = root.path().join(format!("w{workers}"));
        run_all(&small_pipeline(&dir, workers)).unwrap();
        digests.push(stage_files(&dir));
    }
    let files: usize = digests[0].values().map(Vec::len).sum();
    let identical = digests.iter().all(|d| *d == digests[0]);

    let cfg = small_pipeline(&root.path().join("w1"), 1);
    let report = bench(&cfg, &[1, 2, 4]).unwrap();
    let eff4 = report.row(4).map_or(0.0, |r| r.efficiency);
    let cores = report.available_parallelism;
    let scaling = eff4 >= 0.7;
    let detail = format!(
        "pipeline outputs across workers 1/2/4: {} ({files} files); bench {} quads of {} px, outputs identical: {}; efficiency at 4 workers {eff4:.2} (need 0.7), {:.2} / {:.2} / {:.2} quads/s",
        if identical { "byte-identical" } else { "DIFFER" },
        report.quads,
        report.quad_size,
        report.deterministic,
        report.rows[0].quads_per_second,
        report.rows[1].quads_per_second,
        report.rows[2].quads_per_second,
    );
    let waived = (!scaling && cores < 4).then(|| format!("host exposes {cores} core(s); 4-worker efficiency needs at least 4"));
    Outcome { pass: identical && report.deterministic && scaling, detail, waived: if identical && report.deterministic { waived } else { None } }
}

// 9 -----------------------------------------------------------------------

fn geometry() -> Outcome {
    let world = generate_world(&WorldSpec::default()).unwrap();
    let end = Quarter::SERIES_END;
    let qs = world.spec.quad_size as i64;
    let oracle = FnScorer(|t: &RasterTile| -> Result<Vec<f32>, ScoreError> {
        let (x0, y0) = world.tile_offset(t.tile_id);
        let m = world.solar_truth_mask(end, x0, y0, t.width(), t.height(), true);
        Ok((0..m.len()).map(|i| f32::from(u8::from(m.get_index(i)))).collect())
    });
    let tiles = score_world(&world, &oracle, end);
    let all = extract_solar(&tiles, world.grid, 0.5, 0.0).unwrap();
    let kept = extract_solar(&tiles, world.grid, 0.5, 10_000.0).unwrap();
    let solar: Vec<_> = world.features.iter().filter(|f| f.kind == FeatureKind::Solar && f.present_at(end)).collect();
    let hits = |d: &DetectedSolar| -> Vec<u32> {
        solar.iter().filter(|f| polygon_iou(&d.polygon, f.true_geometry.as_polygon().unwrap()) > 0.0).map(|f| f.id).collect()
    };

    let seam: Vec<_> = solar.iter().filter(|f| f.rect.x.div_euclid(qs) != (f.rect.x + f.rect.w - 1).div_euclid(qs)).collect();
    let seam_ok = !seam.is_empty()
        && seam.iter().all(|f| {
            let on: Vec<&DetectedSolar> = kept.iter().filter(|d| hits(d).contains(&f.id)).collect();
            on.len() == 1 && on[0].tiles.len() >= 2
        });

    let mut worst_area = 0.0f64;
    for d in &all {
        let lat = d.polygon.centroid()[1];
        let px = world.transform.ground_pixel_size(lat);
        let pixel_area = d.pixel_count as f64 * px * px;
        worst_area = worst_area.max((d.polygon.area_m2() - pixel_area).abs() / pixel_area);
    }

    let kept_ids: BTreeSet<&str> = kept.iter().map(|d| d.id.as_str()).collect();
    let _ = kept_ids;
    let kept_features: BTreeSet<u32> = kept.iter().flat_map(hits).collect();
    let removed_features: BTreeSet<u32> = all.iter().filter(|d| d.area_m2 < 10_000.0).flat_map(hits).collect();
    let decoys: BTreeSet<u32> = solar.iter().filter(|f| f.decoy).map(|f| f.id).collect();
    let real: BTreeSet<u32> = solar.iter().filter(|f| !f.decoy).map(|f| f.id).collect();
    let filter_ok = removed_features == decoys && kept_features == real && all.len() - kept.len() == decoys.len();

    outcome(
        seam_ok && worst_area <= 0.01 && filter_ok,
        format!(
            "seam array as one polygon: {seam_ok}; max shoelace vs pixel area gap {:.3}% (tol 1%); min-area filter removed {} polygons, exactly the {} decoys: {filter_ok}",
            100.0 * worst_area,
            all.len() - kept.len(),
            decoys.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("F2 cross-check", f2_table),
        ("capacity schedule", capacity_schedule),
        ("LC loss gradients", lc_gradients),
        ("oracle equivalence", oracles),
        ("cleaning efficacy", cleaning_efficacy),
        ("FP filter direction", filter_direction),
        ("construction dating", dating),
        ("determinism and scaling", determinism_and_scaling),
        ("geometry", geometry),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let secs = t.elapsed().as_secs_f64();
        let status = match (o.pass, &o.waived) {
            (true, _) => "PASS".to_string(),
            (false, Some(why)) => format!("FAIL (not enforced: {why})"),
            (false, None) => {
                failed += 1;
                "FAIL".to_string()
            }
        };
        println!("criterion {}: {name}: {status} | {} | {secs:.1} s", i + 1, o.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
