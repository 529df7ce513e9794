//! Training patches cut around labels: solar polygons become mask targets,
//! turbine points become point annotations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geo::{GeoError, GeoFeature, GeoTransform, ImagerySource, LonLat, Quarter, TileId};
use crate::lcloss::PointAnnotation;
use crate::scoring::{Target, TrainSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchConfig {
    pub solar_patch: usize,
    pub wind_patch: usize,
    /// Radius in pixels around a known confuser within which false
    /// positives are up-weighted.
    pub confuser_radius: usize,
    pub confuser_weight: f64,
    /// Unannotated wind windows per labeled turbine, drawn away from labels
    /// so the counting loss also sees arrays, roofs and bare ground.
    pub wind_background_ratio: f64,
    pub seed: u64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self { solar_patch: 128, wind_patch: 64, confuser_radius: 3, confuser_weight: 5.0, wind_background_ratio: 0.5, seed: 41 }
    }
}

/// Maps lon/lat to global pixel coordinates of the quad grid.
pub fn global_transform(src: &(impl ImagerySource + ?Sized)) -> GeoTransform {
    let g = src.grid();
    let t = GeoTransform::for_tile(TileId { zoom: g.zoom(), x: 0, y: 0 }, g.quad_size as usize);
    GeoTransform { width: 0, height: 0, ..t }
}

/// Global pixel bounds `[x0, y0, x1, y1)` of the available tiles.
pub(crate) fn coverage(src: &(impl ImagerySource + ?Sized)) -> Result<[i64; 4], GeoError> {
    let tiles = src.tiles();
    if tiles.is_empty() {
        return Err(GeoError::InvalidTile("imagery has no tiles".into()));
    }
    let q = i64::from(src.grid().quad_size);
    let x0 = tiles.iter().map(|t| i64::from(t.x)).min().expect("non-empty");
    let y0 = tiles.iter().map(|t| i64::from(t.y)).min().expect("non-empty");
    let x1 = tiles.iter().map(|t| i64::from(t.x)).max().expect("non-empty");
    let y1 = tiles.iter().map(|t| i64::from(t.y)).max().expect("non-empty");
    Ok([x0 * q, y0 * q, (x1 + 1) * q, (y1 + 1) * q])
}

/// North-west corner of a `size` window centred on (cx, cy), shifted to stay
/// inside `bounds`.
fn place_window(cx: f64, cy: f64, size: usize, bounds: [i64; 4]) -> (i64, i64) {
    let s = size as i64;
    let clamp = |v: i64, lo: i64, hi: i64| if hi - lo < s { lo } else { v.clamp(lo, hi - s) };
    (clamp((cx - size as f64 / 2.0).round() as i64, bounds[0], bounds[2]), clamp((cy - size as f64 / 2.0).round() as i64, bounds[1], bounds[3]))
}

/// Image patch of `size` pixels centred on a feature, kept inside the
/// imagery.
pub fn feature_patch<S: ImagerySource + ?Sized>(
    src: &S,
    quarter: Quarter,
    feature: &GeoFeature,
    size: usize,
) -> Result<crate::geo::RasterTile, GeoError> {
    let gt = global_transform(src);
    let [lon, lat] = match feature {
        GeoFeature::Polygon(p) => {
            let [a, b, c, d] = p.bbox();
            [(a + c) / 2.0, (b + d) / 2.0]
        }
        GeoFeature::Point(p) => [p.lon, p.lat],
    };
    let (x, y) = gt.lonlat_to_pixel(lon, lat);
    let (gx, gy) = place_window(x, y, size, coverage(src)?);
    src.window(quarter, gx, gy, size, size)
}

fn label_id(f: &GeoFeature, index: usize) -> String {
    match f.properties().get("id") {
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(v) if v.is_number() => v.to_string(),
        _ => format!("label-{index}"),
    }
}

/// One mask sample per solar label, centred on it; the target rasterizes
/// every label that reaches into the window.
pub fn solar_samples<S: ImagerySource + ?Sized>(
    src: &S,
    quarter: Quarter,
    labels: &[GeoFeature],
    cfg: &PatchConfig,
) -> Result<Vec<TrainSample>, GeoError> {
    let gt = global_transform(src);
    let bounds = coverage(src)?;
    let polys: Vec<_> = labels.iter().enumerate().filter_map(|(i, f)| f.as_polygon().map(|p| (i, p))).collect();
    let mut out = Vec::with_capacity(polys.len());
    for &(i, p) in &polys {
        let [lon0, lat0, lon1, lat1] = p.bbox();
        let (ax, ay) = gt.lonlat_to_pixel(lon0, lat1);
        let (bx, by) = gt.lonlat_to_pixel(lon1, lat0);
        let (gx, gy) = place_window((ax + bx) / 2.0, (ay + by) / 2.0, cfg.solar_patch, bounds);
        let image = src.window(quarter, gx, gy, cfg.solar_patch, cfg.solar_patch)?;
        let wt = gt.window(gx, gy, cfg.solar_patch, cfg.solar_patch);
        let mut mask = crate::geo::BitMask::new(cfg.solar_patch, cfg.solar_patch);
        for &(_, q) in &polys {
            let [a, b, c, d] = q.bbox();
            let (qx0, qy0) = wt.lonlat_to_pixel(a, d);
            let (qx1, qy1) = wt.lonlat_to_pixel(c, b);
            if qx1 <= 0.0 || qy1 <= 0.0 || qx0 >= cfg.solar_patch as f64 || qy0 >= cfg.solar_patch as f64 {
                continue;
            }
            mask = mask.union(&q.rasterize(&wt))?;
        }
        out.push(TrainSample { id: label_id(&labels[i], i), image, target: Target::Mask(mask), fp_weights: None });
    }
    Ok(out)
}

/// One point sample per turbine label, centred on it; every labeled point
/// inside the window is annotated, and pixels near `confusers` carry
/// `confuser_weight` in the false-positive term.
pub fn wind_samples<S: ImagerySource + ?Sized>(
    src: &S,
    quarter: Quarter,
    labels: &[GeoFeature],
    confusers: &[LonLat],
    cfg: &PatchConfig,
) -> Result<Vec<TrainSample>, GeoError> {
    let gt = global_transform(src);
    let bounds = coverage(src)?;
    let n = cfg.wind_patch;
    let pts: Vec<(usize, f64, f64)> = labels
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.as_point().map(|p| (i, p.lon, p.lat)))
        .map(|(i, lon, lat)| {
            let (x, y) = gt.lonlat_to_pixel(lon, lat);
            (i, x, y)
        })
        .collect();
    let conf: Vec<(f64, f64)> = confusers.iter().map(|c| gt.lonlat_to_pixel(c[0], c[1])).collect();
    let mut out = Vec::with_capacity(pts.len());
    for &(i, x, y) in &pts {
        let (gx, gy) = place_window(x, y, n, bounds);
        let image = src.window(quarter, gx, gy, n, n)?;
        let inside = |px: f64, py: f64| {
            let (c, r) = ((px - gx as f64).floor() as i64, (py - gy as f64).floor() as i64);
            (c >= 0 && r >= 0 && c < n as i64 && r < n as i64).then_some((c as usize, r as usize))
        };
        let mut points: Vec<(usize, usize)> = pts.iter().filter_map(|&(_, px, py)| inside(px, py)).collect();
        points.sort_unstable();
        points.dedup();
        let ann = PointAnnotation::new(n, n, points).map_err(|e| GeoError::Domain(e.to_string()))?;
        let mut weights: Option<Vec<f64>> = None;
        let rad = cfg.confuser_radius as i64;
        for &(cx, cy) in &conf {
            // confusers just outside still weight the border pixels they reach
            let (c, r) = ((cx - gx as f64).floor() as i64, (cy - gy as f64).floor() as i64);
            if c < -rad || r < -rad || c >= n as i64 + rad || r >= n as i64 + rad {
                continue;
            }
            let w = weights.get_or_insert_with(|| vec![1.0; n * n]);
            for yy in (r - rad).max(0)..(r + rad + 1).min(n as i64) {
                for xx in (c - rad).max(0)..(c + rad + 1).min(n as i64) {
                    w[yy as usize * n + xx as usize] = cfg.confuser_weight;
                }
            }
        }
        out.push(TrainSample { id: label_id(&labels[i], i), image, target: Target::Points(ann), fp_weights: weights });
    }
    Ok(out)
}

/// Empty-annotation point windows at seeded random positions whose window
/// holds none of `avoid`.
pub fn background_point_samples<S: ImagerySource + ?Sized>(
    src: &S,
    quarter: Quarter,
    avoid: &[LonLat],
    count: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<TrainSample>, GeoError> {
    let gt = global_transform(src);
    let [x0, y0, x1, y1] = coverage(src)?;
    let s = size as i64;
    if x1 - x0 < s || y1 - y0 < s || count == 0 {
        return Ok(Vec::new());
    }
    let avoid: Vec<(f64, f64)> = avoid.iter().map(|p| gt.lonlat_to_pixel(p[0], p[1])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    // rejection sampling with a bounded number of draws
    for _ in 0..count * 50 {
        if out.len() == count {
            break;
        }
        let gx = rng.random_range(x0..=x1 - s);
        let gy = rng.random_range(y0..=y1 - s);
        let hit = avoid.iter().any(|&(px, py)| px >= gx as f64 && py >= gy as f64 && px < (gx + s) as f64 && py < (gy + s) as f64);
        if hit {
            continue;
        }
        let image = src.window(quarter, gx, gy, size, size)?;
        let ann = PointAnnotation::new(size, size, Vec::new()).map_err(|e| GeoError::Domain(e.to_string()))?;
        out.push(TrainSample { id: format!("bg-{}", out.len()), image, target: Target::Points(ann), fp_weights: None });
    }
    Ok(out)
}
