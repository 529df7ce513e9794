//! Probability tiles to vector features. Components are labeled per tile and
//! joined across tile seams before tracing, so an installation cut by a quad
//! boundary comes out whole.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde_json::json;

use crate::geo::{
    tile_global_origin, BitMask, GeoError, GeoFeature, GeoPoint, GeoPolygon, GeoTransform, Properties, QuadGrid,
    Quarter, RasterTile, TileId,
};

use super::{connected_components, trace_polygon, Components, Connectivity, UnionFind};

/// A connected set of above-threshold pixels, possibly spanning tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    /// Global pixel of the bounding box's north-west corner.
    pub origin: (i64, i64),
    /// Member pixels within the bounding box.
    pub mask: BitMask,
    pub transform: GeoTransform,
    pub pixel_count: usize,
    pub score_sum: f64,
    /// Sum of member pixel-center coordinates (global pixels).
    pub center_sum: (f64, f64),
    pub tiles: Vec<TileId>,
}

impl Blob {
    pub fn mean_score(&self) -> f64 {
        self.score_sum / self.pixel_count as f64
    }

    /// Mean of the member pixel centers in global pixel coordinates.
    pub fn centroid_px(&self) -> (f64, f64) {
        (self.center_sum.0 / self.pixel_count as f64, self.center_sum.1 / self.pixel_count as f64)
    }
}

/// Transform of a window whose north-west pixel is global pixel (`gx`, `gy`).
pub fn global_window(grid: QuadGrid, gx: i64, gy: i64, w: usize, h: usize) -> Result<GeoTransform, GeoError> {
    let q = i64::from(grid.quad_size);
    let tile = TileId::new(grid.zoom(), gx.div_euclid(q) as u32, gy.div_euclid(q) as u32)?;
    Ok(grid.transform(tile).window(gx.rem_euclid(q), gy.rem_euclid(q), w, h))
}

/// Components of every tile's thresholded probabilities, merged across tile
/// seams, ordered by their first pixel in global raster order.
pub fn merged_blobs(
    tiles: &[RasterTile],
    grid: QuadGrid,
    threshold: f64,
    conn: Connectivity,
) -> Result<Vec<Blob>, GeoError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(GeoError::Domain(format!("threshold {threshold} outside (0, 1)")));
    }
    let q = grid.quad_size as usize;
    if let Some(first) = tiles.first() {
        if let Some(t) = tiles.iter().find(|t| t.quarter != first.quarter) {
            return Err(GeoError::DimensionMismatch(format!("tile {} is from {}, not {}", t.tile_id, t.quarter, first.quarter)));
        }
    }
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    order.sort_by_key(|&i| tiles[i].tile_id);
    if order.windows(2).any(|w| tiles[w[0]].tile_id == tiles[w[1]].tile_id) {
        return Err(GeoError::InvalidTile("duplicate tile in extraction input".into()));
    }
    struct Labeled {
        id: TileId,
        origin: (i64, i64),
        probs: Vec<f32>,
        cc: Components,
    }
    let labeled: Vec<Labeled> = order
        .par_iter()
        .map(|&i| {
            let t = &tiles[i];
            if t.width() != q || t.height() != q {
                return Err(GeoError::DimensionMismatch(format!("tile {} is not {q} px", t.tile_id)));
            }
            let probs = t.target_probabilities()?;
            let mask = BitMask::from_fn(q, q, |c, r| f64::from(probs[r * q + c]) >= threshold);
            Ok(Labeled { id: t.tile_id, origin: tile_global_origin(grid, t.tile_id), cc: connected_components(&mask, conn), probs })
        })
        .collect::<Result<_, GeoError>>()?;

    let mut base = Vec::with_capacity(labeled.len());
    let mut total = 0;
    for l in &labeled {
        base.push(total);
        total += l.cc.count;
    }
    let by_pos: HashMap<(i64, i64), usize> =
        labeled.iter().enumerate().map(|(i, l)| ((i64::from(l.id.x), i64::from(l.id.y)), i)).collect();
    let qi = q as i64;
    let node_at = |gx: i64, gy: i64| -> Option<usize> {
        let &j = by_pos.get(&(gx.div_euclid(qi), gy.div_euclid(qi)))?;
        let l = &labeled[j];
        let lab = l.cc.label((gx - l.origin.0) as usize, (gy - l.origin.1) as usize);
        (lab != 0).then(|| base[j] + lab as usize - 1)
    };
    let mut uf = UnionFind::new(total);
    for (i, l) in labeled.iter().enumerate() {
        let border = (0..q).flat_map(|k| [(k, 0), (k, q - 1), (0, k), (q - 1, k)]);
        for (c, r) in border {
            let lab = l.cc.label(c, r);
            if lab == 0 {
                continue;
            }
            let me = base[i] + lab as usize - 1;
            for &(dx, dy) in conn.offsets() {
                let (x, y) = (c as i64 + dx, r as i64 + dy);
                if x >= 0 && y >= 0 && x < qi && y < qi {
                    continue;
                }
                if let Some(other) = node_at(l.origin.0 + x, l.origin.1 + y) {
                    uf.union(me, other);
                }
            }
        }
    }

    struct Acc {
        pixels: Vec<(i64, i64)>,
        score: f64,
        tiles: BTreeSet<TileId>,
    }
    let mut groups: HashMap<usize, Acc> = HashMap::new();
    for (i, l) in labeled.iter().enumerate() {
        for (idx, &lab) in l.cc.labels.iter().enumerate() {
            if lab == 0 {
                continue;
            }
            let root = uf.find(base[i] + lab as usize - 1);
            let g = groups.entry(root).or_insert_with(|| Acc { pixels: Vec::new(), score: 0.0, tiles: BTreeSet::new() });
            g.pixels.push((l.origin.0 + (idx % q) as i64, l.origin.1 + (idx / q) as i64));
            g.score += f64::from(l.probs[idx]);
            g.tiles.insert(l.id);
        }
    }
    let mut blobs: Vec<((i64, i64), Blob)> = groups
        .into_values()
        .map(|g| {
            let x0 = g.pixels.iter().map(|p| p.0).min().expect("non-empty");
            let x1 = g.pixels.iter().map(|p| p.0).max().expect("non-empty");
            let y0 = g.pixels.iter().map(|p| p.1).min().expect("non-empty");
            let y1 = g.pixels.iter().map(|p| p.1).max().expect("non-empty");
            let (w, h) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
            let mask = BitMask::from_pixels(w, h, g.pixels.iter().map(|&(x, y)| ((x - x0) as usize, (y - y0) as usize)));
            let first = g.pixels.iter().map(|&(x, y)| (y, x)).min().expect("non-empty");
            let center_sum = g.pixels.iter().fold((0.0, 0.0), |a, &(x, y)| (a.0 + x as f64 + 0.5, a.1 + y as f64 + 0.5));
            let transform = global_window(grid, x0, y0, w, h)?;
            Ok((
                first,
                Blob {
                    origin: (x0, y0),
                    mask,
                    transform,
                    pixel_count: g.pixels.len(),
                    score_sum: g.score,
                    center_sum,
                    tiles: g.tiles.into_iter().collect(),
                },
            ))
        })
        .collect::<Result<_, GeoError>>()?;
    blobs.sort_by_key(|(first, _)| *first);
    Ok(blobs.into_iter().map(|(_, b)| b).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedSolar {
    pub id: String,
    pub polygon: GeoPolygon,
    pub area_m2: f64,
    pub pixel_count: usize,
    pub mean_score: f64,
    pub quarter: Quarter,
    pub tiles: Vec<TileId>,
}

impl DetectedSolar {
    pub fn to_feature(&self) -> GeoFeature {
        let mut p = self.polygon.clone();
        p.properties = self.properties();
        GeoFeature::Polygon(p)
    }

    fn properties(&self) -> Properties {
        let mut m = Properties::new();
        m.insert("id".into(), json!(self.id));
        m.insert("area_m2".into(), json!(self.area_m2));
        m.insert("pixel_count".into(), json!(self.pixel_count));
        m.insert("mean_score".into(), json!(self.mean_score));
        m.insert("quarter".into(), json!(self.quarter.to_string()));
        m.insert("tiles".into(), json!(self.tiles.iter().map(|t| t.key()).collect::<Vec<_>>()));
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedTurbine {
    pub id: String,
    pub point: GeoPoint,
    pub blob_area_px: usize,
    pub mean_score: f64,
    pub quarter: Quarter,
    pub tiles: Vec<TileId>,
}

impl DetectedTurbine {
    pub fn to_feature(&self) -> GeoFeature {
        let mut p = self.point.clone();
        p.properties.insert("id".into(), json!(self.id));
        p.properties.insert("blob_area_px".into(), json!(self.blob_area_px));
        p.properties.insert("mean_score".into(), json!(self.mean_score));
        p.properties.insert("quarter".into(), json!(self.quarter.to_string()));
        p.properties.insert("tiles".into(), json!(self.tiles.iter().map(|t| t.key()).collect::<Vec<_>>()));
        GeoFeature::Point(p)
    }
}

fn quarter_of(tiles: &[RasterTile]) -> Quarter {
    tiles.first().map_or(Quarter::SERIES_END, |t| t.quarter)
}

/// Solar polygons: threshold, merge components across seams, trace with
/// holes, keep those of at least `min_area_m2`.
pub fn extract_solar(
    tiles: &[RasterTile],
    grid: QuadGrid,
    threshold: f64,
    min_area_m2: f64,
) -> Result<Vec<DetectedSolar>, GeoError> {
    let quarter = quarter_of(tiles);
    let blobs = merged_blobs(tiles, grid, threshold, Connectivity::Eight)?;
    let traced: Vec<Option<(GeoPolygon, &Blob)>> = blobs
        .par_iter()
        .map(|b| {
            let poly = trace_polygon(&b.mask, &b.transform, Connectivity::Eight, Properties::new())?;
            Ok((poly.area_m2() >= min_area_m2).then_some((poly, b)))
        })
        .collect::<Result<_, GeoError>>()?;
    Ok(traced
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(n, (polygon, b))| DetectedSolar {
            id: format!("solar-{n:06}"),
            area_m2: polygon.area_m2(),
            polygon,
            pixel_count: b.pixel_count,
            mean_score: b.mean_score(),
            quarter,
            tiles: b.tiles.clone(),
        })
        .collect())
}

/// Turbine points at blob centroids.
pub fn extract_turbines(tiles: &[RasterTile], grid: QuadGrid, threshold: f64) -> Result<Vec<DetectedTurbine>, GeoError> {
    let quarter = quarter_of(tiles);
    let blobs = merged_blobs(tiles, grid, threshold, Connectivity::Eight)?;
    blobs
        .iter()
        .enumerate()
        .map(|(n, b)| {
            let (cx, cy) = b.centroid_px();
            let (gx0, gy0) = b.origin;
            let (lon, lat) = b.transform.pixel_to_lonlat(cx - gx0 as f64, cy - gy0 as f64);
            Ok(DetectedTurbine {
                id: format!("wind-{n:06}"),
                point: GeoPoint::new(lon, lat),
                blob_area_px: b.pixel_count,
                mean_score: b.mean_score(),
                quarter,
                tiles: b.tiles.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob_tile(grid: QuadGrid, x: u32, y: u32, f: impl Fn(usize, usize) -> f32) -> RasterTile {
        let id = TileId::new(grid.zoom(), x, y).unwrap();
        let q = grid.quad_size as usize;
        let v: Vec<f32> = (0..q * q).map(|i| f(i % q, i / q)).collect();
        RasterTile::probability(id, grid.transform(id), &v, Quarter::SERIES_END).unwrap()
    }

    #[test]
    fn seam_straddling_block_is_one_blob() {
        let grid = QuadGrid::new(16).unwrap();
        let a = prob_tile(grid, 10, 10, |c, r| if c >= 12 && (4..8).contains(&r) { 0.9 } else { 0.1 });
        let b = prob_tile(grid, 11, 10, |c, r| if c < 3 && (4..8).contains(&r) { 0.9 } else { 0.1 });
        let blobs = merged_blobs(&[b.clone(), a.clone()], grid, 0.5, Connectivity::Eight).unwrap();
        assert_eq!(blobs.len(), 1);
        assert_eq!(blobs[0].pixel_count, 28);
        assert_eq!(blobs[0].mask.width(), 7);
        assert_eq!(blobs[0].tiles.len(), 2);
        // diagonal contact across a tile corner
        let c = prob_tile(grid, 10, 10, |c, r| if c == 15 && r == 15 { 0.9 } else { 0.0 });
        let d = prob_tile(grid, 11, 11, |c, r| if c == 0 && r == 0 { 0.9 } else { 0.0 });
        assert_eq!(merged_blobs(&[c.clone(), d.clone()], grid, 0.5, Connectivity::Eight).unwrap().len(), 1);
        assert_eq!(merged_blobs(&[c, d], grid, 0.5, Connectivity::Four).unwrap().len(), 2);
    }

    #[test]
    fn turbine_centroid_is_pixel_center_mean() {
        let grid = QuadGrid::new(16).unwrap();
        let t = prob_tile(grid, 3, 3, |c, r| if (4..6).contains(&c) && (7..9).contains(&r) { 0.8 } else { 0.0 });
        let out = extract_turbines(&[t.clone()], grid, 0.5).unwrap();
        assert_eq!(out.len(), 1);
        let (lon, lat) = t.transform.pixel_to_lonlat(5.0, 8.0);
        assert!((out[0].point.lon - lon).abs() < 1e-9 && (out[0].point.lat - lat).abs() < 1e-9);
        assert_eq!(out[0].blob_area_px, 4);
        assert!((out[0].mean_score - 0.8).abs() < 1e-6);
    }
}
