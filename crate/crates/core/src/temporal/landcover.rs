//! 22-class land-cover legend and the coarse 300 m land-cover grid.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geo::{atomic_write, GeoError, GeoFeature, GeoPolygon, GeoTransform};

/// Legend index 0 marks cells (or features) without land-cover data.
pub const MISSING_CLASS: u8 = 0;

/// (ESA CCI code, name) for legend indices 1..=22.
pub const LEGEND: [(u16, &str); 22] = [
    (10, "Cropland, rainfed"),
    (20, "Cropland, irrigated"),
    (30, "Mosaic cropland"),
    (40, "Mosaic natural vegetation"),
    (50, "Tree cover, broadleaved, evergreen"),
    (60, "Tree cover, broadleaved, deciduous"),
    (70, "Tree cover, needleleaved, evergreen"),
    (80, "Tree cover, needleleaved, deciduous"),
    (90, "Tree cover, mixed leaf type"),
    (100, "Mosaic tree and shrub"),
    (110, "Mosaic herbaceous cover"),
    (120, "Shrubland"),
    (130, "Grassland"),
    (140, "Lichens and mosses"),
    (150, "Sparse vegetation"),
    (160, "Tree cover, flooded, fresh water"),
    (170, "Tree cover, flooded, saline water"),
    (180, "Shrub or herbaceous cover, flooded"),
    (190, "Urban areas"),
    (200, "Bare areas"),
    (210, "Water bodies"),
    (220, "Permanent snow and ice"),
];

/// Base imagery color per legend index (index 0 unused).
pub const PALETTE: [[u8; 3]; 23] = [
    [0, 0, 0],
    [176, 160, 100],
    [150, 165, 90],
    [160, 160, 105],
    [135, 150, 95],
    [45, 90, 50],
    [70, 105, 60],
    [40, 80, 55],
    [60, 95, 65],
    [55, 90, 58],
    [110, 125, 80],
    [140, 145, 95],
    [150, 140, 100],
    [165, 170, 110],
    [170, 175, 160],
    [190, 175, 140],
    [60, 100, 80],
    [50, 95, 85],
    [100, 130, 110],
    [150, 145, 145],
    [205, 190, 160],
    [40, 70, 120],
    [240, 240, 245],
];

/// ESA code for a legend index, `None` for missing or unknown indices.
pub fn esa_code(index: u8) -> Option<u16> {
    (1..=22).contains(&index).then(|| LEGEND[usize::from(index) - 1].0)
}

/// Legend index for an ESA code.
pub fn legend_index(code: u16) -> Option<u8> {
    LEGEND.iter().position(|&(c, _)| c == code).map(|i| i as u8 + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GridSidecar {
    transform: GeoTransform,
    year: i32,
}

/// Land-cover classes (legend indices) on a coarse north-up Mercator grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LandCoverGrid {
    pub transform: GeoTransform,
    pub year: i32,
    classes: Vec<u8>,
}

impl LandCoverGrid {
    pub fn new(transform: GeoTransform, year: i32, classes: Vec<u8>) -> Result<Self, GeoError> {
        if classes.len() != transform.width * transform.height {
            return Err(GeoError::DimensionMismatch(format!(
                "{} classes for a {}x{} grid",
                classes.len(),
                transform.width,
                transform.height
            )));
        }
        if let Some(bad) = classes.iter().find(|&&c| c > 22) {
            return Err(GeoError::Domain(format!("land-cover index {bad} outside the legend")));
        }
        Ok(Self { transform, year, classes })
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn class_at_cell(&self, col: usize, row: usize) -> u8 {
        self.classes[row * self.transform.width + col]
    }

    /// Cell containing a lon/lat, if inside the grid.
    pub fn cell_of(&self, lon: f64, lat: f64) -> Option<(usize, usize)> {
        let (c, r) = self.transform.lonlat_to_pixel(lon, lat);
        let (c, r) = (c.floor(), r.floor());
        (c >= 0.0 && r >= 0.0 && c < self.transform.width as f64 && r < self.transform.height as f64)
            .then(|| (c as usize, r as usize))
    }

    /// Legend index at a point; `MISSING_CLASS` outside the grid.
    pub fn class_at(&self, lon: f64, lat: f64) -> u8 {
        self.cell_of(lon, lat).map_or(MISSING_CLASS, |(c, r)| self.class_at_cell(c, r))
    }

    /// Per-class counts of the cells a polygon intersects.
    pub fn intersected_counts(&self, poly: &GeoPolygon) -> BTreeMap<u8, usize> {
        let t = &self.transform;
        let rings: Vec<Vec<[f64; 2]>> = poly
            .rings()
            .map(|r| {
                r.iter()
                    .map(|p| {
                        let (c, r) = t.lonlat_to_pixel(p[0], p[1]);
                        [c, r]
                    })
                    .collect()
            })
            .collect();
        let (mut c0, mut r0, mut c1, mut r1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &rings[0] {
            c0 = c0.min(p[0]);
            c1 = c1.max(p[0]);
            r0 = r0.min(p[1]);
            r1 = r1.max(p[1]);
        }
        let mut counts = BTreeMap::new();
        let clamp = |v: f64, n: usize| v.floor().clamp(0.0, n as f64 - 1.0) as usize;
        if c1 < 0.0 || r1 < 0.0 || c0 >= t.width as f64 || r0 >= t.height as f64 {
            return counts;
        }
        for row in clamp(r0, t.height)..=clamp(r1, t.height) {
            for col in clamp(c0, t.width)..=clamp(c1, t.width) {
                if cell_intersects(&rings, col as f64, row as f64) {
                    let class = self.class_at_cell(col, row);
                    if class != MISSING_CLASS {
                        *counts.entry(class).or_insert(0) += 1;
                    }
                }
            }
        }
        counts
    }

    /// Solar: modal class over intersected cells (ties to the lower code).
    /// Wind: class of the containing cell. Returns the legend index.
    pub fn class_for_feature(&self, feature: &GeoFeature) -> u8 {
        match feature {
            GeoFeature::Point(p) => self.class_at(p.lon, p.lat),
            GeoFeature::Polygon(poly) => mode_lowest(&self.intersected_counts(poly)),
        }
    }

    pub fn write(&self, stem: &Path) -> Result<(), GeoError> {
        atomic_write(&stem.with_extension("bin"), &self.classes)?;
        let meta = serde_json::to_vec_pretty(&GridSidecar { transform: self.transform, year: self.year })
            .map_err(|e| GeoError::Format(e.to_string()))?;
        atomic_write(&stem.with_extension("json"), &meta)?;
        Ok(())
    }

    pub fn read(stem: &Path) -> Result<Self, GeoError> {
        let meta_path = stem.with_extension("json");
        let meta: GridSidecar = serde_json::from_slice(&fs::read(&meta_path)?)
            .map_err(|e| GeoError::Format(format!("{}: {e}", meta_path.display())))?;
        Self::new(meta.transform, meta.year, fs::read(stem.with_extension("bin"))?)
    }
}

/// Most frequent key; ties go to the smallest key. `MISSING_CLASS` when empty.
pub fn mode_lowest(counts: &BTreeMap<u8, usize>) -> u8 {
    let mut best = (MISSING_CLASS, 0usize);
    for (&class, &n) in counts {
        if n > best.1 {
            best = (class, n);
        }
    }
    best.0
}

/// Whether the closed unit cell at (col, row) in grid-pixel space shares any
/// area or boundary with the polygon given by `rings` (grid-pixel space).
fn cell_intersects(rings: &[Vec<[f64; 2]>], col: f64, row: f64) -> bool {
    let corners = [[col, row], [col + 1.0, row], [col + 1.0, row + 1.0], [col, row + 1.0]];
    let inside_cell = |p: &[f64; 2]| p[0] >= col && p[0] <= col + 1.0 && p[1] >= row && p[1] <= row + 1.0;
    if rings[0].iter().any(inside_cell) {
        return true;
    }
    let center = [col + 0.5, row + 0.5];
    if point_in_rings(rings, center) {
        return true;
    }
    for ring in rings {
        for e in ring.windows(2) {
            for k in 0..4 {
                if crate::geo::segments_touch(e[0], e[1], corners[k], corners[(k + 1) % 4]) {
                    return true;
                }
            }
        }
    }
    false
}

fn point_in_rings(rings: &[Vec<[f64; 2]>], p: [f64; 2]) -> bool {
    let mut inside = false;
    for ring in rings {
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoPoint, TileId};

    fn grid(classes: Vec<u8>, w: usize, h: usize) -> LandCoverGrid {
        let tile = TileId::new(12, 2300, 1700).unwrap();
        let base = GeoTransform::for_tile(tile, 256);
        let t = GeoTransform::new(base.origin_x, base.origin_y, 300.0, w, h).unwrap();
        LandCoverGrid::new(t, 2018, classes).unwrap()
    }

    fn cell_rect(g: &LandCoverGrid, c0: f64, r0: f64, c1: f64, r1: f64) -> GeoPolygon {
        let (lon0, lat0) = g.transform.pixel_to_lonlat(c0, r1);
        let (lon1, lat1) = g.transform.pixel_to_lonlat(c1, r0);
        GeoPolygon::rectangle([lon0, lat0], [lon1, lat1]).unwrap()
    }

    #[test]
    fn legend_round_trip() {
        assert_eq!(esa_code(1), Some(10));
        assert_eq!(esa_code(22), Some(220));
        assert_eq!(esa_code(0), None);
        assert_eq!(legend_index(130), Some(13));
        assert_eq!(legend_index(135), None);
    }

    #[test]
    fn polygon_mode_and_tie_break() {
        // row 0: 1 1 1 1 1 ; row 1: 3 3 1 1 1 ... polygon over a 7-cell block
        let g = grid(vec![1, 1, 1, 3, 3, 0, 0, 0, 0, 0], 5, 2);
        let poly = cell_rect(&g, 0.2, 0.2, 4.8, 0.8);
        assert_eq!(g.class_for_feature(&GeoFeature::Polygon(poly)), 1);
        let tie = grid(vec![3, 3, 3, 1, 1, 1], 6, 1);
        let poly = cell_rect(&tie, 0.1, 0.1, 5.9, 0.9);
        assert_eq!(tie.class_for_feature(&GeoFeature::Polygon(poly)), 1);
    }

    #[test]
    fn point_lookup_and_missing() {
        let g = grid(vec![13, 2, 5, 7], 2, 2);
        let (lon, lat) = g.transform.pixel_to_lonlat(0.5, 0.5);
        assert_eq!(esa_code(g.class_for_feature(&GeoFeature::Point(GeoPoint::new(lon, lat)))), Some(130));
        let (lon, lat) = g.transform.pixel_to_lonlat(5.0, 0.5);
        assert_eq!(g.class_at(lon, lat), MISSING_CLASS);
    }

    #[test]
    fn thin_polygon_touching_cells_counts_them() {
        let g = grid((1..=9).collect(), 3, 3);
        // strip inside row 1 spanning all three columns without covering any center
        let poly = cell_rect(&g, 0.1, 1.05, 2.9, 1.2);
        let counts = g.intersected_counts(&poly);
        assert_eq!(counts.keys().copied().collect::<Vec<_>>(), vec![4, 5, 6]);
    }

    #[test]
    fn grid_disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid(vec![1, 2, 3, 4, 5, 6], 3, 2);
        g.write(&dir.path().join("lc")).unwrap();
        assert_eq!(LandCoverGrid::read(&dir.path().join("lc")).unwrap(), g);
    }
}
