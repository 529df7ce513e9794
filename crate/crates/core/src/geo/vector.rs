//! Lon/lat polygons and points with attribute maps, GeoJSON I/O and the
//! planar helpers (area, containment, rasterization) the pipeline needs.

use std::fs;
use std::path::Path;

use geojson::{Feature, FeatureCollection, GeoJson, Geometry, JsonObject, Value};
use serde_json::Value as JsonValue;

use super::mercator::{lonlat_to_mercator, mercator_to_lonlat};
use super::raster::atomic_write;
use super::{BitMask, GeoError, GeoTransform};

pub type Properties = serde_json::Map<String, JsonValue>;

/// (lon, lat) in degrees.
pub type LonLat = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct GeoPolygon {
    /// Closed ring, counter-clockwise in lon/lat.
    pub exterior: Vec<LonLat>,
    /// Closed rings, clockwise in lon/lat.
    pub holes: Vec<Vec<LonLat>>,
    pub properties: Properties,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
    pub properties: Properties,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeoFeature {
    Polygon(GeoPolygon),
    Point(GeoPoint),
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat, properties: Properties::new() }
    }
}

fn close_ring(mut ring: Vec<LonLat>) -> Vec<LonLat> {
    if ring.first() != ring.last() {
        if let Some(&first) = ring.first() {
            ring.push(first);
        }
    }
    ring
}

/// Signed shoelace area of a closed ring in its own coordinate units
/// (positive when counter-clockwise with y up).
pub fn ring_signed_area(ring: &[[f64; 2]]) -> f64 {
    ring.windows(2).map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1]).sum::<f64>() / 2.0
}

fn to_mercator(ring: &[LonLat]) -> Vec<[f64; 2]> {
    ring.iter()
        .map(|p| {
            let (x, y) = lonlat_to_mercator(p[0], p[1]);
            [x, y]
        })
        .collect()
}

impl GeoPolygon {
    /// Builds a polygon, closing rings and normalizing orientation
    /// (exterior CCW, holes CW).
    pub fn new(exterior: Vec<LonLat>, holes: Vec<Vec<LonLat>>) -> Result<Self, GeoError> {
        let mut exterior = close_ring(exterior);
        if ring_signed_area(&exterior) < 0.0 {
            exterior.reverse();
        }
        let holes = holes
            .into_iter()
            .map(|h| {
                let mut h = close_ring(h);
                if ring_signed_area(&h) > 0.0 {
                    h.reverse();
                }
                h
            })
            .collect();
        let p = Self { exterior, holes, properties: Properties::new() };
        p.validate()?;
        Ok(p)
    }

    /// Axis-aligned rectangle from two lon/lat corners.
    pub fn rectangle(min: LonLat, max: LonLat) -> Result<Self, GeoError> {
        Self::new(vec![min, [max[0], min[1]], max, [min[0], max[1]]], vec![])
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<LonLat>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    /// Rings closed, >= 3 distinct vertices each, and no two edges crossing
    /// or touching except consecutive edges at their shared vertex.
    pub fn validate(&self) -> Result<(), GeoError> {
        for ring in self.rings() {
            if ring.len() < 4 || ring.first() != ring.last() {
                return Err(GeoError::InvalidGeometry("ring not closed or too short".into()));
            }
            let mut distinct = ring[..ring.len() - 1].to_vec();
            distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
            distinct.dedup();
            if distinct.len() < 3 {
                return Err(GeoError::InvalidGeometry("ring has fewer than 3 distinct vertices".into()));
            }
            if ring.iter().flatten().any(|v| !v.is_finite()) {
                return Err(GeoError::InvalidGeometry("non-finite coordinate".into()));
            }
        }
        let segments: Vec<(usize, usize, [f64; 2], [f64; 2])> = self
            .rings()
            .enumerate()
            .flat_map(|(ri, ring)| ring.windows(2).enumerate().map(move |(si, w)| (ri, si, w[0], w[1])))
            .collect();
        let ring_len: Vec<usize> = self.rings().map(|r| r.len() - 1).collect();
        for i in 0..segments.len() {
            let (ri, si, a0, a1) = segments[i];
            let (min_ax, max_ax) = (a0[0].min(a1[0]), a0[0].max(a1[0]));
            for &(rj, sj, b0, b1) in &segments[i + 1..] {
                if b0[0].max(b1[0]) < min_ax || b0[0].min(b1[0]) > max_ax {
                    continue;
                }
                let adjacent = ri == rj && (sj == si + 1 || (si == 0 && sj == ring_len[ri] - 1));
                if adjacent {
                    continue;
                }
                if segments_touch(a0, a1, b0, b1) {
                    return Err(GeoError::InvalidGeometry(format!(
                        "ring {ri} edge {si} meets ring {rj} edge {sj}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Planar area in projected meters (exterior minus holes), before any
    /// latitude correction.
    pub fn mercator_area(&self) -> f64 {
        let ext = ring_signed_area(&to_mercator(&self.exterior)).abs();
        let holes: f64 = self.holes.iter().map(|h| ring_signed_area(&to_mercator(h)).abs()).sum();
        ext - holes
    }

    /// Ground area in square meters: shoelace area in Web-Mercator scaled by
    /// cos^2 of the centroid latitude.
    pub fn area_m2(&self) -> f64 {
        let [_, lat] = self.centroid();
        self.mercator_area() * lat.to_radians().cos().powi(2)
    }

    /// Area-weighted centroid (lon, lat), computed in Mercator.
    pub fn centroid(&self) -> LonLat {
        let mut a_sum = 0.0;
        let (mut cx, mut cy) = (0.0, 0.0);
        for (k, ring) in self.rings().enumerate() {
            let m = to_mercator(ring);
            let sign = if k == 0 { 1.0 } else { -1.0 };
            // shift to the first vertex to keep the products well conditioned
            let o = m[0];
            let mut a = 0.0;
            let (mut rx, mut ry) = (0.0, 0.0);
            for w in m.windows(2) {
                let (x0, y0, x1, y1) = (w[0][0] - o[0], w[0][1] - o[1], w[1][0] - o[0], w[1][1] - o[1]);
                let cross = x0 * y1 - x1 * y0;
                a += cross;
                rx += (x0 + x1) * cross;
                ry += (y0 + y1) * cross;
            }
            let a = a / 2.0;
            if a.abs() > 0.0 {
                let (gx, gy) = (rx / (6.0 * a) + o[0], ry / (6.0 * a) + o[1]);
                let wa = sign * a.abs();
                a_sum += wa;
                cx += gx * wa;
                cy += gy * wa;
            }
        }
        if a_sum.abs() == 0.0 {
            let n = (self.exterior.len() - 1).max(1) as f64;
            let lon = self.exterior[..self.exterior.len() - 1].iter().map(|p| p[0]).sum::<f64>() / n;
            let lat = self.exterior[..self.exterior.len() - 1].iter().map(|p| p[1]).sum::<f64>() / n;
            return [lon, lat];
        }
        let (lon, lat) = mercator_to_lonlat(cx / a_sum, cy / a_sum);
        [lon, lat]
    }

    /// (min_lon, min_lat, max_lon, max_lat)
    pub fn bbox(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in &self.exterior {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        }
        b
    }

    /// Even-odd containment over all rings; boundary points count as outside.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        let b = self.bbox();
        if lon < b[0] || lon > b[2] || lat < b[1] || lat > b[3] {
            return false;
        }
        let mut inside = false;
        for ring in self.rings() {
            for w in ring.windows(2) {
                let (a, c) = (w[0], w[1]);
                if (a[1] > lat) != (c[1] > lat) {
                    let x = a[0] + (lat - a[1]) / (c[1] - a[1]) * (c[0] - a[0]);
                    if lon < x {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }

    /// Distance in meters from a point to the nearest polygon edge, using a
    /// local equirectangular approximation.
    pub fn boundary_distance_m(&self, lon: f64, lat: f64) -> f64 {
        let k = 6_371_008.8_f64.to_radians();
        let cos = lat.to_radians().cos();
        let proj = |p: &LonLat| [(p[0] - lon) * cos * k, (p[1] - lat) * k];
        self.rings()
            .flat_map(|r| r.windows(2))
            .map(|w| point_segment_distance([0.0, 0.0], proj(&w[0]), proj(&w[1])))
            .fold(f64::INFINITY, f64::min)
    }

    /// Pixels of `transform` whose centers fall inside the polygon.
    pub fn rasterize(&self, transform: &GeoTransform) -> BitMask {
        let rings: Vec<Vec<(f64, f64)>> = self
            .rings()
            .map(|r| r.iter().map(|p| transform.lonlat_to_pixel(p[0], p[1])).collect())
            .collect();
        let (w, h) = (transform.width, transform.height);
        let mut mask = BitMask::new(w, h);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in rings.iter().flatten() {
            lo = lo.min(p.1);
            hi = hi.max(p.1);
        }
        if !lo.is_finite() {
            return mask;
        }
        let r0 = (lo - 0.5).ceil().max(0.0) as usize;
        let r1 = ((hi - 0.5).floor().min(h as f64 - 1.0)).max(-1.0);
        if r1 < 0.0 {
            return mask;
        }
        let mut xs = Vec::new();
        for row in r0..=r1 as usize {
            let y = row as f64 + 0.5;
            xs.clear();
            for ring in &rings {
                for e in ring.windows(2) {
                    let (a, b) = (e[0], e[1]);
                    if (a.1 > y) != (b.1 > y) {
                        xs.push(a.0 + (y - a.1) / (b.1 - a.1) * (b.0 - a.0));
                    }
                }
            }
            xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            for pair in xs.chunks_exact(2) {
                // pixel centers strictly inside [x0, x1)
                let c0 = (pair[0] - 0.5).ceil().max(0.0) as i64;
                let c1 = ((pair[1] - 0.5).ceil() as i64 - 1).min(w as i64 - 1);
                for c in c0..=c1 {
                    mask.set(c as usize, row, true);
                }
            }
        }
        mask
    }
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// True if closed segments a0-a1 and b0-b1 share any point.
pub(crate) fn segments_touch(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> bool {
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(b0, b1, a0))
        || (d2 == 0.0 && on_segment(b0, b1, a1))
        || (d3 == 0.0 && on_segment(a0, a1, b0))
        || (d4 == 0.0 && on_segment(a0, a1, b1))
}

impl GeoFeature {
    pub fn properties(&self) -> &Properties {
        match self {
            GeoFeature::Polygon(p) => &p.properties,
            GeoFeature::Point(p) => &p.properties,
        }
    }

    pub fn properties_mut(&mut self) -> &mut Properties {
        match self {
            GeoFeature::Polygon(p) => &mut p.properties,
            GeoFeature::Point(p) => &mut p.properties,
        }
    }

    /// Polygon centroid or the point itself.
    pub fn representative_point(&self) -> LonLat {
        match self {
            GeoFeature::Polygon(p) => p.centroid(),
            GeoFeature::Point(p) => [p.lon, p.lat],
        }
    }

    pub fn as_polygon(&self) -> Option<&GeoPolygon> {
        match self {
            GeoFeature::Polygon(p) => Some(p),
            GeoFeature::Point(_) => None,
        }
    }

    pub fn as_point(&self) -> Option<&GeoPoint> {
        match self {
            GeoFeature::Point(p) => Some(p),
            GeoFeature::Polygon(_) => None,
        }
    }

    pub fn prop_str(&self, key: &str) -> Option<&str> {
        self.properties().get(key).and_then(JsonValue::as_str)
    }

    pub fn prop_f64(&self, key: &str) -> Option<f64> {
        self.properties().get(key).and_then(JsonValue::as_f64)
    }

    fn to_geojson(&self) -> Feature {
        let geometry = match self {
            GeoFeature::Polygon(p) => Value::Polygon(
                p.rings().map(|r| r.iter().map(|c| vec![c[0], c[1]]).collect()).collect(),
            ),
            GeoFeature::Point(p) => Value::Point(vec![p.lon, p.lat]),
        };
        let props: JsonObject = self.properties().clone();
        Feature {
            bbox: None,
            geometry: Some(Geometry::new(geometry)),
            id: None,
            properties: Some(props),
            foreign_members: None,
        }
    }

    /// One feature per polygon part; unsupported geometry kinds are an error.
    fn from_geojson(f: Feature) -> Result<Vec<GeoFeature>, GeoError> {
        let props = f.properties.unwrap_or_default();
        let geom = f.geometry.ok_or_else(|| GeoError::Format("feature without geometry".into()))?;
        let polygon = |rings: Vec<Vec<Vec<f64>>>| -> Result<GeoFeature, GeoError> {
            let mut rings = rings.into_iter().map(|r| r.into_iter().map(|c| [c[0], c[1]]).collect::<Vec<_>>());
            let ext = rings.next().ok_or_else(|| GeoError::Format("polygon without rings".into()))?;
            let mut p = GeoPolygon::new(ext, rings.collect())?;
            p.properties = props.clone();
            Ok(GeoFeature::Polygon(p))
        };
        match geom.value {
            Value::Point(c) => Ok(vec![GeoFeature::Point(GeoPoint { lon: c[0], lat: c[1], properties: props })]),
            Value::Polygon(rings) => Ok(vec![polygon(rings)?]),
            Value::MultiPolygon(parts) => parts.into_iter().map(polygon).collect(),
            other => Err(GeoError::Format(format!("unsupported geometry type {}", other.type_name()))),
        }
    }
}

pub fn feature_collection_string(features: &[GeoFeature]) -> String {
    let fc = FeatureCollection {
        bbox: None,
        features: features.iter().map(GeoFeature::to_geojson).collect(),
        foreign_members: None,
    };
    GeoJson::FeatureCollection(fc).to_string()
}

pub fn parse_feature_collection(text: &str) -> Result<Vec<GeoFeature>, GeoError> {
    let gj: GeoJson = text.parse().map_err(|e: geojson::Error| GeoError::Format(e.to_string()))?;
    let features = match gj {
        GeoJson::FeatureCollection(fc) => fc.features,
        GeoJson::Feature(f) => vec![f],
        GeoJson::Geometry(g) => vec![Feature { bbox: None, geometry: Some(g), id: None, properties: None, foreign_members: None }],
    };
    let mut out = Vec::with_capacity(features.len());
    for f in features {
        out.extend(GeoFeature::from_geojson(f)?);
    }
    Ok(out)
}

pub fn write_feature_collection(path: &Path, features: &[GeoFeature]) -> Result<(), GeoError> {
    atomic_write(path, feature_collection_string(features).as_bytes())?;
    Ok(())
}

pub fn read_feature_collection(path: &Path) -> Result<Vec<GeoFeature>, GeoError> {
    let text = fs::read_to_string(path)?;
    parse_feature_collection(&text).map_err(|e| match e {
        GeoError::Format(m) => GeoError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::TileId;

    fn square(lon: f64, lat: f64, d: f64) -> GeoPolygon {
        GeoPolygon::rectangle([lon, lat], [lon + d, lat + d]).unwrap()
    }

    #[test]
    fn orientation_is_normalized_and_rings_closed() {
        let p = GeoPolygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]], vec![]).unwrap();
        assert_eq!(p.exterior.len(), 5);
        assert!(ring_signed_area(&p.exterior) > 0.0);
    }

    #[test]
    fn invalid_rings_rejected() {
        assert!(GeoPolygon::new(vec![[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]], vec![]).is_err());
        // bow tie
        let bow = GeoPolygon::new(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]], vec![]);
        assert!(bow.is_err());
        // hole crossing the exterior
        let crossing = GeoPolygon::new(
            vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]],
            vec![vec![[1.0, 1.0], [3.0, 1.0], [3.0, 1.5], [1.0, 1.5]]],
        );
        assert!(crossing.is_err());
    }

    #[test]
    fn containment_respects_holes() {
        let p = GeoPolygon::new(
            vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]],
            vec![vec![[1.0, 1.0], [3.0, 1.0], [3.0, 3.0], [1.0, 3.0]]],
        )
        .unwrap();
        assert!(p.contains(0.5, 0.5));
        assert!(!p.contains(2.0, 2.0));
        assert!(!p.contains(5.0, 2.0));
    }

    #[test]
    fn area_near_equator_matches_spherical_estimate() {
        // 0.01 deg square at the equator is ~1113.2 m on a side
        let p = square(10.0, 0.0, 0.01);
        let side = 6_378_137.0 * 0.01_f64.to_radians();
        assert!((p.area_m2() / (side * side) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rasterize_tile_aligned_rectangle() {
        let tile = TileId::new(15, 16400, 15000).unwrap();
        let tr = GeoTransform::for_tile(tile, 32);
        let (lon0, lat0) = tr.pixel_to_lonlat(4.0, 6.0);
        let (lon1, lat1) = tr.pixel_to_lonlat(14.0, 9.0);
        let rect = GeoPolygon::rectangle([lon0, lat1], [lon1, lat0]).unwrap();
        let m = rect.rasterize(&tr);
        assert_eq!(m.count_ones(), 30);
        assert!(m.get(4, 6) && m.get(13, 8) && !m.get(14, 8) && !m.get(4, 9));
    }

    #[test]
    fn geojson_round_trip_with_properties() {
        let mut poly = square(1.0, 2.0, 0.5);
        poly.properties.insert("built_quarter".into(), "2019Q2".into());
        let mut pt = GeoPoint::new(3.0, 4.0);
        pt.properties.insert("score".into(), 0.75.into());
        let feats = vec![GeoFeature::Polygon(poly), GeoFeature::Point(pt)];
        let back = parse_feature_collection(&feature_collection_string(&feats)).unwrap();
        assert_eq!(back, feats);
        assert_eq!(back[0].prop_str("built_quarter"), Some("2019Q2"));
    }

    #[test]
    fn boundary_distance_in_meters() {
        let p = square(0.0, 0.0, 0.01);
        let d = p.boundary_distance_m(0.02, 0.005);
        let expected = 6_371_008.8 * 0.01_f64.to_radians();
        assert!((d / expected - 1.0).abs() < 1e-6);
    }
}
