//! Point-to-country assignment against boundary polygons.

use std::path::Path;

use crate::geo::{read_feature_collection, GeoError, GeoFeature, GeoPolygon};

pub const UNASSIGNED: &str = "UNASSIGNED";

/// Coastal misses within this distance snap to the nearest country.
pub const COASTAL_SNAP_M: f64 = 25_000.0;

#[derive(Debug, Clone)]
struct Entry {
    iso3: String,
    polygon: GeoPolygon,
    area: f64,
    bbox: [f64; 4],
}

#[derive(Debug, Clone, Default)]
pub struct CountryIndex {
    entries: Vec<Entry>,
}

impl CountryIndex {
    pub fn new(parts: impl IntoIterator<Item = (String, GeoPolygon)>) -> Self {
        let mut entries: Vec<Entry> = parts
            .into_iter()
            .map(|(iso3, polygon)| Entry { area: polygon.mercator_area(), bbox: polygon.bbox(), iso3, polygon })
            .collect();
        entries.sort_by(|a, b| a.iso3.cmp(&b.iso3).then(a.area.total_cmp(&b.area)));
        Self { entries }
    }

    /// Boundary polygons carrying an `iso3` (or `ISO3` / `ISO_A3`) property.
    pub fn from_features(features: &[GeoFeature]) -> Result<Self, GeoError> {
        let mut parts = Vec::new();
        for f in features {
            let Some(poly) = f.as_polygon() else { continue };
            let iso = ["iso3", "ISO3", "ISO_A3"]
                .iter()
                .find_map(|k| f.prop_str(k))
                .ok_or_else(|| GeoError::Format("boundary polygon without iso3 property".into()))?;
            parts.push((iso.to_string(), poly.clone()));
        }
        Ok(Self::new(parts))
    }

    pub fn read(path: &Path) -> Result<Self, GeoError> {
        Self::from_features(&read_feature_collection(path)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest containing polygon wins; otherwise the nearest boundary
    /// within 25 km; otherwise `UNASSIGNED`.
    pub fn assign(&self, lon: f64, lat: f64) -> &str {
        let containing = self
            .entries
            .iter()
            .filter(|e| lon >= e.bbox[0] && lon <= e.bbox[2] && lat >= e.bbox[1] && lat <= e.bbox[3])
            .filter(|e| e.polygon.contains(lon, lat))
            .min_by(|a, b| a.area.total_cmp(&b.area).then_with(|| a.iso3.cmp(&b.iso3)));
        if let Some(e) = containing {
            return &e.iso3;
        }
        let mut best: Option<(f64, &str)> = None;
        for e in &self.entries {
            let d = e.polygon.boundary_distance_m(lon, lat);
            if d <= COASTAL_SNAP_M && best.is_none_or(|(bd, iso)| d < bd || (d == bd && e.iso3.as_str() < iso)) {
                best = Some((d, &e.iso3));
            }
        }
        best.map_or(UNASSIGNED, |(_, iso)| iso)
    }

    /// Assignment of a feature's representative point.
    pub fn assign_feature(&self, feature: &GeoFeature) -> &str {
        let [lon, lat] = feature.representative_point();
        self.assign(lon, lat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> GeoPolygon {
        GeoPolygon::rectangle([x0, y0], [x1, y1]).unwrap()
    }

    fn index() -> CountryIndex {
        CountryIndex::new(vec![
            ("XAA".to_string(), rect(0.0, 0.0, 1.0, 1.0)),
            ("XAB".to_string(), rect(1.0, 0.0, 2.0, 1.0)),
            ("XEN".to_string(), rect(0.4, 0.4, 0.6, 0.6)),
        ])
    }

    #[test]
    fn containment_and_enclave() {
        let idx = index();
        assert_eq!(idx.assign(0.2, 0.2), "XAA");
        assert_eq!(idx.assign(1.5, 0.5), "XAB");
        assert_eq!(idx.assign(0.5, 0.5), "XEN");
    }

    #[test]
    fn coastal_snap_and_unassigned() {
        let idx = index();
        // ~11 km south of XAA
        assert_eq!(idx.assign(0.5, -0.1), "XAA");
        assert_eq!(idx.assign(0.5, -1.0), UNASSIGNED);
    }
}
