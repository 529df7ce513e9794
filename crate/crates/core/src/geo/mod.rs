//! Geospatial primitives: Mercator math, tiles, quarters, masks, rasters and
//! vector features.

mod imagery;
mod mask;
mod mercator;
mod quarter;
mod raster;
mod vector;
pub(crate) use vector::segments_touch;

pub use imagery::{assemble_window, imagery_stem, parse_tile_key, tile_global_origin, DirImagery, ImagerySource};
pub use mask::BitMask;
pub use mercator::{
    ground_resolution, lonlat_to_mercator, mercator_to_lonlat, mercator_y_to_lat, GeoTransform, QuadGrid, TileId,
    EARTH_RADIUS_M, IMAGERY_ZOOM, MAX_LATITUDE, MERCATOR_EXTENT_M, ZOOM0_RESOLUTION,
};
pub use quarter::{quarter_sequence, series_quarters, BuiltDate, Quarter};
pub use raster::{atomic_write, raster_paths, read_raster, reflect, write_raster, Bands, DType, Dihedral, RasterTile};
pub use vector::{
    feature_collection_string, parse_feature_collection, read_feature_collection, ring_signed_area,
    write_feature_collection, GeoFeature, GeoPoint, GeoPolygon, LonLat, Properties,
};

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid tile: {0}")]
    InvalidTile(String),
    #[error("invalid quarter: {0}")]
    InvalidQuarter(String),
    #[error("empty range: {0}")]
    EmptyRange(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ground area of the set pixels, with the pixel size evaluated at `lat_deg`.
pub fn mask_area_m2(mask: &BitMask, transform: &GeoTransform, lat_deg: f64) -> Result<f64, GeoError> {
    if mask.width() != transform.width || mask.height() != transform.height {
        return Err(GeoError::DimensionMismatch(format!(
            "mask {}x{} vs transform {}x{}",
            mask.width(),
            mask.height(),
            transform.width,
            transform.height
        )));
    }
    if !lat_deg.is_finite() || lat_deg.abs() >= 85.05 {
        return Err(GeoError::Domain(format!("latitude {lat_deg} outside the Mercator range")));
    }
    let px = transform.ground_pixel_size(lat_deg);
    Ok(mask.count_ones() as f64 * px * px)
}

/// Latitude of the mask's pixel centroid, if any pixel is set.
pub fn mask_centroid_lat(mask: &BitMask, transform: &GeoTransform) -> Option<f64> {
    mask.centroid().map(|(c, r)| transform.pixel_to_lonlat(c, r).1)
}

/// `mask_area_m2` at the mask's own centroid latitude; 0 for an empty mask.
pub fn mask_area_at_centroid(mask: &BitMask, transform: &GeoTransform) -> Result<f64, GeoError> {
    match mask_centroid_lat(mask, transform) {
        Some(lat) => mask_area_m2(mask, transform, lat),
        None => mask_area_m2(mask, transform, 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn equator_transform(size: usize) -> GeoTransform {
        let tile = TileId::containing(0.0001, 0.0001, QuadGrid::new(256).unwrap().zoom()).unwrap();
        GeoTransform::for_tile(tile, 256).window(0, 0, size, size)
    }

    #[test]
    fn area_of_empty_and_small_masks() {
        let tr = equator_transform(64);
        assert_eq!(mask_area_m2(&BitMask::new(64, 64), &tr, 0.0).unwrap(), 0.0);
        let hundred = BitMask::from_fn(64, 64, |c, r| c < 10 && r < 10);
        let r = ground_resolution(0.0, 15).unwrap();
        let a = mask_area_m2(&hundred, &tr, 0.0).unwrap();
        assert!((a - 100.0 * r * r).abs() < 1e-6);
        // 100 px at 4.7773 m/px
        assert!((a - 2282.27).abs() < 0.1);
        let block = BitMask::from_fn(64, 64, |c, r| c < 50 && r < 50);
        let a = mask_area_m2(&block, &tr, 0.0).unwrap();
        assert!((a - 57_056.8).abs() < 1.0 && a > 10_000.0);
    }

    #[test]
    fn area_rejects_mismatched_mask() {
        let tr = equator_transform(64);
        assert!(matches!(mask_area_m2(&BitMask::new(32, 64), &tr, 0.0), Err(GeoError::DimensionMismatch(_))));
    }

    proptest! {
        #[test]
        fn ground_resolution_monotone(lat in 0.0f64..85.0, dlat in 0.01f64..0.04, z in 0u8..24) {
            let a = ground_resolution(lat, z).unwrap();
            prop_assert!(ground_resolution(lat + dlat, z).unwrap() < a);
            prop_assert!(ground_resolution(-lat - dlat, z).unwrap() < a);
            prop_assert_eq!(ground_resolution(lat, z + 1).unwrap() * 2.0, a);
        }

        #[test]
        fn area_additive_and_monotone(bits_a in proptest::collection::vec(any::<bool>(), 256),
                                      bits_b in proptest::collection::vec(any::<bool>(), 256),
                                      lat in -80.0f64..80.0) {
            let tr = equator_transform(16);
            let a = BitMask::from_fn(16, 16, |c, r| bits_a[r * 16 + c]);
            let b = BitMask::from_fn(16, 16, |c, r| bits_b[r * 16 + c]);
            let b_only = b.difference(&a).unwrap();
            let area = |m: &BitMask| mask_area_m2(m, &tr, lat).unwrap();
            let u = a.union(&b).unwrap();
            prop_assert!((area(&u) - area(&a) - area(&b_only)).abs() < 1e-6 * area(&u).max(1.0));
            prop_assert!(area(&u) >= area(&a) && area(&u) >= area(&b));
        }
    }
}
