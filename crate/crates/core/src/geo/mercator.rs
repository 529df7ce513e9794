//! Web-Mercator math: ground resolution, WGS84 <-> EPSG:3857, slippy tiles
//! and the pixel geotransform tying a raster to projected meters.

use serde::{Deserialize, Serialize};

use super::GeoError;

/// WGS84 semi-major axis used by EPSG:3857.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Meters per pixel at the equator for a 256-px tile at zoom 0.
pub const ZOOM0_RESOLUTION: f64 = 156_543.033_92;

/// Zoom level whose 256-px tiles define the imagery pixel size (~4.78 m/px).
pub const IMAGERY_ZOOM: u8 = 15;

/// Latitude limit of the square Web-Mercator world.
pub const MAX_LATITUDE: f64 = 85.051_128_78;

/// Full projected extent of the Mercator square, in meters.
pub const MERCATOR_EXTENT_M: f64 = 2.0 * std::f64::consts::PI * EARTH_RADIUS_M;

/// Ground meters per pixel at `lat_deg` for 256-px tiles at `zoom`.
pub fn ground_resolution(lat_deg: f64, zoom: u8) -> Result<f64, GeoError> {
    if !lat_deg.is_finite() || lat_deg.abs() >= 85.05 {
        return Err(GeoError::Domain(format!(
            "latitude {lat_deg} outside the Mercator range"
        )));
    }
    Ok(ZOOM0_RESOLUTION * lat_deg.to_radians().cos() / 2f64.powi(i32::from(zoom)))
}

pub fn lonlat_to_mercator(lon: f64, lat: f64) -> (f64, f64) {
    let lat = lat.clamp(-MAX_LATITUDE, MAX_LATITUDE);
    let x = EARTH_RADIUS_M * lon.to_radians();
    let y = EARTH_RADIUS_M * (std::f64::consts::FRAC_PI_4 + lat.to_radians() / 2.0).tan().ln();
    (x, y)
}

pub fn mercator_to_lonlat(x: f64, y: f64) -> (f64, f64) {
    let lon = (x / EARTH_RADIUS_M).to_degrees();
    let lat = (2.0 * (y / EARTH_RADIUS_M).exp().atan() - std::f64::consts::FRAC_PI_2).to_degrees();
    (lon, lat)
}

/// Latitude (degrees) of a projected northing.
pub fn mercator_y_to_lat(y: f64) -> f64 {
    mercator_to_lonlat(0.0, y).1
}

/// Slippy-map tile address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileId {
    pub zoom: u8,
    pub x: u32,
    pub y: u32,
}

impl TileId {
    pub fn new(zoom: u8, x: u32, y: u32) -> Result<Self, GeoError> {
        if zoom > 30 {
            return Err(GeoError::InvalidTile(format!("zoom {zoom} too large")));
        }
        let n = 1u64 << zoom;
        if u64::from(x) >= n || u64::from(y) >= n {
            return Err(GeoError::InvalidTile(format!(
                "tile {zoom}/{x}/{y} outside 0..{n}"
            )));
        }
        Ok(Self { zoom, x, y })
    }

    /// Projected size of one tile edge in meters.
    pub fn extent_m(&self) -> f64 {
        MERCATOR_EXTENT_M / 2f64.powi(i32::from(self.zoom))
    }

    /// Projected (x, y) of the tile's north-west corner.
    pub fn origin_mercator(&self) -> (f64, f64) {
        let e = self.extent_m();
        let half = MERCATOR_EXTENT_M / 2.0;
        (-half + f64::from(self.x) * e, half - f64::from(self.y) * e)
    }

    /// Tile containing the given lon/lat.
    pub fn containing(lon: f64, lat: f64, zoom: u8) -> Result<Self, GeoError> {
        let (mx, my) = lonlat_to_mercator(lon, lat);
        let half = MERCATOR_EXTENT_M / 2.0;
        let n = 2f64.powi(i32::from(zoom));
        let x = ((mx + half) / MERCATOR_EXTENT_M * n).floor();
        let y = ((half - my) / MERCATOR_EXTENT_M * n).floor();
        if x < 0.0 || y < 0.0 || x >= n || y >= n {
            return Err(GeoError::InvalidTile(format!("({lon}, {lat}) outside the tile grid")));
        }
        Self::new(zoom, x as u32, y as u32)
    }

    /// `z_x_y` form used for file names and object ids.
    pub fn key(&self) -> String {
        format!("{}_{}_{}", self.zoom, self.x, self.y)
    }
}

impl std::fmt::Display for TileId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.zoom, self.x, self.y)
    }
}

/// Grid of square quads whose pixels always have the zoom-15 imagery
/// resolution. A quad of `quad_size` pixels is a slippy tile at zoom
/// `23 - log2(quad_size)`: 256 px -> 15, 512 px -> 14, 4096 px -> 11.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadGrid {
    pub quad_size: u32,
}

impl QuadGrid {
    pub fn new(quad_size: u32) -> Result<Self, GeoError> {
        if !quad_size.is_power_of_two() || !(16..=1 << 16).contains(&quad_size) {
            return Err(GeoError::InvalidTile(format!(
                "quad size {quad_size} must be a power of two in 16..=65536"
            )));
        }
        Ok(Self { quad_size })
    }

    pub fn zoom(&self) -> u8 {
        (u32::from(IMAGERY_ZOOM) + 8 - self.quad_size.trailing_zeros()) as u8
    }

    pub fn transform(&self, tile: TileId) -> GeoTransform {
        GeoTransform::for_tile(tile, self.quad_size as usize)
    }
}

/// Affine pixel -> Web-Mercator mapping (north-up, square pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    /// Projected meters per pixel (equals ground meters at the equator).
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
}

impl GeoTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_size: f64, width: usize, height: usize) -> Result<Self, GeoError> {
        if !(pixel_size > 0.0) || !pixel_size.is_finite() {
            return Err(GeoError::Domain(format!("pixel size {pixel_size} must be positive")));
        }
        Ok(Self { origin_x, origin_y, pixel_size, width, height })
    }

    pub fn for_tile(tile: TileId, size: usize) -> Self {
        let (ox, oy) = tile.origin_mercator();
        Self {
            origin_x: ox,
            origin_y: oy,
            pixel_size: tile.extent_m() / size as f64,
            width: size,
            height: size,
        }
    }

    /// Projected coordinates of a (fractional) pixel-grid position; integer
    /// arguments address pixel corners, `+0.5` pixel centers.
    pub fn pixel_to_mercator(&self, col: f64, row: f64) -> (f64, f64) {
        (self.origin_x + col * self.pixel_size, self.origin_y - row * self.pixel_size)
    }

    pub fn mercator_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin_x) / self.pixel_size, (self.origin_y - y) / self.pixel_size)
    }

    pub fn pixel_to_lonlat(&self, col: f64, row: f64) -> (f64, f64) {
        let (x, y) = self.pixel_to_mercator(col, row);
        mercator_to_lonlat(x, y)
    }

    pub fn lonlat_to_pixel(&self, lon: f64, lat: f64) -> (f64, f64) {
        let (x, y) = lonlat_to_mercator(lon, lat);
        self.mercator_to_pixel(x, y)
    }

    /// Ground meters spanned by one pixel at `lat_deg`.
    pub fn ground_pixel_size(&self, lat_deg: f64) -> f64 {
        self.pixel_size * lat_deg.to_radians().cos()
    }

    /// Sub-window starting at pixel (`col`, `row`).
    pub fn window(&self, col: i64, row: i64, width: usize, height: usize) -> Self {
        let (ox, oy) = self.pixel_to_mercator(col as f64, row as f64);
        Self { origin_x: ox, origin_y: oy, pixel_size: self.pixel_size, width, height }
    }
}
