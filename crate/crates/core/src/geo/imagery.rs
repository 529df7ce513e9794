//! Access to quarterly imagery quads, from disk or any other provider.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{read_raster, write_raster, Bands, GeoError, QuadGrid, Quarter, RasterTile, TileId};

pub trait ImagerySource: Sync {
    fn grid(&self) -> QuadGrid;

    /// Available tiles, sorted.
    fn tiles(&self) -> Vec<TileId>;

    fn tile(&self, tile: TileId, quarter: Quarter) -> Result<RasterTile, GeoError>;

    /// Window of `w`x`h` pixels whose north-west pixel is global pixel
    /// (`gx`, `gy`) of the quad grid.
    fn window(&self, quarter: Quarter, gx: i64, gy: i64, w: usize, h: usize) -> Result<RasterTile, GeoError> {
        assemble_window(self, quarter, gx, gy, w, h)
    }
}

/// Global pixel of a tile's north-west corner.
pub fn tile_global_origin(grid: QuadGrid, tile: TileId) -> (i64, i64) {
    let q = i64::from(grid.quad_size);
    (i64::from(tile.x) * q, i64::from(tile.y) * q)
}

/// Copies a window out of the tiles that cover it.
pub fn assemble_window<S: ImagerySource + ?Sized>(
    src: &S,
    quarter: Quarter,
    gx: i64,
    gy: i64,
    w: usize,
    h: usize,
) -> Result<RasterTile, GeoError> {
    let grid = src.grid();
    let q = i64::from(grid.quad_size);
    let zoom = grid.zoom();
    let first = TileId::new(zoom, gx.div_euclid(q).max(0) as u32, gy.div_euclid(q).max(0) as u32)?;
    let transform = grid.transform(first).window(gx - i64::from(first.x) * q, gy - i64::from(first.y) * q, w, h);
    let mut channels = 0;
    let mut out: Vec<u8> = Vec::new();
    for ty in gy.div_euclid(q)..=(gy + h as i64 - 1).div_euclid(q) {
        for tx in gx.div_euclid(q)..=(gx + w as i64 - 1).div_euclid(q) {
            if tx < 0 || ty < 0 {
                return Err(GeoError::InvalidTile(format!("window reaches outside the grid at {tx},{ty}")));
            }
            let tile = src.tile(TileId::new(zoom, tx as u32, ty as u32)?, quarter)?;
            let data = tile
                .as_u8()
                .ok_or_else(|| GeoError::Format(format!("imagery tile {} is not 8-bit", tile.tile_id)))?;
            if out.is_empty() {
                channels = tile.channels;
                out = vec![0; w * h * channels];
            } else if tile.channels != channels {
                return Err(GeoError::DimensionMismatch("tiles disagree on channel count".into()));
            }
            let (ox, oy) = (tx * q, ty * q);
            let c0 = gx.max(ox);
            let c1 = (gx + w as i64).min(ox + q);
            for row in gy.max(oy)..(gy + h as i64).min(oy + q) {
                let src_i = ((row - oy) * q + (c0 - ox)) as usize * channels;
                let dst_i = ((row - gy) as usize * w + (c0 - gx) as usize) * channels;
                let n = (c1 - c0) as usize * channels;
                out[dst_i..dst_i + n].copy_from_slice(&data[src_i..src_i + n]);
            }
        }
    }
    RasterTile::new(first, transform, channels, Bands::U8(out), quarter)
}

/// Imagery stored as `<root>/<quarter>/<z_x_y>.{json,bin}`.
#[derive(Debug, Clone)]
pub struct DirImagery {
    root: PathBuf,
    grid: QuadGrid,
    tiles: Vec<TileId>,
}

pub fn imagery_stem(root: &Path, quarter: Quarter, tile: TileId) -> PathBuf {
    root.join(quarter.to_string()).join(tile.key())
}

impl DirImagery {
    /// Indexes every tile found under any quarter directory.
    pub fn open(root: &Path, grid: QuadGrid) -> Result<Self, GeoError> {
        let mut tiles = BTreeSet::new();
        for entry in fs::read_dir(root)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() || entry.file_name().to_string_lossy().parse::<Quarter>().is_err() {
                continue;
            }
            for f in fs::read_dir(entry.path())? {
                let name = f?.file_name().to_string_lossy().into_owned();
                let Some(stem) = name.strip_suffix(".json") else { continue };
                if let Some(t) = parse_tile_key(stem) {
                    if t.zoom == grid.zoom() {
                        tiles.insert(t);
                    }
                }
            }
        }
        Ok(Self { root: root.to_path_buf(), grid, tiles: tiles.into_iter().collect() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn has(&self, tile: TileId, quarter: Quarter) -> bool {
        imagery_stem(&self.root, quarter, tile).with_extension("json").exists()
    }

    pub fn write(root: &Path, tile: &RasterTile) -> Result<(), GeoError> {
        write_raster(&imagery_stem(root, tile.quarter, tile.tile_id), tile)
    }
}

pub fn parse_tile_key(s: &str) -> Option<TileId> {
    let mut it = s.split('_');
    let z = it.next()?.parse().ok()?;
    let x = it.next()?.parse().ok()?;
    let y = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    TileId::new(z, x, y).ok()
}

impl ImagerySource for DirImagery {
    fn grid(&self) -> QuadGrid {
        self.grid
    }

    fn tiles(&self) -> Vec<TileId> {
        self.tiles.clone()
    }

    fn tile(&self, tile: TileId, quarter: Quarter) -> Result<RasterTile, GeoError> {
        let t = read_raster(&imagery_stem(&self.root, quarter, tile))?;
        if t.width() != self.grid.quad_size as usize || t.height() != self.grid.quad_size as usize {
            return Err(GeoError::DimensionMismatch(format!("tile {tile} is not {} px", self.grid.quad_size)));
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Checker;

    impl ImagerySource for Checker {
        fn grid(&self) -> QuadGrid {
            QuadGrid::new(16).unwrap()
        }
        fn tiles(&self) -> Vec<TileId> {
            vec![]
        }
        fn tile(&self, tile: TileId, quarter: Quarter) -> Result<RasterTile, GeoError> {
            let v = (tile.x * 10 + tile.y) as u8;
            RasterTile::new(tile, self.grid().transform(tile), 1, Bands::U8(vec![v; 256]), quarter)
        }
    }

    #[test]
    fn window_spans_four_tiles() {
        let q = Quarter::SERIES_END;
        let w = Checker.window(q, 16 * 3 + 12, 16 * 5 + 14, 8, 4).unwrap();
        let px = w.as_u8().unwrap();
        assert_eq!(px[0], 35);
        assert_eq!(px[7], 45);
        assert_eq!(px[8 * 3], 36);
        assert_eq!(px[8 * 3 + 7], 46);
        let (x, _) = w.transform.pixel_to_mercator(0.0, 0.0);
        let t = Checker.grid().transform(TileId::new(19, 3, 5).unwrap());
        assert!((x - t.pixel_to_mercator(12.0, 0.0).0).abs() < 1e-6);
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let q = Quarter::SERIES_END;
        let tile = TileId::new(19, 7, 9).unwrap();
        let t = Checker.tile(tile, q).unwrap();
        DirImagery::write(dir.path(), &t).unwrap();
        let src = DirImagery::open(dir.path(), QuadGrid::new(16).unwrap()).unwrap();
        assert_eq!(src.tiles(), vec![tile]);
        assert_eq!(src.tile(tile, q).unwrap(), t);
        assert_eq!(parse_tile_key("19_7_9"), Some(tile));
        assert_eq!(parse_tile_key("19_7"), None);
    }
}
