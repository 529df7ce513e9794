//! Georeferenced raster tiles and their on-disk form: a raw little-endian
//! band file plus a JSON sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GeoError, GeoTransform, Quarter, TileId};

/// Pixel-interleaved band data (`index = (row * width + col) * channels + c`).
#[derive(Debug, Clone, PartialEq)]
pub enum Bands {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl Bands {
    pub fn len(&self) -> usize {
        match self {
            Bands::U8(v) => v.len(),
            Bands::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> DType {
        match self {
            Bands::U8(_) => DType::U8,
            Bands::F32(_) => DType::F32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    F32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterTile {
    pub tile_id: TileId,
    pub transform: GeoTransform,
    pub channels: usize,
    pub bands: Bands,
    pub quarter: Quarter,
}

impl RasterTile {
    pub fn new(
        tile_id: TileId,
        transform: GeoTransform,
        channels: usize,
        bands: Bands,
        quarter: Quarter,
    ) -> Result<Self, GeoError> {
        let expected = transform.width * transform.height * channels;
        if channels == 0 || bands.len() != expected {
            return Err(GeoError::DimensionMismatch(format!(
                "band length {} != {}x{}x{}",
                bands.len(),
                transform.width,
                transform.height,
                channels
            )));
        }
        if let Bands::F32(v) = &bands {
            if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(GeoError::Domain(format!("non-finite band value {bad}")));
            }
        }
        Ok(Self { tile_id, transform, channels, bands, quarter })
    }

    /// Probability raster with `[background, target]` channels per pixel.
    pub fn probability(
        tile_id: TileId,
        transform: GeoTransform,
        target: &[f32],
        quarter: Quarter,
    ) -> Result<Self, GeoError> {
        if let Some(p) = target.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(GeoError::Domain(format!("probability {p} outside [0,1]")));
        }
        let mut data = Vec::with_capacity(target.len() * 2);
        for &p in target {
            data.push(1.0 - p);
            data.push(p);
        }
        Self::new(tile_id, transform, 2, Bands::F32(data), quarter)
    }

    pub fn width(&self) -> usize {
        self.transform.width
    }

    pub fn height(&self) -> usize {
        self.transform.height
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.bands {
            Bands::U8(v) => Some(v),
            Bands::F32(_) => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.bands {
            Bands::F32(v) => Some(v),
            Bands::U8(_) => None,
        }
    }

    /// Channel value as f32 (u8 imagery is returned unscaled).
    #[inline]
    pub fn value(&self, col: usize, row: usize, channel: usize) -> f32 {
        let i = (row * self.width() + col) * self.channels + channel;
        match &self.bands {
            Bands::U8(v) => f32::from(v[i]),
            Bands::F32(v) => v[i],
        }
    }

    /// Target-class probabilities of a probability raster (last channel).
    pub fn target_probabilities(&self) -> Result<Vec<f32>, GeoError> {
        let v = self
            .as_f32()
            .ok_or_else(|| GeoError::Format("probability raster must be f32".into()))?;
        let ch = self.channels;
        Ok(v.chunks_exact(ch).map(|px| px[ch - 1]).collect())
    }

    /// Window copy with reflect padding for pixels outside the tile.
    pub fn crop_reflect(&self, col: i64, row: i64, width: usize, height: usize) -> RasterTile {
        let (w, h, ch) = (self.width() as i64, self.height() as i64, self.channels);
        let src = |c: i64, r: i64| (reflect(r, h) * w + reflect(c, w)) as usize * ch;
        let bands = match &self.bands {
            Bands::U8(v) => {
                let mut out = Vec::with_capacity(width * height * ch);
                for r in 0..height as i64 {
                    for c in 0..width as i64 {
                        let s = src(col + c, row + r);
                        out.extend_from_slice(&v[s..s + ch]);
                    }
                }
                Bands::U8(out)
            }
            Bands::F32(v) => {
                let mut out = Vec::with_capacity(width * height * ch);
                for r in 0..height as i64 {
                    for c in 0..width as i64 {
                        let s = src(col + c, row + r);
                        out.extend_from_slice(&v[s..s + ch]);
                    }
                }
                Bands::F32(out)
            }
        };
        RasterTile {
            tile_id: self.tile_id,
            transform: self.transform.window(col, row, width, height),
            channels: ch,
            bands,
            quarter: self.quarter,
        }
    }

    /// Copy under a quarter-turn/flip transform; the geotransform is kept as-is
    /// since transformed copies only feed training.
    pub fn transformed(&self, t: Dihedral) -> RasterTile {
        let (w, h) = (self.width(), self.height());
        let (ow, oh) = t.output_dims(w, h);
        let ch = self.channels;
        let idx = |c: usize, r: usize| {
            let (sc, sr) = t.source_pixel(c, r, w, h);
            (sr * w + sc) * ch
        };
        let bands = match &self.bands {
            Bands::U8(v) => Bands::U8(
                (0..oh).flat_map(|r| (0..ow).map(move |c| (c, r))).flat_map(|(c, r)| {
                    let s = idx(c, r);
                    v[s..s + ch].to_vec()
                }).collect(),
            ),
            Bands::F32(v) => Bands::F32(
                (0..oh).flat_map(|r| (0..ow).map(move |c| (c, r))).flat_map(|(c, r)| {
                    let s = idx(c, r);
                    v[s..s + ch].to_vec()
                }).collect(),
            ),
        };
        let mut transform = self.transform;
        transform.width = ow;
        transform.height = oh;
        RasterTile { tile_id: self.tile_id, transform, channels: ch, bands, quarter: self.quarter }
    }
}

/// Reflect-101 index into `0..n` (`-1 -> 1`, `n -> n-2`).
#[inline]
pub fn reflect(i: i64, n: i64) -> i64 {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    if m < n {
        m
    } else {
        period - m
    }
}

/// The eight symmetries of the square: optional transpose, then optional
/// horizontal and vertical flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Dihedral {
    pub transpose: bool,
    pub flip_x: bool,
    pub flip_y: bool,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral { transpose: false, flip_x: false, flip_y: false };

    pub fn output_dims(&self, w: usize, h: usize) -> (usize, usize) {
        if self.transpose {
            (h, w)
        } else {
            (w, h)
        }
    }

    /// Source pixel for output pixel (`c`, `r`) of a `w`x`h` input.
    #[inline]
    pub fn source_pixel(&self, c: usize, r: usize, w: usize, h: usize) -> (usize, usize) {
        let (ow, oh) = self.output_dims(w, h);
        let c = if self.flip_x { ow - 1 - c } else { c };
        let r = if self.flip_y { oh - 1 - r } else { r };
        if self.transpose {
            (r, c)
        } else {
            (c, r)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    tile: TileId,
    transform: GeoTransform,
    quarter: Quarter,
    channels: usize,
    dtype: DType,
}

/// `<stem>.json` / `<stem>.bin` paths for a raster stem.
pub fn raster_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Writes both files through a temporary name and renames them into place.
pub fn write_raster(stem: &Path, tile: &RasterTile) -> Result<(), GeoError> {
    let (meta_path, bin_path) = raster_paths(stem);
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir)?;
    }
    let sidecar = Sidecar {
        tile: tile.tile_id,
        transform: tile.transform,
        quarter: tile.quarter,
        channels: tile.channels,
        dtype: tile.bands.dtype(),
    };
    let mut raw = Vec::with_capacity(tile.bands.len() * 4);
    match &tile.bands {
        Bands::U8(v) => raw.extend_from_slice(v),
        Bands::F32(v) => v.iter().for_each(|x| raw.extend_from_slice(&x.to_le_bytes())),
    }
    atomic_write(&bin_path, &raw)?;
    let meta = serde_json::to_vec_pretty(&sidecar).map_err(|e| GeoError::Format(e.to_string()))?;
    atomic_write(&meta_path, &meta)?;
    Ok(())
}

pub fn read_raster(stem: &Path) -> Result<RasterTile, GeoError> {
    let (meta_path, bin_path) = raster_paths(stem);
    let meta = fs::read(&meta_path)?;
    let sidecar: Sidecar = serde_json::from_slice(&meta)
        .map_err(|e| GeoError::Format(format!("{}: {e}", meta_path.display())))?;
    let raw = fs::read(&bin_path)?;
    let bands = match sidecar.dtype {
        DType::U8 => Bands::U8(raw),
        DType::F32 => {
            if raw.len() % 4 != 0 {
                return Err(GeoError::Format(format!("{}: truncated f32 data", bin_path.display())));
            }
            Bands::F32(raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
        }
    };
    RasterTile::new(sidecar.tile, sidecar.transform, sidecar.channels, bands, sidecar.quarter)
}

/// Write-to-temp then rename, so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile() -> (TileId, GeoTransform, Quarter) {
        let id = TileId::new(14, 8000, 7000).unwrap();
        (id, GeoTransform::for_tile(id, 4), "2020Q1".parse().unwrap())
    }

    #[test]
    fn band_length_is_validated() {
        let (id, tr, q) = tile();
        assert!(RasterTile::new(id, tr, 3, Bands::U8(vec![0; 48]), q).is_ok());
        assert!(RasterTile::new(id, tr, 3, Bands::U8(vec![0; 47]), q).is_err());
        assert!(RasterTile::probability(id, tr, &[1.5; 16], q).is_err());
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (id, tr, q) = tile();
        let probs: Vec<f32> = (0..16).map(|i| i as f32 / 16.0).collect();
        let t = RasterTile::probability(id, tr, &probs, q).unwrap();
        let stem = dir.path().join("a/b/tile");
        write_raster(&stem, &t).unwrap();
        assert_eq!(read_raster(&stem).unwrap(), t);
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<i64> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn dihedral_group_acts_on_pixels() {
        let (id, _, q) = tile();
        let tr = GeoTransform::new(0.0, 0.0, 1.0, 3, 2).unwrap();
        let t = RasterTile::new(id, tr, 1, Bands::U8((0..6).collect()), q).unwrap();
        let tt = t.transformed(Dihedral { transpose: true, flip_x: false, flip_y: false });
        assert_eq!((tt.width(), tt.height()), (2, 3));
        assert_eq!(tt.as_u8().unwrap(), &[0, 3, 1, 4, 2, 5]);
        let f = t.transformed(Dihedral { transpose: false, flip_x: true, flip_y: false });
        assert_eq!(f.as_u8().unwrap(), &[2, 1, 0, 5, 4, 3]);
    }
}
