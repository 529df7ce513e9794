//! Scorers map an imagery tile to a two-class per-pixel probability raster.

mod linear;
mod mosaiks;

pub use linear::{train_linear_scorer, LinearScorer, Target, TrainConfig, TrainSample, TrainingReport};
pub use mosaiks::{BankParams, MosaiksBank};

use std::path::{Path, PathBuf};

use crate::geo::{imagery_stem, read_raster, tile_global_origin, BitMask, GeoError, QuadGrid, RasterTile, TileId};

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("scorer configuration: {0}")]
    Config(String),
    #[error("scorer input: {0}")]
    Input(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("scorer file {path}: {msg}")]
    Persist { path: PathBuf, msg: String },
}

pub trait Scorer: Send + Sync {
    /// Background and target.
    fn class_count(&self) -> usize {
        2
    }

    /// Probability raster with `[1 - p, p]` per pixel and the input's dims.
    fn score(&self, tile: &RasterTile) -> Result<RasterTile, ScoreError>;
}

/// Mask of pixels whose target probability is at least `threshold`.
pub fn binarize(prob: &RasterTile, threshold: f64) -> Result<BitMask, ScoreError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ScoreError::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    let p = prob.target_probabilities()?;
    let w = prob.width();
    Ok(BitMask::from_fn(w, prob.height(), |c, r| f64::from(p[r * w + c]) >= threshold))
}

/// Reads precomputed probability rasters laid out like imagery
/// (`<root>/<quarter>/<z_x_y>`), so outputs of external models can be plugged
/// in. Windows spanning several tiles are assembled.
#[derive(Debug, Clone)]
pub struct FileScorer {
    root: PathBuf,
    grid: QuadGrid,
}

impl FileScorer {
    pub fn new(root: &Path, grid: QuadGrid) -> Self {
        Self { root: root.to_path_buf(), grid }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl Scorer for FileScorer {
    fn score(&self, tile: &RasterTile) -> Result<RasterTile, ScoreError> {
        let q = i64::from(self.grid.quad_size);
        let (tx, ty) = tile_global_origin(self.grid, tile.tile_id);
        let (c, r) = self.grid.transform(tile.tile_id).mercator_to_pixel(tile.transform.origin_x, tile.transform.origin_y);
        let (gx, gy) = (tx + c.round() as i64, ty + r.round() as i64);
        let (w, h) = (tile.width(), tile.height());
        let mut out = vec![0f32; w * h];
        for by in gy.div_euclid(q)..=(gy + h as i64 - 1).div_euclid(q) {
            for bx in gx.div_euclid(q)..=(gx + w as i64 - 1).div_euclid(q) {
                if bx < 0 || by < 0 {
                    return Err(ScoreError::Input("window reaches outside the grid".into()));
                }
                let id = TileId::new(self.grid.zoom(), bx as u32, by as u32)?;
                let stored = read_raster(&imagery_stem(&self.root, tile.quarter, id))?;
                if stored.width() as i64 != q || stored.height() as i64 != q {
                    return Err(ScoreError::Input(format!("probability tile {id} is not {q} px")));
                }
                let p = stored.target_probabilities()?;
                let (ox, oy) = (bx * q, by * q);
                for row in gy.max(oy)..(gy + h as i64).min(oy + q) {
                    for col in gx.max(ox)..(gx + w as i64).min(ox + q) {
                        out[((row - gy) * w as i64 + (col - gx)) as usize] = p[((row - oy) * q + (col - ox)) as usize];
                    }
                }
            }
        }
        Ok(RasterTile::probability(tile.tile_id, tile.transform, &out, tile.quarter)?)
    }
}

/// Scorer backed by a closure returning target probabilities; used for
/// oracles built from ground truth.
pub struct FnScorer<F>(pub F);

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&RasterTile) -> Result<Vec<f32>, ScoreError> + Send + Sync,
{
    fn score(&self, tile: &RasterTile) -> Result<RasterTile, ScoreError> {
        let p = (self.0)(tile)?;
        if p.len() != tile.width() * tile.height() {
            return Err(ScoreError::Input(format!("oracle returned {} values for {} pixels", p.len(), tile.width() * tile.height())));
        }
        Ok(RasterTile::probability(tile.tile_id, tile.transform, &p, tile.quarter)?)
    }
}
