//! Random convolutional features (MOSAIKS): a fixed bank of Gaussian filters
//! applied at every pixel, rectified, optionally mean-pooled over an object.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geo::{reflect, Bands, BitMask, RasterTile};

use super::ScoreError;

/// Pixels per im2col block.
const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankParams {
    pub seed: u64,
    pub filter_count: usize,
    pub patch_size: usize,
    pub channels: usize,
}

impl Default for BankParams {
    fn default() -> Self {
        Self { seed: 7, filter_count: 256, patch_size: 5, channels: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MosaiksBank {
    params: BankParams,
    /// filter_count rows of patch_size * patch_size * channels weights,
    /// ordered (dy, dx, channel).
    filters: Vec<f32>,
    biases: Vec<f32>,
}

impl MosaiksBank {
    pub fn new(params: BankParams) -> Result<Self, ScoreError> {
        if params.filter_count == 0 || params.channels == 0 || params.patch_size % 2 == 0 {
            return Err(ScoreError::Config(format!(
                "bank needs filters, channels and an odd patch size, got {params:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let k = params.patch_size * params.patch_size * params.channels;
        let filters = (0..params.filter_count * k).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(Self { params, filters, biases: vec![0.0; params.filter_count] })
    }

    pub fn params(&self) -> BankParams {
        self.params
    }

    pub fn filter_count(&self) -> usize {
        self.params.filter_count
    }

    /// Length of one flattened patch.
    pub fn patch_len(&self) -> usize {
        self.params.patch_size * self.params.patch_size * self.params.channels
    }

    pub fn filters(&self) -> &[f32] {
        &self.filters
    }

    pub fn biases(&self) -> &[f32] {
        &self.biases
    }

    fn check(&self, tile: &RasterTile) -> Result<(), ScoreError> {
        if tile.channels != self.params.channels {
            return Err(ScoreError::Input(format!(
                "tile has {} channels, bank expects {}",
                tile.channels, self.params.channels
            )));
        }
        Ok(())
    }

    /// Streams rectified features in row-major pixel blocks:
    /// `f(first_pixel, features)` with `features` of shape (block, filter_count).
    pub fn for_each_block(&self, tile: &RasterTile, mut f: impl FnMut(usize, &[f32])) -> Result<(), ScoreError> {
        self.check(tile)?;
        let (w, h) = (tile.width(), tile.height());
        let n = w * h;
        let k = self.patch_len();
        let nf = self.params.filter_count;
        let ch = self.params.channels;
        let ps = self.params.patch_size as i64;
        let half = ps / 2;
        let input: Vec<f32> = match &tile.bands {
            Bands::U8(v) => v.iter().map(|&b| f32::from(b) / 255.0).collect(),
            Bands::F32(v) => v.clone(),
        };
        let mut cols = vec![0f32; BLOCK * k];
        let mut out = vec![0f32; BLOCK * nf];
        let mut start = 0;
        while start < n {
            let m = BLOCK.min(n - start);
            for p in 0..m {
                let (c, r) = (((start + p) % w) as i64, ((start + p) / w) as i64);
                let dst = &mut cols[p * k..(p + 1) * k];
                let mut o = 0;
                for dy in 0..ps {
                    let rr = reflect(r + dy - half, h as i64) as usize;
                    for dx in 0..ps {
                        let cc = reflect(c + dx - half, w as i64) as usize;
                        let src = (rr * w + cc) * ch;
                        dst[o..o + ch].copy_from_slice(&input[src..src + ch]);
                        o += ch;
                    }
                }
            }
            // out (m x nf) = cols (m x k) * filters^T (k x nf)
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    k,
                    nf,
                    1.0,
                    cols.as_ptr(),
                    k as isize,
                    1,
                    self.filters.as_ptr(),
                    1,
                    k as isize,
                    0.0,
                    out.as_mut_ptr(),
                    nf as isize,
                    1,
                );
            }
            for row in out[..m * nf].chunks_exact_mut(nf) {
                for (v, b) in row.iter_mut().zip(&self.biases) {
                    *v = (*v - b).max(0.0);
                }
            }
            f(start, &out[..m * nf]);
            start += m;
        }
        Ok(())
    }

    /// Per-pixel features, row-major (pixel, filter).
    pub fn pixel_features(&self, tile: &RasterTile) -> Result<Vec<f32>, ScoreError> {
        let nf = self.params.filter_count;
        let mut all = vec![0f32; tile.width() * tile.height() * nf];
        self.for_each_block(tile, |start, block| all[start * nf..start * nf + block.len()].copy_from_slice(block))?;
        Ok(all)
    }

    /// Per-pixel features as an f32 raster with one channel per filter.
    pub fn feature_tile(&self, tile: &RasterTile) -> Result<RasterTile, ScoreError> {
        let f = self.pixel_features(tile)?;
        Ok(RasterTile::new(tile.tile_id, tile.transform, self.params.filter_count, Bands::F32(f), tile.quarter)?)
    }

    /// Mean of the pixel features over the set pixels of `mask`.
    pub fn object_features(&self, tile: &RasterTile, mask: &BitMask) -> Result<Vec<f32>, ScoreError> {
        if mask.width() != tile.width() || mask.height() != tile.height() {
            return Err(ScoreError::Input("mask and tile dimensions differ".into()));
        }
        let count = mask.count_ones();
        if count == 0 {
            return Err(ScoreError::Input("object mask is empty".into()));
        }
        let nf = self.params.filter_count;
        let mut sum = vec![0f64; nf];
        self.for_each_block(tile, |start, block| {
            for (p, row) in block.chunks_exact(nf).enumerate() {
                if mask.get_index(start + p) {
                    for (s, &v) in sum.iter_mut().zip(row) {
                        *s += f64::from(v);
                    }
                }
            }
        })?;
        Ok(sum.into_iter().map(|s| (s / count as f64) as f32).collect())
    }
}
